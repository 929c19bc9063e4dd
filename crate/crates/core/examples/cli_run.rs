// Drives the command-line front end: a config run and a direct subcommand.

use magsuper::cli::main_with_args;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("magsuper-cli-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let cfg = dir.join("parseval.json");
    std::fs::write(&cfg, r#"{"experiment": "parseval", "grid": {"d": 1, "N": 32, "L": 4}, "seed": 3}"#)?;
    let out = dir.to_str().ok_or("non-utf8 temp dir")?;
    let code = main_with_args(["magsuper", "--workers", "2", "--out", out, "run", cfg.to_str().ok_or("path")?]);
    println!("run exited with {code}; wrote {:?}", std::fs::read_dir(&dir)?.filter_map(|e| e.ok()).map(|e| e.file_name()).collect::<Vec<_>>());
    if code != 0 {
        return Err(format!("exit code {code}").into());
    }

    // a malformed config is a config error (exit 3)
    std::fs::write(&cfg, r#"{"experiment": "parseval", "grid": {"d": 1, "N": 30, "L": 4}}"#)?;
    let bad = main_with_args(["magsuper", "--out", out, "run", cfg.to_str().ok_or("path")?]);
    println!("bad grid exited with {bad}");
    std::fs::remove_dir_all(&dir)?;
    if bad != 3 {
        return Err(format!("expected exit 3, got {bad}").into());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("cli example");
}
