//! Command-line front end: one subcommand per operation plus a config-driven runner.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{super_bound_probe, ProbeMode, SobolevParams};
use crate::channels::{apply_channel, choi_check, choi_transpose_control, kraus_verify, ChannelSpec};
use crate::error::{Error, Result};
use crate::frames::{FrameCoefficients, FrameIndex, FrameIndexBox, FrameSystem};
use crate::geometry::MagneticField;
use crate::io::{self, Array};
use crate::phase_space::{l2_norm, make_grid, sample_symbol, GridSpec, KernelGrid, SymbolGrid};
use crate::rng::{random_kernel, random_psd, seeded};
use crate::superop::{
    apply_super_tensor, beals_commutator, beals_identity, beals_residual, dequantize_matrix, matrix_elements, semi_super_product,
    super_product, super_weyl_factors, super_weyl_kernel, Generator, SuperKernel, SuperOperator, SuperSymbolGrid, TensorSuperSymbol,
};
use crate::weights::{builtin_corpus, lemma_suite, LemmaReport, WeightSpec};
use crate::weyl::{moyal, weyl_dequantize, weyl_kernel, QuantizationContext};
use crate::window::FrameWindow;
use crate::C64;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_CAPABILITY: i32 = 4;

pub const EXPERIMENTS: [&str; 10] = ["parseval", "roundtrip", "odot", "matrix-decay", "moyal", "products", "bound-probe", "beals", "channel", "weights"];

#[derive(Debug, Parser)]
#[command(name = "magsuper", version, about = "Magnetic pseudo-differential super calculus on a phase-space grid")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Grid as d,N,L
    #[arg(long, global = true, value_parser = parse_grid)]
    pub grid: Option<GridSpec>,
    /// zero | constant:b | expr:<B12 expression>
    #[arg(long, global = true)]
    pub field: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Weyl kernel of a symbol (expression or MPDO1 file)
    Quantize { symbol: String },
    /// Symbol of an MPDO1 kernel
    Dequantize { input: PathBuf },
    /// Magnetic Moyal product of two symbols
    Moyal { left: String, right: String },
    /// Frame coefficients of a sampled function
    FrameAnalyze {
        function: String,
        /// full | default | R_pos,R_mom
        #[arg(long = "box", default_value = "full")]
        bx: String,
    },
    /// Function from an MPDO1 coefficient file
    FrameSynthesize { input: PathBuf },
    /// Frame matrix of left ⊗ right
    SuperMatrix {
        left: String,
        right: String,
        #[arg(long = "box", default_value = "default")]
        bx: String,
    },
    /// Applies a super operator to an MPDO1 kernel
    SuperApply {
        input: PathBuf,
        /// MPDO1S frame matrix; otherwise --left/--right symbols
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        left: Option<String>,
        #[arg(long)]
        right: Option<String>,
    },
    /// Beals identity residuals and commutator decay
    Beals {
        left: String,
        right: String,
        /// Probe indices α,α′;… (d = 1)
        #[arg(long)]
        probe: Option<String>,
    },
    /// Boundedness / Schatten probe
    BoundProbe {
        left: String,
        right: String,
        /// bounded | compact | schatten:p | trace
        #[arg(long, default_value = "bounded")]
        mode: String,
        /// s_L,s_R,s_L′,s_R′
        #[arg(long)]
        sobolev: Option<String>,
    },
    /// Kraus channel from a momentum partition
    ChannelRun {
        /// JSON spec {count, band, field, checks}
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        band: Option<f64>,
    },
    /// Tempered-weight lemma checks on the builtin corpus or one weight literal
    Weights {
        /// JSON weight literal
        #[arg(long)]
        weight: Option<String>,
        /// Ambient dimension for --weight
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Runs a JSON experiment config
    Run { config: PathBuf },
}

fn parse_grid(s: &str) -> std::result::Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected d,N,L, got '{s}'"));
    }
    let d = parts[0].trim().parse::<usize>().map_err(|e| e.to_string())?;
    let n = parts[1].trim().parse::<usize>().map_err(|e| e.to_string())?;
    let l = parts[2].trim().parse::<f64>().map_err(|e| e.to_string())?;
    make_grid(d, n, l).map_err(|e| e.to_string())
}

/// Field from the flag syntax.
pub fn parse_field(s: &str, d: usize) -> Result<MagneticField> {
    let bad = |msg: String| Error::Config { path: "--field".into(), msg };
    if s == "zero" {
        return MagneticField::zero(d);
    }
    if let Some(b) = s.strip_prefix("constant:") {
        let b: f64 = b.trim().parse().map_err(|_| bad(format!("bad constant '{b}'")))?;
        return MagneticField::for_dim(d, b);
    }
    if let Some(e) = s.strip_prefix("expr:") {
        if d != 2 {
            return Err(Error::Capability("expression fields need d = 2".into()));
        }
        return MagneticField::from_expr(e);
    }
    Err(bad(format!("expected zero, constant:b or expr:<B12>, got '{s}'")))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Truncation { .. } | Error::DecayScreen { .. } | Error::Quadrature { .. } => EXIT_TOLERANCE,
        Error::Capability(_) | Error::DimensionCap { .. } | Error::TermCap { .. } => EXIT_CAPABILITY,
        _ => EXIT_CONFIG,
    }
}

pub fn error_json(e: &Error) -> Value {
    let mut v = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": exit_code(e) });
    if let Error::Config { path, .. } = e {
        v["path"] = json!(path);
    }
    v
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Below,
    AtLeast,
    AtMost,
    Holds,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, tol, relation: Relation::Below, pass: value < tol }
    }
    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, tol: bound, relation: Relation::AtLeast, pass: value >= bound }
    }
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, tol: bound, relation: Relation::AtMost, pass: value <= bound }
    }
    pub fn holds(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, tol: 1.0, relation: Relation::Holds, pass: ok }
    }
}

/// The deterministic part of a run. Wall time and thread count live in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub input_digest: String,
    pub seed: u64,
    pub config: Value,
    pub outputs: Value,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub package: &'static str,
    pub version: &'static str,
    pub experiment: String,
    pub grid: Option<GridSpec>,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
    pub files: Vec<String>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub tables: Vec<(String, String)>,
    pub arrays: Vec<(String, Vec<u8>)>,
    pub grid: Option<GridSpec>,
}

impl RunOutput {
    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes")
    }

    /// Writes report.json, tables and arrays, then manifest.json.
    pub fn write(&self, dir: &Path, workers: usize, wall: f64) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        let mut files = vec!["report.json".to_string()];
        std::fs::write(dir.join("report.json"), self.report_json())?;
        for (name, body) in &self.tables {
            std::fs::write(dir.join(name), body)?;
            files.push(name.clone());
        }
        for (name, body) in &self.arrays {
            std::fs::write(dir.join(name), body)?;
            files.push(name.clone());
        }
        let manifest = Manifest {
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            experiment: self.report.experiment.clone(),
            grid: self.grid,
            seed: self.report.seed,
            workers,
            wall_time_s: wall,
            files: files.clone(),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
        files.push("manifest.json".into());
        Ok(files)
    }
}

fn digest(config: &Value, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(config).expect("value serializes").as_bytes());
    h.update(seed.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn finish(experiment: &str, cfg: &Value, seed: u64, grid: Option<GridSpec>, outputs: Value, checks: Vec<Check>) -> Outcome {
    let pass = checks.iter().all(|c| c.pass);
    Outcome {
        out: RunOutput {
            report: Report { experiment: experiment.into(), input_digest: digest(cfg, seed), seed, config: cfg.clone(), outputs, checks, pass },
            tables: vec![],
            arrays: vec![],
            grid,
        },
    }
}

struct Outcome {
    out: RunOutput,
}

impl Outcome {
    fn table(mut self, name: &str, body: String) -> Self {
        self.out.tables.push((name.into(), body));
        self
    }
    fn array(mut self, name: &str, body: Vec<u8>) -> Self {
        self.out.arrays.push((name.into(), body));
        self
    }
}

// ---------------------------------------------------------------------------
// Config access with JSON-pointer error paths

struct Cfg<'a> {
    obj: &'a Map<String, Value>,
    base: String,
    used: std::cell::RefCell<BTreeSet<String>>,
}

impl<'a> Cfg<'a> {
    fn new(v: &'a Value, base: &str) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::Config { path: if base.is_empty() { "/".into() } else { base.into() }, msg: "expected an object".into() })?;
        Ok(Self { obj, base: base.into(), used: Default::default() })
    }

    fn path(&self, key: &str) -> String {
        format!("{}/{}", self.base, key)
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.used.borrow_mut().insert(key.into());
        self.obj.get(key)
    }

    fn opt<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone()).map(Some).map_err(|e| Error::Config { path: self.path(key), msg: e.to_string() }),
        }
    }

    fn get<T: DeserializeOwned>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn sub(&self, key: &str) -> Result<Option<Cfg<'a>>> {
        match self.raw(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => Cfg::new(v, &self.path(key)).map(Some),
        }
    }

    fn done(&self) -> Result<()> {
        let used = self.used.borrow();
        if let Some(k) = self.obj.keys().find(|k| !used.contains(*k)) {
            return Err(Error::Config { path: self.path(k), msg: "unknown key".into() });
        }
        Ok(())
    }

    fn config_err(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::Config { path: self.path(key), msg: msg.into() }
    }
}

/// Settings shared by every experiment: grid, field and seed.
struct Setup {
    grid: GridSpec,
    ctx: QuantizationContext,
    seed: u64,
    field_label: String,
}

fn setup(c: &Cfg, default_grid: (usize, usize, f64), seed_override: Option<u64>) -> Result<Setup> {
    let grid = match c.sub("grid")? {
        Some(g) => {
            let d: usize = g.get("d", default_grid.0)?;
            let n: usize = g.get("N", default_grid.1)?;
            let l: f64 = g.get("L", default_grid.2)?;
            g.done()?;
            make_grid(d, n, l).map_err(|e| c.config_err("grid", e.to_string()))?
        }
        None => make_grid(default_grid.0, default_grid.1, default_grid.2)?,
    };
    let (field, field_label) = match c.sub("field")? {
        None => (MagneticField::zero(grid.d)?, "zero".to_string()),
        Some(f) => {
            let kind: String = f.opt("kind")?.ok_or_else(|| f.config_err("kind", "missing field kind"))?;
            let out = match kind.as_str() {
                "zero" => (MagneticField::zero(grid.d)?, "zero".into()),
                "constant" => {
                    let b: f64 = f.opt("b")?.ok_or_else(|| f.config_err("b", "missing constant b"))?;
                    (MagneticField::for_dim(grid.d, b)?, format!("constant:{b}"))
                }
                "expr" => {
                    let e: String = f.opt("B12")?.ok_or_else(|| f.config_err("B12", "missing expression"))?;
                    if grid.d != 2 {
                        return Err(Error::Capability("expression fields need d = 2".into()));
                    }
                    (MagneticField::from_expr(&e)?, format!("expr:{e}"))
                }
                other => return Err(f.config_err("kind", format!("unknown field kind '{other}'"))),
            };
            f.done()?;
            out
        }
    };
    let seed = match seed_override {
        Some(s) => {
            c.raw("seed");
            s
        }
        None => c.get("seed", 0u64)?,
    };
    let ctx = QuantizationContext::new(grid, &field)?;
    Ok(Setup { grid, ctx, seed, field_label })
}

fn gaussian_expr(d: usize, x0: f64, k0: f64) -> String {
    if d == 1 {
        format!("exp(-((x-({x0}))^2+(xi-({k0}))^2)/2)")
    } else {
        format!("exp(-((x1-({x0}))^2+x2^2+(xi1-({k0}))^2+xi2^2)/2)")
    }
}

fn gaussian_fn_expr(d: usize) -> String {
    if d == 1 { "exp(-x^2/2)".into() } else { "exp(-(x1^2+x2^2)/2)".into() }
}

fn sample_fn_expr(src: &str, grid: &GridSpec) -> Result<Vec<C64>> {
    let vars: &[&str] = if grid.d == 1 { &["x", "x1"] } else { &["x1", "x2"] };
    let e = crate::expr::Expr::parse(src, vars)?;
    (0..grid.points())
        .map(|p| {
            let x = grid.position(p);
            let vals = if grid.d == 1 { [x[0], x[0]] } else { [x[0], x[1]] };
            e.eval_checked(&vals).map(|v| C64::new(v, 0.0))
        })
        .collect()
}

fn parse_box(s: &str, frames: &FrameSystem) -> Result<FrameIndexBox> {
    let b = match s {
        "full" => frames.full_box(),
        "default" => frames.default_box(),
        other => {
            let p: Vec<&str> = other.split(',').collect();
            let bad = || Error::Config { path: "box".into(), msg: format!("expected full, default or R_pos,R_mom; got '{other}'") };
            if p.len() != 2 {
                return Err(bad());
            }
            FrameIndexBox::new(p[0].trim().parse().map_err(|_| bad())?, p[1].trim().parse().map_err(|_| bad())?)
        }
    };
    frames.check_box(&b)?;
    Ok(b)
}

fn box_from_value(c: &Cfg, key: &str, frames: &FrameSystem, default: &str) -> Result<FrameIndexBox> {
    let s = match c.raw(key) {
        None | Some(Value::Null) => default.to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(a)) if a.len() == 2 => format!("{},{}", a[0], a[1]),
        Some(_) => return Err(c.config_err(key, "expected \"full\", \"default\" or [R_pos, R_mom]")),
    };
    parse_box(&s, frames).map_err(|e| match e {
        Error::Config { msg, .. } => c.config_err(key, msg),
        other => other,
    })
}

fn tensor(left: &str, right: &str, grid: GridSpec) -> Result<TensorSuperSymbol> {
    TensorSuperSymbol::single(sample_symbol(left, grid)?, sample_symbol(right, grid)?)
}

fn rel(a: &KernelGrid, b: &KernelGrid) -> f64 {
    a.rel_diff(b)
}

// ---------------------------------------------------------------------------
// Experiments

fn exp_parseval(c: &Cfg, seed: Option<u64>) -> Result<Outcome> {
    let s = setup(c, (1, 64, 8.0), seed)?;
    let function: String = c.get("function", gaussian_fn_expr(s.grid.d))?;
    let symbol: String = c.get("symbol", gaussian_expr(s.grid.d, 0.0, 0.0))?;
    let tol: f64 = c.get("tol", 1e-8)?;
    let hs: bool = c.get("hs", true)?;
    let frames = FrameSystem::new(&s.ctx, FrameWindow::standard(s.grid.d))?;
    let bx = box_from_value(c, "box", &frames, "full")?;
    c.done()?;
    let f = sample_fn_expr(&function, &s.grid)?;
    let coeffs = frames.analyze(&f, &bx)?;
    let norm2 = l2_norm(&s.grid, &f).powi(2);
    let fn_res = (coeffs.energy() - norm2).abs() / norm2;
    let mut checks = vec![Check::below("function_parseval_residual", fn_res, tol)];
    let mut outputs = json!({ "box": bx, "coefficients": coeffs.values.len(), "function_energy": coeffs.energy(), "function_norm2": norm2, "function_residual": fn_res, "field": s.field_label });
    if hs {
        let k = weyl_kernel(&sample_symbol(&symbol, s.grid)?, &s.ctx)?;
        let e = frames.hs_coefficient_energy(&k, &bx)?;
        let n2 = k.hs_norm().powi(2);
        let r = (e - n2).abs() / n2;
        outputs["hs_energy"] = json!(e);
        outputs["hs_norm2"] = json!(n2);
        outputs["hs_residual"] = json!(r);
        checks.push(Check::below("hs_parseval_residual", r, tol));
    }
    let csv = coeffs.to_csv(s.grid.d);
    let bin = io::encode(&Array::Coefficients(s.grid, coeffs));
    Ok(finish("parseval", &Value::Null, s.seed, Some(s.grid), outputs, checks).table("coefficients.csv", csv).array("coefficients.mpdo", bin))
}

fn exp_roundtrip(c: &Cfg, seed: Option<u64>) -> Result<Outcome> {
    let s = setup(c, (1, 64, 8.0), seed)?;
    let symbol: String = c.get("symbol", gaussian_expr(s.grid.d, 0.0, 0.0))?;
    let tol: f64 = c.get("tol", if s.ctx.is_trivial() { 1e-10 } else { 1e-6 })?;
    c.done()?;
    let phi = sample_symbol(&symbol, s.grid)?;
    let k = weyl_kernel(&phi, &s.ctx)?;
    let back = weyl_dequantize(&k, &s.ctx)?;
    let r = back.rel_diff(&phi);
    let outputs = json!({ "relative_error": r, "hs_norm": k.hs_norm(), "symbol_l2": phi.norm_l2(), "field": s.field_label });
    let csv = io::symbol_slice_csv(&back, s.grid.n / 2);
    Ok(finish("roundtrip", &Value::Null, s.seed, Some(s.grid), outputs, vec![Check::below("roundtrip_relative_error", r, tol)])
        .table("symbol_slice.csv", csv)
        .array("kernel.mpdo", io::encode(&Array::Kernel(k))))
}

fn exp_odot(c: &Cfg, seed: Option<u64>) -> Result<Outcome> {
    let s = setup(c, (1, 16, 4.0), seed)?;
    let left: String = c.get("left", gaussian_expr(1, 0.3, 0.0))?;
    let right: String = c.get("right", gaussian_expr(1, -0.2, 0.4))?;
    let tol: f64 = c.get("tol", 1e-6)?;
    c.done()?;
    if s.grid.d != 1 {
        return Err(Error::Capability("the super-kernel route needs d = 1".into()));
    }
    let phi = tensor(&left, &right, s.grid)?;
    let full = super_weyl_kernel(&SuperSymbolGrid::from_tensor(&phi)?, &s.ctx)?;
    let fac = SuperKernel::from_factors(s.grid, &super_weyl_factors(&phi, &s.ctx)?)?;
    let kdiff = (&full.mat - &fac.mat).iter().map(|v| v.norm()).fold(0.0, f64::max) / fac.mat.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let t = random_kernel(&mut seeded(s.seed), s.grid);
    let a = full.apply(&t)?;
    let b = apply_super_tensor(&phi, &t, &s.ctx)?;
    let r = rel(&a, &b);
    let outputs = json!({ "route_relative_difference": r, "kernel_max_relative_difference": kdiff });
    Ok(finish("odot", &Value::Null, s.seed, Some(s.grid), outputs, vec![Check::below("odot_route_difference", r, tol), Check::below("kernel_vs_factors", kdiff, tol)]))
}

fn exp_matrix_decay(c: &Cfg, seed: Option<u64>) -> Result<Outcome> {
    let s = setup(c, (1, 64, 8.0), seed)?;
    let left: String = c.get("left", gaussian_expr(s.grid.d, 0.0, 0.0))?;
    let right: String = c.get("right", gaussian_expr(s.grid.d, 0.0, 0.0))?;
    let required: f64 = c.get("required_order", 6.0)?;
    let tol: f64 = c.get("tol", 1e-4)?;
    let weight: Option<WeightSpec> = c.opt("weight")?;
    let frames = Arc::new(FrameSystem::new(&s.ctx, FrameWindow::standard(s.grid.d))?);
    let bx = box_from_value(c, "box", &frames, "default")?;
    let export_box = box_from_value(c, "export_box", &frames, "2,2")?;
    c.done()?;
    let mut phi = tensor(&left, &right, s.grid)?;
    if let Some(w) = &weight {
        phi = phi.with_weight(w.build(4 * s.grid.d)?);
    }
    let op = SuperOperator::tensor(phi.clone(), &s.ctx)?;
    let m = matrix_elements(&op, &frames, &bx)?;
    let fit = m.decay_fit(phi.weight.as_ref())?;
    let back = dequantize_matrix(&m, &frames, &s.ctx)?;
    let t = random_kernel(&mut seeded(s.seed), s.grid);
    let direct = apply_super_tensor(&phi, &t, &s.ctx)?;
    let r = rel(&apply_super_tensor(&back, &t, &s.ctx)?, &direct);
    // the full box has ~10^8 entries above the floor; the file covers a sub-box
    let small = matrix_elements(&op, &frames, &export_box)?;
    let sparse = io::encode_sparse(&small);
    let reread = io::decode_sparse(&sparse)?;
    let io_diff = small.entries().iter().map(|(k, v)| (reread.entry(k[0], k[1], k[2], k[3]) - v).norm()).fold(0.0, f64::max);
    let mut env = String::from("shell,max_abs\n");
    for (b, v) in &fit.envelope {
        env.push_str(&format!("{b},{v:e}\n"));
    }
    let outputs = json!({ "box": bx, "n_star": fit.n_star, "fit": fit, "dequantize_relative_error": r, "dequantize_terms": back.len(), "export_box": export_box, "exported_entries": small.nnz(), "sparse_io_max_error": io_diff });
    let checks = vec![
        Check::at_least("decay_order", fit.n_star, required),
        Check::below("dequantize_round_trip", r, tol),
        Check::at_most("sparse_io_round_trip", io_diff, 0.0),
    ];
    Ok(finish("matrix-decay", &Value::Null, s.seed, Some(s.grid), outputs, checks).table("envelope.csv", env).array("matrix.mpdo1s", sparse))
}

fn exp_moyal(c: &Cfg, seed: Option<u64>) -> Result<Outcome> {
    let s = setup(c, (2, 16, 4.0), seed)?;
    let d = s.grid.d;
    let a: String = c.get("a", gaussian_expr(d, 0.3, 0.0))?;
    let b: String = c.get("b", gaussian_expr(d, -0.2, 0.5))?;
    let cc: String = c.get("c", gaussian_expr(d, 0.0, -0.4))?;
    let tol: f64 = c.get("tol", 1e-8)?;
    c.done()?;
    let (pa, pb, pc) = (sample_symbol(&a, s.grid)?, sample_symbol(&b, s.grid)?, sample_symbol(&cc, s.grid)?);
    let ab = moyal(&pa, &pb, &s.ctx)?;
    let lhs = moyal(&ab, &pc, &s.ctx)?;
    let rhs = moyal(&pa, &moyal(&pb, &pc, &s.ctx)?, &s.ctx)?;
    let assoc = lhs.rel_diff(&rhs);
    let ka = weyl_kernel(&pa, &s.ctx)?;
    let kb = weyl_kernel(&pb, &s.ctx)?;
    let oracle = rel(&weyl_kernel(&ab, &s.ctx)?, &ka.compose(&kb)?);
    let outputs = json!({ "associativity": assoc, "composition_oracle": oracle, "field": s.field_label });
    Ok(finish("moyal", &Value::Null, s.seed, Some(s.grid), outputs, vec![Check::below("associativity", assoc, tol), Check::below("composition_oracle", oracle, tol)])
        .table("moyal_slice.csv", io::symbol_slice_csv(&ab, s.grid.n / 2)))
}

fn exp_products(c: &Cfg, seed: Option<u64>) -> Result<Outcome> {
    let s = setup(c, (1, 32, 4.0), seed)?;
    let d = s.grid.d;
    let tol_super: f64 = c.get("tol_super", 1e-6)?;
    let tol_semi: f64 = c.get("tol_semi", 1e-8)?;
    let min_gap: f64 = c.get("ordering_gap", 1e-3)?;
    c.done()?;
    let g = s.grid;
    let phi = tensor(&gaussian_expr(d, 0.3, 0.1), &gaussian_expr(d, -0.2, 0.4), g)?;
    let psi = tensor(&gaussian_expr(d, 0.0, -0.3), &gaussian_expr(d, 0.5, 0.0), g)?;
    let t = random_kernel(&mut seeded(s.seed), g);
    let prod = super_product(&phi, &psi, &s.ctx)?;
    let rhs = apply_super_tensor(&phi, &apply_super_tensor(&psi, &t, &s.ctx)?, &s.ctx)?;
    let composition = rel(&apply_super_tensor(&prod, &t, &s.ctx)?, &rhs);
    let (a, b) = (&phi.terms[0], &psi.terms[0]);
    let wrong = TensorSuperSymbol::single(moyal(&a.left, &b.left, &s.ctx)?, moyal(&a.right, &b.right, &s.ctx)?)?;
    let gap = rel(&apply_super_tensor(&wrong, &t, &s.ctx)?, &rhs);
    let chi = sample_symbol(&gaussian_expr(d, 0.1, 0.2), g)?;
    let ident = semi_super_product(&TensorSuperSymbol::identity(g), &chi, &s.ctx)?.rel_diff(&chi);
    // •^B against op(φ_L) op(χ) op(φ_R)
    let semi = semi_super_product(&phi, &chi, &s.ctx)?;
    let kk = weyl_kernel(&phi.terms[0].left, &s.ctx)?.compose(&weyl_kernel(&chi, &s.ctx)?)?.compose(&weyl_kernel(&phi.terms[0].right, &s.ctx)?)?;
    let semi_oracle = semi.rel_diff(&weyl_dequantize(&kk, &s.ctx)?);
    let mut checks = vec![
        Check::below("super_product_composition", composition, tol_super),
        Check::at_least("unreversed_right_leg_gap", gap, min_gap),
        Check::below("semi_identity", ident, tol_semi),
        Check::below("semi_sandwich_oracle", semi_oracle, tol_semi),
    ];
    let mut outputs = json!({ "composition": composition, "ordering_gap": gap, "semi_identity": ident, "semi_oracle": semi_oracle, "field": s.field_label });
    if s.ctx.is_trivial() {
        // momentum-only symbols are commuting Fourier multipliers: (f⊗h)•k = fkh
        let m = |sh: f64| SymbolGrid::from_fn(g, move |_, xi| C64::new((-(xi.iter().map(|v| (v - sh) * (v - sh)).sum::<f64>()) / 4.0).exp(), 0.0));
        let (f, h, k) = (m(0.5), m(-0.3), m(0.0));
        let out = semi_super_product(&TensorSuperSymbol::single(f.clone(), h.clone())?, &k, &s.ctx)?;
        let mult = out.rel_diff(&f.mul(&k)?.mul(&h)?);
        outputs["semi_multiplier"] = json!(mult);
        checks.push(Check::below("semi_multiplier", mult, tol_semi));
    }
    Ok(finish("products", &Value::Null, s.seed, Some(g), outputs, checks))
}

fn parse_mode(s: &str) -> Result<ProbeMode> {
    Ok(match s {
        "bounded" => ProbeMode::Bounded,
        "compact" => ProbeMode::Compact,
        "trace" | "trace_class_from_bounded" => ProbeMode::TraceClassFromBounded,
        other => match other.strip_prefix("schatten:") {
            Some(p) => ProbeMode::Schatten { p: if p == "inf" { f64::INFINITY } else { p.parse().map_err(|_| Error::Config { path: "mode".into(), msg: format!("bad p '{p}'") })? } },
            None => return Err(Error::Config { path: "mode".into(), msg: format!("unknown mode '{other}'") }),
        },
    })
}

fn mode_value(c: &Cfg) -> Result<ProbeMode> {
    match c.raw("mode") {
        None | Some(Value::Null) => Ok(ProbeMode::Bounded),
        Some(Value::String(s)) => parse_mode(s).map_err(|e| match e {
            Error::Config { msg, .. } => c.config_err("mode", msg),
            o => o,
        }),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| c.config_err("mode", e.to_string())),
    }
}

fn bound_probe_at(grid: GridSpec, s: &Setup, left: &str, right: &str, mode: ProbeMode, params: SobolevParams) -> Result<crate::analysis::BoundReport> {
    let ctx = if grid == s.grid { s.ctx.clone() } else { QuantizationContext::new(grid, s.ctx.field())? };
    super_bound_probe(&tensor(left, right, grid)?, mode, params, &ctx, s.seed)
}

fn headline(r: &crate::analysis::BoundReport) -> f64 {
    match r.mode {
        ProbeMode::Schatten { p } => r.schatten.get(&schatten_key(p)).copied().unwrap_or(r.operator_norm),
        ProbeMode::TraceClassFromBounded => r.trace_norm_sup.unwrap_or(r.operator_norm),
        _ => r.operator_norm,
    }
}

fn schatten_key(p: f64) -> String {
    if p.is_infinite() { "inf".into() } else { format!("{p}") }
}

fn exp_bound_probe(c: &Cfg, seed: Option<u64>) -> Result<Outcome> {
    let s = setup(c, (1, 16, 4.0), seed)?;
    let d = s.grid.d;
    let left: String = c.get("left", gaussian_expr(d, 0.0, 0.0))?;
    let right: String = c.get("right", gaussian_expr(d, 0.0, 0.0))?;
    let mode = mode_value(c)?;
    let params: SobolevParams = c.get("params", SobolevParams::default())?;
    let refine: bool = c.get("refine", true)?;
    let tol: f64 = c.get("stability_tol", 0.1)?;
    c.done()?;
    let base = bound_probe_at(s.grid, &s, &left, &right, mode, params)?;
    let mut checks = vec![Check::holds("finite", headline(&base).is_finite())];
    let mut outputs = json!({ "mode": mode, "params": params, "norms": base });
    if refine {
        let fine = make_grid(d, s.grid.n * 2, s.grid.l)?;
        let r = bound_probe_at(fine, &s, &left, &right, mode, params)?;
        let ratio = headline(&r) / headline(&base);
        outputs["refined"] = json!(r);
        outputs["stability_ratio"] = json!(ratio);
        checks.push(Check::below("stability", (ratio - 1.0).abs(), tol));
    }
    Ok(finish("bound-probe", &Value::Null, s.seed, Some(s.grid), outputs, checks))
}

pub const BEALS_DECAY_SYMBOL: &str = "(2+cos(pi*x/4))*(2+sin(xi))";

fn default_probe() -> Vec<FrameIndex> {
    vec![FrameIndex::new([0, 0], [0, 0]), FrameIndex::new([1, 0], [-1, 0]), FrameIndex::new([-1, 0], [2, 0])]
}

fn exp_beals(c: &Cfg, seed: Option<u64>) -> Result<Outcome> {
    let s = setup(c, (1, 32, 4.0), seed)?;
    let d = s.grid.d;
    let left: String = c.get("left", gaussian_expr(d, 0.3, 0.0))?;
    let right: String = c.get("right", gaussian_expr(d, 0.0, 0.5))?;
    let tol: f64 = c.get("tol", 1e-8)?;
    let probe_raw: Option<Vec<[[i64; 2]; 2]>> = c.opt("probe")?;
    let decay_symbol: Option<String> = c.get("decay_symbol", if d == 1 { Some(BEALS_DECAY_SYMBOL.to_string()) } else { None })?;
    let order_gap: f64 = c.get("order_gap", 1.0)?;
    let frames = FrameSystem::new(&s.ctx, FrameWindow::standard(d))?;
    let decay_box = box_from_value(c, "decay_box", &frames, "2,5")?;
    c.done()?;
    let probe: Vec<FrameIndex> = probe_raw.map(|v| v.iter().map(|p| FrameIndex::new(p[0], p[1])).collect()).unwrap_or_else(default_probe);
    let op = SuperOperator::tensor(tensor(&left, &right, s.grid)?, &s.ctx)?;
    let mut checks = Vec::new();
    let mut per_gen = Map::new();
    for gen in Generator::all(d) {
        let e = beals_identity(&op, gen, &frames, &probe)?;
        let r = beals_residual(&e);
        per_gen.insert(gen.label(), json!({ "residual": r, "entries": e.len() }));
        checks.push(Check::below(&format!("identity {}", gen.label()), r, tol));
    }
    let mut outputs = json!({ "identity": per_gen, "probe": probe });
    if let Some(sym) = decay_symbol {
        let dop = SuperOperator::tensor(tensor(&sym, &sym, s.grid)?, &s.ctx)?;
        let base = matrix_elements(&dop, &frames, &decay_box)?.decay_fit(None)?;
        let mut orders = Map::new();
        for gen in Generator::all(d) {
            let cm = beals_commutator(&dop, gen, &s.ctx)?;
            let fit = matrix_elements(&cm, &frames, &decay_box)?.decay_fit(None)?.refit(base.range)?;
            orders.insert(gen.label(), json!(fit.n_star));
            checks.push(Check::at_most(&format!("order gap {}", gen.label()), (fit.n_star - base.n_star).abs(), order_gap));
        }
        outputs["decay"] = json!({ "symbol": sym, "box": decay_box, "base_order": base.n_star, "range": base.range, "commutator_orders": orders });
    }
    Ok(finish("beals", &Value::Null, s.seed, Some(s.grid), outputs, checks))
}

fn exp_channel(c: &Cfg, seed: Option<u64>) -> Result<Outcome> {
    let s = setup(c, (1, 32, 4.0), seed)?;
    let count: usize = c.get("count", if s.grid.d == 1 { 4 } else { 2 })?;
    let band: Option<f64> = c.opt("band")?;
    let checks_req: Vec<String> = c.get("checks", vec!["trace".into(), "choi".into(), "kraus".into()])?;
    let rho_count: usize = c.get("rho_count", 20)?;
    let choi_dim: usize = c.get("choi_dim", 32)?;
    let magnetic = !s.ctx.is_trivial();
    let tol_trace: f64 = c.get("tol_trace", if magnetic { 1e-4 } else { 1e-8 })?;
    let tol_kraus: f64 = c.get("tol_kraus", if magnetic { 1e-4 } else { 1e-8 })?;
    let choi_floor: f64 = c.get("choi_floor", -1e-10)?;
    c.done()?;
    for k in &checks_req {
        if !["trace", "choi", "kraus"].contains(&k.as_str()) {
            return Err(Error::Config { path: "/checks".into(), msg: format!("unknown check '{k}'") });
        }
    }
    let spec = ChannelSpec::partition(&s.ctx, count, band)?;
    let mut checks = Vec::new();
    let mut outputs = json!({ "kraus_count": spec.len(), "band_residual": spec.band_residual, "field": s.field_label });
    let mut out = finish("channel", &Value::Null, s.seed, Some(s.grid), Value::Null, vec![]);
    if checks_req.iter().any(|k| k == "kraus") {
        let k = kraus_verify(&spec)?;
        checks.push(Check::below("kraus_completeness", k.final_deviation, tol_kraus));
        checks.push(Check::holds("kraus_partial_sums_bounded", k.bounded));
        outputs["kraus"] = json!(k);
    }
    if checks_req.iter().any(|k| k == "trace") {
        let mut rng = seeded(s.seed);
        let mut worst = 0.0f64;
        let mut min_eig = f64::INFINITY;
        for i in 0..rho_count {
            let rho = random_psd(&mut rng, s.grid, 4);
            let o = apply_channel(&spec, &rho)?;
            worst = worst.max((o.trace() - rho.trace()).norm() / rho.trace().norm());
            let m = o.operator_matrix();
            let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
            let ev = h.symmetric_eigenvalues();
            min_eig = min_eig.min(ev.min() / ev.max());
            if i == 0 {
                out = out.array("channel_output_0.mpdo", io::encode(&Array::Kernel(o)));
            }
        }
        checks.push(Check::below("trace_residual", worst, tol_trace));
        checks.push(Check::at_least("output_min_eigenvalue_ratio", min_eig, choi_floor));
        outputs["trace_residual"] = json!(worst);
        outputs["output_min_eigenvalue_ratio"] = json!(min_eig);
    }
    if checks_req.iter().any(|k| k == "choi") {
        let ch = choi_check(&spec, choi_dim)?;
        let tr = choi_transpose_control(s.grid, choi_dim)?;
        checks.push(Check::at_least("choi_min_eigenvalue", ch.min_eigenvalue, choi_floor));
        checks.push(Check::below("transpose_control_min_eigenvalue", tr.min_eigenvalue, 0.0));
        outputs["choi"] = json!(ch);
        outputs["transpose_control"] = json!(tr);
    }
    let pass = checks.iter().all(|c| c.pass);
    out.out.report.outputs = outputs;
    out.out.report.checks = checks;
    out.out.report.pass = pass;
    Ok(out)
}

fn lemma_row(r: &LemmaReport) -> String {
    format!(
        "{},{},{},{},{},{},{:e},{:e},{:e},{}\n",
        r.weight.replace(',', ";"),
        r.dim,
        r.lebesgue.iter().map(|(p, a, b)| format!("p{p}:{a}/{b}")).collect::<Vec<_>>().join(" "),
        r.lebesgue_pass,
        r.decay_lattice,
        r.decay_continuum,
        r.sandwich_min,
        r.sandwich_max,
        r.sandwich_constant,
        r.pass
    )
}

fn exp_weights(c: &Cfg, seed: Option<u64>) -> Result<Outcome> {
    let seed = match seed {
        Some(s) => {
            c.raw("seed");
            s
        }
        None => c.get("seed", 0u64)?,
    };
    let lemma: String = c.get("lemma", "all".to_string())?;
    if !["all", "app_lebesgue", "app_tozero", "app_smooth"].contains(&lemma.as_str()) {
        return Err(c.config_err("lemma", format!("unknown lemma '{lemma}'")));
    }
    let custom: Option<Vec<(usize, WeightSpec)>> = match c.raw("weights") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s == "builtin" => None,
        Some(v) => {
            #[derive(serde::Deserialize)]
            struct Entry {
                dim: usize,
                weight: WeightSpec,
            }
            let es: Vec<Entry> = serde_json::from_value(v.clone()).map_err(|e| c.config_err("weights", e.to_string()))?;
            Some(es.into_iter().map(|e| (e.dim, e.weight)).collect())
        }
    };
    c.done()?;
    let corpus = match custom {
        None => builtin_corpus(),
        Some(list) => list.iter().map(|(d, w)| w.build(*d)).collect::<Result<Vec<_>>>()?,
    };
    let reports = corpus.par_iter().map(lemma_suite).collect::<Result<Vec<_>>>()?;
    let pick = |r: &LemmaReport| match lemma.as_str() {
        "app_lebesgue" => r.lebesgue_pass,
        "app_tozero" => r.decay_pass,
        "app_smooth" => r.sandwich_pass,
        _ => r.pass,
    };
    let checks: Vec<Check> = reports.iter().map(|r| Check::holds(&format!("{} {}", lemma, r.weight), pick(r))).collect();
    let mut csv = String::from("weight,dim,lebesgue lattice/continuum,lebesgue_pass,decay_lattice,decay_continuum,sandwich_min,sandwich_max,sandwich_constant,pass\n");
    for r in &reports {
        csv.push_str(&lemma_row(r));
    }
    let outputs = json!({ "lemma": lemma, "reports": reports });
    Ok(finish("weights", &Value::Null, seed, None, outputs, checks).table("verdicts.csv", csv))
}

/// Runs one experiment config. `seed` overrides the config seed when given.
pub fn run_config(config: &Value, seed: Option<u64>) -> Result<RunOutput> {
    let c = Cfg::new(config, "")?;
    let name: String = c.opt("experiment")?.ok_or_else(|| c.config_err("experiment", "missing experiment name"))?;
    let outcome = match name.as_str() {
        "parseval" => exp_parseval(&c, seed),
        "roundtrip" => exp_roundtrip(&c, seed),
        "odot" => exp_odot(&c, seed),
        "matrix-decay" => exp_matrix_decay(&c, seed),
        "moyal" => exp_moyal(&c, seed),
        "products" => exp_products(&c, seed),
        "bound-probe" => exp_bound_probe(&c, seed),
        "beals" => exp_beals(&c, seed),
        "channel" => exp_channel(&c, seed),
        "weights" => exp_weights(&c, seed),
        other => Err(c.config_err("experiment", format!("unknown experiment '{other}'; expected one of {}", EXPERIMENTS.join(", ")))),
    }?;
    let mut out = outcome.out;
    out.report.config = config.clone();
    out.report.input_digest = digest(config, out.report.seed);
    Ok(out)
}

pub fn run_config_str(src: &str, seed: Option<u64>) -> Result<RunOutput> {
    let v: Value = serde_json::from_str(src).map_err(|e| Error::Config { path: format!("line {} column {}", e.line(), e.column()), msg: e.to_string() })?;
    run_config(&v, seed)
}

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Config { path: "--workers".into(), msg: "need at least one worker".into() });
        }
        b = b.num_threads(w);
    }
    let pool = b.build().map_err(|e| Error::Config { path: "--workers".into(), msg: e.to_string() })?;
    Ok(pool.install(f))
}

// ---------------------------------------------------------------------------
// Subcommands

fn grid_or_default(common: &Common) -> GridSpec {
    common.grid.unwrap_or(GridSpec { d: 1, n: 64, l: 8.0 })
}

fn context(common: &Common, grid: GridSpec) -> Result<QuantizationContext> {
    let field = match &common.field {
        Some(f) => parse_field(f, grid.d)?,
        None => MagneticField::zero(grid.d)?,
    };
    QuantizationContext::new(grid, &field)
}

/// An MPDO1 symbol file when `s` names an existing file, else an expression.
fn symbol_arg(s: &str, grid: GridSpec) -> Result<SymbolGrid> {
    let p = Path::new(s);
    if p.is_file() {
        let sym = io::read_symbol(p)?;
        sym.grid.ensure_same(&grid)?;
        return Ok(sym);
    }
    sample_symbol(s, grid)
}

fn grid_of_file_or(s: &str, fallback: GridSpec) -> Result<GridSpec> {
    let p = Path::new(s);
    if p.is_file() {
        return Ok(io::read_array(p)?.grid());
    }
    Ok(fallback)
}

fn summary(name: &str, common: &Common, outputs: Value, checks: Vec<Check>, grid: Option<GridSpec>) -> Outcome {
    let cfg = json!({ "command": name, "grid": grid, "field": common.field, "seed": common.seed });
    let mut o = finish(name, &cfg, common.seed.unwrap_or(0), grid, outputs, checks);
    o.out.report.config = cfg;
    o
}

fn dispatch(cmd: &Command, common: &Common) -> Result<Outcome> {
    match cmd {
        Command::Quantize { symbol } => {
            let grid = grid_of_file_or(symbol, grid_or_default(common))?;
            let ctx = context(common, grid)?;
            let k = weyl_kernel(&symbol_arg(symbol, grid)?, &ctx)?;
            let out = json!({ "hs_norm": k.hs_norm(), "file": "kernel.mpdo" });
            Ok(summary("quantize", common, out, vec![], Some(grid)).array("kernel.mpdo", io::encode(&Array::Kernel(k))))
        }
        Command::Dequantize { input } => {
            let k = io::read_kernel(input)?;
            let ctx = context(common, k.grid)?;
            let s = weyl_dequantize(&k, &ctx)?;
            let out = json!({ "l2_norm": s.norm_l2(), "file": "symbol.mpdo" });
            Ok(summary("dequantize", common, out, vec![], Some(k.grid)).table("symbol_slice.csv", io::symbol_slice_csv(&s, k.grid.n / 2)).array("symbol.mpdo", io::encode(&Array::Symbol(s))))
        }
        Command::Moyal { left, right } => {
            let grid = grid_of_file_or(left, grid_or_default(common))?;
            let ctx = context(common, grid)?;
            let p = moyal(&symbol_arg(left, grid)?, &symbol_arg(right, grid)?, &ctx)?;
            let out = json!({ "l2_norm": p.norm_l2(), "file": "moyal.mpdo" });
            Ok(summary("moyal", common, out, vec![], Some(grid)).array("moyal.mpdo", io::encode(&Array::Symbol(p))))
        }
        Command::FrameAnalyze { function, bx } => {
            let p = Path::new(function);
            let (grid, f) = if p.is_file() {
                match io::read_array(p)? {
                    Array::Function(g, f) => (g, f),
                    other => return Err(Error::Format(format!("expected function, found {}", other.kind_name()))),
                }
            } else {
                let g = grid_or_default(common);
                (g, sample_fn_expr(function, &g)?)
            };
            let ctx = context(common, grid)?;
            let frames = FrameSystem::new(&ctx, FrameWindow::standard(grid.d))?;
            let b = parse_box(bx, &frames)?;
            let c = frames.analyze(&f, &b)?;
            let n2 = l2_norm(&grid, &f).powi(2);
            let out = json!({ "box": b, "coefficients": c.values.len(), "energy": c.energy(), "norm2": n2 });
            let csv = c.to_csv(grid.d);
            Ok(summary("frame-analyze", common, out, vec![], Some(grid)).table("coefficients.csv", csv).array("coefficients.mpdo", io::encode(&Array::Coefficients(grid, c))))
        }
        Command::FrameSynthesize { input } => {
            let (grid, c): (GridSpec, FrameCoefficients) = match io::read_array(input)? {
                Array::Coefficients(g, c) => (g, c),
                other => return Err(Error::Format(format!("expected coefficients, found {}", other.kind_name()))),
            };
            let ctx = context(common, grid)?;
            let frames = FrameSystem::new(&ctx, FrameWindow::standard(grid.d))?;
            let f = frames.synthesize(&c)?;
            let out = json!({ "l2_norm": l2_norm(&grid, &f) });
            Ok(summary("frame-synthesize", common, out, vec![], Some(grid)).table("function.csv", io::function_csv(&grid, &f)).array("function.mpdo", io::encode(&Array::Function(grid, f))))
        }
        Command::SuperMatrix { left, right, bx } => {
            let grid = grid_of_file_or(left, grid_or_default(common))?;
            let ctx = context(common, grid)?;
            let frames = FrameSystem::new(&ctx, FrameWindow::standard(grid.d))?;
            let b = parse_box(bx, &frames)?;
            let op = SuperOperator::tensor(TensorSuperSymbol::single(symbol_arg(left, grid)?, symbol_arg(right, grid)?)?, &ctx)?;
            let m = matrix_elements(&op, &frames, &b)?;
            let fit = m.decay_fit(None)?;
            let out = json!({ "box": b, "entries": m.entries().len(), "n_star": fit.n_star, "fit": fit });
            Ok(summary("super-matrix", common, out, vec![], Some(grid)).table("matrix.csv", io::frame_matrix_csv(&m)).array("matrix.mpdo1s", io::encode_sparse(&m)))
        }
        Command::SuperApply { input, matrix, left, right } => {
            let t = io::read_kernel(input)?;
            let grid = t.grid;
            let ctx = context(common, grid)?;
            let out = match (matrix, left, right) {
                (Some(mp), None, None) => {
                    let m = io::read_sparse(mp)?;
                    let frames = FrameSystem::new(&ctx, FrameWindow::standard(grid.d))?;
                    m.apply(&frames, &t)?
                }
                (None, Some(l), Some(r)) => apply_super_tensor(&TensorSuperSymbol::single(symbol_arg(l, grid)?, symbol_arg(r, grid)?)?, &t, &ctx)?,
                _ => return Err(Error::Config { path: "super-apply".into(), msg: "give either --matrix or both --left and --right".into() }),
            };
            let o = json!({ "hs_norm": out.hs_norm(), "file": "output.mpdo" });
            Ok(summary("super-apply", common, o, vec![], Some(grid)).array("output.mpdo", io::encode(&Array::Kernel(out))))
        }
        Command::Beals { left, right, probe } => {
            let grid = common.grid.unwrap_or(GridSpec { d: 1, n: 32, l: 4.0 });
            let mut cfg = json!({ "experiment": "beals", "grid": grid, "left": left, "right": right });
            if let Some(f) = &common.field {
                cfg["field"] = field_value(f)?;
            }
            if let Some(p) = probe {
                cfg["probe"] = parse_probe(p)?;
            }
            let c = Cfg::new(&cfg, "")?;
            c.raw("experiment");
            exp_beals(&c, common.seed)
        }
        Command::BoundProbe { left, right, mode, sobolev } => {
            let grid = common.grid.unwrap_or(GridSpec { d: 1, n: 16, l: 4.0 });
            let mut cfg = json!({ "experiment": "bound-probe", "grid": grid, "left": left, "right": right, "mode": mode });
            if let Some(f) = &common.field {
                cfg["field"] = field_value(f)?;
            }
            if let Some(s) = sobolev {
                let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| Error::Config { path: "--sobolev".into(), msg: e.to_string() })?;
                if v.len() != 4 {
                    return Err(Error::Config { path: "--sobolev".into(), msg: "expected s_L,s_R,s_L',s_R'".into() });
                }
                cfg["params"] = json!({ "s_l": v[0], "s_r": v[1], "s_l_prime": v[2], "s_r_prime": v[3] });
            }
            let c = Cfg::new(&cfg, "")?;
            c.raw("experiment");
            exp_bound_probe(&c, common.seed)
        }
        Command::ChannelRun { spec, count, band } => {
            let mut cfg = match spec {
                Some(p) => serde_json::from_str::<Value>(&std::fs::read_to_string(p)?).map_err(|e| Error::Config { path: p.display().to_string(), msg: e.to_string() })?,
                None => json!({}),
            };
            let obj = cfg.as_object_mut().ok_or_else(|| Error::Config { path: "/".into(), msg: "channel spec must be an object".into() })?;
            obj.insert("experiment".into(), json!("channel"));
            if let Some(g) = common.grid {
                obj.insert("grid".into(), json!(g));
            }
            if let Some(f) = &common.field {
                obj.insert("field".into(), field_value(f)?);
            }
            if let Some(n) = count {
                obj.insert("count".into(), json!(n));
            }
            if let Some(b) = band {
                obj.insert("band".into(), json!(b));
            }
            let c = Cfg::new(&cfg, "")?;
            c.raw("experiment");
            exp_channel(&c, common.seed)
        }
        Command::Weights { weight, dim } => {
            let mut cfg = json!({ "experiment": "weights" });
            if let Some(w) = weight {
                let spec: Value = serde_json::from_str(w).map_err(|e| Error::Config { path: "--weight".into(), msg: e.to_string() })?;
                cfg["weights"] = json!([{ "dim": dim, "weight": spec }]);
            }
            let c = Cfg::new(&cfg, "")?;
            c.raw("experiment");
            exp_weights(&c, common.seed)
        }
        Command::Run { config } => {
            let src = std::fs::read_to_string(config)?;
            Ok(Outcome { out: run_config_str(&src, common.seed)? })
        }
    }
}

fn field_value(s: &str) -> Result<Value> {
    if s == "zero" {
        return Ok(json!({ "kind": "zero" }));
    }
    if let Some(b) = s.strip_prefix("constant:") {
        let b: f64 = b.trim().parse().map_err(|_| Error::Config { path: "--field".into(), msg: format!("bad constant '{b}'") })?;
        return Ok(json!({ "kind": "constant", "b": b }));
    }
    if let Some(e) = s.strip_prefix("expr:") {
        return Ok(json!({ "kind": "expr", "B12": e }));
    }
    Err(Error::Config { path: "--field".into(), msg: format!("expected zero, constant:b or expr:<B12>, got '{s}'") })
}

/// "a,a';b,b';…" in d = 1.
fn parse_probe(s: &str) -> Result<Value> {
    let bad = || Error::Config { path: "--probe".into(), msg: format!("expected α,α′;… got '{s}'") };
    let mut out = Vec::new();
    for part in s.split(';') {
        let v: Vec<i64> = part.split(',').map(|t| t.trim().parse::<i64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        if v.len() != 2 {
            return Err(bad());
        }
        out.push(json!([[v[0], 0], [v[1], 0]]));
    }
    Ok(Value::Array(out))
}

/// Parses arguments, runs, writes outputs and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return EXIT_PASS;
            }
            let err = json!({ "error": "usage", "message": e.to_string(), "exit_code": EXIT_CONFIG });
            eprintln!("{err}");
            return EXIT_CONFIG;
        }
    };
    let start = Instant::now();
    let result = with_workers(cli.common.workers, || dispatch(&cli.command, &cli.common)).and_then(|r| r);
    match result {
        Ok(o) => {
            let workers = cli.common.workers.unwrap_or_else(rayon::current_num_threads);
            if let Err(e) = o.out.write(&cli.common.out, workers, start.elapsed().as_secs_f64()) {
                eprintln!("{}", error_json(&e));
                return exit_code(&e);
            }
            let _ = writeln!(std::io::stdout(), "{}", o.out.report_json());
            if o.out.report.pass { EXIT_PASS } else { EXIT_TOLERANCE }
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_carry_paths() {
        let e = run_config_str(r#"{"experiment":"parseval","grid":{"d":1,"N":64,"L":8},"bogus":1}"#, None).unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "/bogus"), "{e:?}");
        let e = run_config_str(r#"{"experiment":"parseval","grid":{"d":1,"N":"x","L":8}}"#, None).unwrap_err();
        assert!(matches!(&e, Error::Config { path, .. } if path == "/grid/N"), "{e:?}");
        let e = run_config_str(r#"{"experiment":"nope"}"#, None).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_CONFIG);
        let e = run_config_str("{not json", None).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_CONFIG);
        let e = run_config_str(r#"{"experiment":"roundtrip","grid":{"d":1,"N":16,"L":2},"field":{"kind":"constant","b":1}}"#, None).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_CAPABILITY);
    }

    #[test]
    fn parseval_experiment_passes() {
        let out = run_config_str(r#"{"experiment":"parseval","grid":{"d":1,"N":64,"L":8}}"#, None).unwrap();
        assert!(out.report.pass, "{}", out.report_json());
        assert_eq!(out.report.checks[0].tol, 1e-8);
    }

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_grid("2,16,4").unwrap(), GridSpec { d: 2, n: 16, l: 4.0 });
        assert!(parse_grid("1,7,8").is_err());
        assert!(parse_field("constant:1", 2).unwrap().constant_value() == Some(1.0));
        assert!(matches!(parse_field("constant:1", 1), Err(Error::Capability(_))));
        assert!(parse_field("bogus", 2).is_err());
        assert_eq!(parse_probe("0,0;1,-1").unwrap(), json!([[[0, 0], [0, 0]], [[1, 0], [-1, 0]]]));
    }
}
