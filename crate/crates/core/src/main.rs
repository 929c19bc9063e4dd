fn main() {
    std::process::exit(magsuper::cli::main_with_args(std::env::args_os()))
}
