fn main() {
    std::process::exit(kam_core::cli::run_cli(std::env::args_os()));
}
