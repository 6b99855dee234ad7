fn main() {
    std::process::exit(tlc_core::cli::run_cli(std::env::args_os()));
}
