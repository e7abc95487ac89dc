fn main() {
    std::process::exit(tubalign::cli::run_cli(std::env::args_os()));
}
