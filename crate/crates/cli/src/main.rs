fn main() {
    std::process::exit(dpsc_cli::run_cli(std::env::args_os()));
}
