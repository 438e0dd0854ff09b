fn main() {
    std::process::exit(corner_euler::cli::run_cli(std::env::args_os()));
}
