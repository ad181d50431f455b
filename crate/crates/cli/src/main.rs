fn main() {
    std::process::exit(swarmsphere_cli::run_cli(std::env::args_os()));
}
