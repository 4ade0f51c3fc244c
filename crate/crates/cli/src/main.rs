fn main() {
    std::process::exit(figp_cli::run(std::env::args_os()));
}
