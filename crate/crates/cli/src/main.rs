fn main() {
    std::process::exit(aquaclear_cli::run(std::env::args_os()));
}
