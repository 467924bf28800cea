fn main() {
    std::process::exit(crater_cli::run(std::env::args_os()));
}
