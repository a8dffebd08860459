fn main() {
    std::process::exit(apafa_cli::run(std::env::args_os()));
}
