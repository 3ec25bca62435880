fn main() {
    std::process::exit(noma_cli::run(std::env::args_os()));
}
