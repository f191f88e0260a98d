fn main() {
    std::process::exit(rootsr_cli::run(std::env::args_os()));
}
