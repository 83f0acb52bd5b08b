fn main() {
    std::process::exit(wheelcheck_cli::run(std::env::args_os()));
}
