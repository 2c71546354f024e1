fn main() {
    std::process::exit(adabar_cli::run(std::env::args_os()));
}
