fn main() {
    std::process::exit(hmcd_cli::run(std::env::args_os()));
}
