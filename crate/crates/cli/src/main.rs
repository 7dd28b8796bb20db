fn main() {
    std::process::exit(aipw_cli::run(std::env::args_os()));
}
