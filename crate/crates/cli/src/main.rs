fn main() {
    if let Err(e) = hlik_cli::run(std::env::args()) {
        eprintln!("{}", e.line());
        std::process::exit(e.exit_code());
    }
}
