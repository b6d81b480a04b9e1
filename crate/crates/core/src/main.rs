fn main() {
    std::process::exit(volcast::cli::run_from(std::env::args_os()));
}
