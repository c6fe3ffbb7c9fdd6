fn main() {
    std::process::exit(clipchain::cli::run(std::env::args_os()));
}
