fn main() {
    std::process::exit(enertree::cli::run(std::env::args_os()));
}
