fn main() {
    std::process::exit(styleval::cli::run(std::env::args_os()));
}
