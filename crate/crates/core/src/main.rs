fn main() {
    std::process::exit(morphtext::cli::run(std::env::args_os()));
}
