fn main() {
    std::process::exit(subdiff::cli::run(std::env::args_os()));
}
