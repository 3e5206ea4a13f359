fn main() {
    std::process::exit(prunessl::cli::run(std::env::args_os()));
}
