fn main() {
    std::process::exit(fdgen::cli::run(std::env::args_os()));
}
