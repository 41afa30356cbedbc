fn main() {
    std::process::exit(emdq::cli::run_from(std::env::args_os()));
}
