fn main() {
    std::process::exit(mcco::cli::run_from(std::env::args_os()));
}
