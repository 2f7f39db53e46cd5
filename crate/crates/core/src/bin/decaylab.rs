fn main() {
    std::process::exit(decaylab::cli::run_from_args(std::env::args_os()));
}
