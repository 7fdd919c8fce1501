fn main() {
    std::process::exit(softimpute::cli::run_from(std::env::args_os()));
}
