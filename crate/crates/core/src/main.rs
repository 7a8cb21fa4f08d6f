fn main() {
    std::process::exit(attentab::cli::run_from(std::env::args_os()));
}
