fn main() {
    std::process::exit(tradecurve::cli::run(std::env::args_os()));
}
