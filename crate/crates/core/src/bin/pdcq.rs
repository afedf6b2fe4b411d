fn main() {
    std::process::exit(pdcq::cli::run(std::env::args_os()));
}
