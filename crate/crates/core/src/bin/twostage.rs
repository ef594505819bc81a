fn main() {
    std::process::exit(twostage_lcp::cli::run(std::env::args_os()));
}
