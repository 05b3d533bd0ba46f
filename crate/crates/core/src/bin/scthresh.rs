fn main() {
    std::process::exit(scthresh::cli::run(std::env::args_os()));
}
