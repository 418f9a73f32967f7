fn main() {
    std::process::exit(finsync::cli::run(std::env::args_os()));
}
