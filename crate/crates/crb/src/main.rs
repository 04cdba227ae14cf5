fn main() {
    std::process::exit(crb::cli::run(std::env::args_os()));
}
