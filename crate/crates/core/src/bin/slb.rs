fn main() {
    std::process::exit(slb::cli::run(std::env::args_os()));
}
