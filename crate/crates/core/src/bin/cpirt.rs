fn main() {
    std::process::exit(cpirt::cli::run(std::env::args_os()));
}
