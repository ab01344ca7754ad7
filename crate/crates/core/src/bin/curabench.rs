fn main() {
    std::process::exit(curabench::cli::run(std::env::args_os()));
}
