fn main() {
    std::process::exit(fracqueue::harness::cli::run(std::env::args_os()));
}
