fn main() {
    std::process::exit(fracneumann::cli::run(std::env::args_os()));
}
