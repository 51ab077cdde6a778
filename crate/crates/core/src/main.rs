fn main() {
    std::process::exit(wattrank::cli::run(std::env::args_os()));
}
