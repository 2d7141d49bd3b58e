fn main() {
    std::process::exit(lsc::cli::run(std::env::args_os()));
}
