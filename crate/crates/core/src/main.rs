fn main() {
    std::process::exit(penosc::cli::run(std::env::args_os()));
}
