fn main() {
    std::process::exit(reactgen::cli::run(std::env::args_os()));
}
