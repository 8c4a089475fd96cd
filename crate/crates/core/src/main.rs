fn main() {
    std::process::exit(robopaint::cli::run(std::env::args_os()));
}
