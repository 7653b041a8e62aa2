fn main() {
    std::process::exit(lfd::cli::run(std::env::args_os()));
}
