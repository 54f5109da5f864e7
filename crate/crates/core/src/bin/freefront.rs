fn main() {
    std::process::exit(freefront::cli::main_with(std::env::args_os()));
}
