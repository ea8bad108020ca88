fn main() {
    std::process::exit(tsad::cli::main_with_args(std::env::args_os()));
}
