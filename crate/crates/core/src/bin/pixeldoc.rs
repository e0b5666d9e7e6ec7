fn main() {
    std::process::exit(pixeldoc::cli::main_with_args(std::env::args_os()));
}
