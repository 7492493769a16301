fn main() {
    std::process::exit(cpotts::cli::main_with_args(std::env::args_os()));
}
