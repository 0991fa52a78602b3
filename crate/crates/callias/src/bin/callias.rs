fn main() {
    std::process::exit(callias::cli::main_with_args(std::env::args_os()));
}
