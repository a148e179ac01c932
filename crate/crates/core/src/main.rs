fn main() {
    std::process::exit(symflow::cli::main_with_args(std::env::args_os()));
}
