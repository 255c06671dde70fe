fn main() {
    std::process::exit(ranpac::cli::main_with_args(std::env::args_os()));
}
