fn main() {
    std::process::exit(cullforge::cli::main_with_args(std::env::args_os()));
}
