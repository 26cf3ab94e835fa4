fn main() {
    std::process::exit(optonoise::cli::main_with_args(std::env::args_os()));
}
