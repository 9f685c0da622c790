fn main() {
    std::process::exit(lwr_accidents::cli::main_with_args(std::env::args_os()));
}
