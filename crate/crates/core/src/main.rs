fn main() {
    std::process::exit(steadytrunc::cli::main_with_args(std::env::args_os()));
}
