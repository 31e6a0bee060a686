fn main() {
    std::process::exit(depcens::cli::main_with_args(std::env::args_os()));
}
