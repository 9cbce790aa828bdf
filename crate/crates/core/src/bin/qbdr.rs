fn main() {
    std::process::exit(qbdr::cli::main_with_args(std::env::args_os()));
}
