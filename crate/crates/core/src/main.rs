fn main() {
    std::process::exit(qbspde::cli::main_with_args(std::env::args_os()));
}
