fn main() {
    std::process::exit(otlab::cli::main_with_args(std::env::args_os()));
}
