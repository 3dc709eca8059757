fn main() {
    std::process::exit(starspec::cli::main_with_args(std::env::args_os()));
}
