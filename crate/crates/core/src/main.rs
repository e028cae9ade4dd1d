fn main() {
    std::process::exit(infocoh::cli::main_with(std::env::args_os()));
}
