fn main() {
    std::process::exit(msmpolicy::cli::main_with_args(std::env::args_os()));
}
