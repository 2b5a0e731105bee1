fn main() {
    std::process::exit(xcavity::cli::main_with_args(std::env::args_os()));
}
