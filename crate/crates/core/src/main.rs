fn main() {
    std::process::exit(mfbench::cli::main_with_args(std::env::args_os()));
}
