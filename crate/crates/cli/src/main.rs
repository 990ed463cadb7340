fn main() {
    std::process::exit(censored_meta_cli::main_with_args(std::env::args_os()));
}
