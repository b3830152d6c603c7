fn main() {
    std::process::exit(solarcap_cli::main_with_args(std::env::args_os()));
}
