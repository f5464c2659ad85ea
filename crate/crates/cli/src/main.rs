fn main() {
    std::process::exit(gtcurate_cli::main_with_args(std::env::args_os()));
}
