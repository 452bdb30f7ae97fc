fn main() {
    std::process::exit(nullcontrol::cli::main_with_args(std::env::args_os()));
}
