fn main() {
    std::process::exit(hawkes_regen::cli::main_with_args(std::env::args_os()));
}
