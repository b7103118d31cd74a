fn main() {
    std::process::exit(blowup_lab::cli::main_with_args(std::env::args_os()));
}
