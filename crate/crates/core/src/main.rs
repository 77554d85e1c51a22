fn main() {
    std::process::exit(aniso_ebm::cli::main_with_args(std::env::args_os()));
}
