fn main() {
    std::process::exit(fapc_core::cli::main_with_args(std::env::args_os()));
}
