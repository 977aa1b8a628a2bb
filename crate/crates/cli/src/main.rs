fn main() {
    std::process::exit(taskcut_cli::main_with_args(std::env::args_os()));
}
