fn main() {
    std::process::exit(retune_cli::main_with(std::env::args_os()));
}
