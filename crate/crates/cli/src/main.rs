fn main() {
    std::process::exit(gesopt_cli::main_with(std::env::args_os()));
}
