fn main() {
    std::process::exit(ssrl_cli::run(std::env::args_os()));
}
