fn main() {
    std::process::exit(tppo_cli::run(std::env::args_os()));
}
