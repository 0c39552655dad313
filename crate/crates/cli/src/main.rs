fn main() {
    std::process::exit(clepsydra_cli::run(std::env::args_os()));
}
