fn main() {
    std::process::exit(afkit_cli::run(std::env::args_os()));
}
