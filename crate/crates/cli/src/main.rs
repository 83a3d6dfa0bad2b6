fn main() {
    std::process::exit(gaimd_cli::run(std::env::args_os()));
}
