fn main() {
    std::process::exit(sdiff_cli::run(std::env::args_os()));
}
