fn main() {
    std::process::exit(fieldmap::run_cli(std::env::args_os()));
}
