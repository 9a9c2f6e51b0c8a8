fn main() {
    std::process::exit(gesturebench::cli::run(std::env::args_os()));
}
