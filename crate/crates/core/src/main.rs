fn main() {
    std::process::exit(actbench::cli::run(std::env::args_os()));
}
