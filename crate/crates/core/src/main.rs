fn main() {
    std::process::exit(relimp::cli::run(std::env::args_os()));
}
