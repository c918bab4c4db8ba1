fn main() {
    std::process::exit(restartq::cli::run(std::env::args_os()));
}
