fn main() {
    std::process::exit(gaa::cli::run_command(std::env::args_os()));
}
