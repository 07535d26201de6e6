fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(dropkey::cli::run_command(&args));
}
