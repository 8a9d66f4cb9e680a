fn main() {
    std::process::exit(tnn_cli::run(std::env::args_os()));
}
