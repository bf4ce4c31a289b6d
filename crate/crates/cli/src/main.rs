fn main() {
    std::process::exit(misclust_cli::main_with_args(std::env::args_os()));
}
