fn main() {
    std::process::exit(robust_auction::cli::main(std::env::args_os()));
}
