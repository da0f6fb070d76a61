fn main() {
    std::process::exit(shl::cli::run(std::env::args_os()));
}
