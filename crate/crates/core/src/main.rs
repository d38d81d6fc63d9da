fn main() {
    std::process::exit(conpac::cli::run(std::env::args_os()));
}
