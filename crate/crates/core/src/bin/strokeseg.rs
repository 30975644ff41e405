fn main() {
    std::process::exit(strokeseg::cli::run(std::env::args_os()));
}
