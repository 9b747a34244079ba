fn main() {
    std::process::exit(memn2n::cli::run(std::env::args_os()));
}
