fn main() {
    std::process::exit(sfuc::cli::run(std::env::args_os()));
}
