fn main() {
    std::process::exit(dynlmc::cli::run(std::env::args_os()));
}
