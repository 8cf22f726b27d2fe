fn main() {
    std::process::exit(prcmpout::cli::run(std::env::args_os()));
}
