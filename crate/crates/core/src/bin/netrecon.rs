fn main() {
    std::process::exit(netrecon::cli::run(std::env::args_os()));
}
