fn main() {
    std::process::exit(gdrf::cli::run(std::env::args_os()));
}
