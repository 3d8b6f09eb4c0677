fn main() {
    std::process::exit(rolemtl::cli::run(std::env::args_os()));
}
