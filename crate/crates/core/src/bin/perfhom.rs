fn main() {
    std::process::exit(perfhom::cli::run(std::env::args_os()));
}
