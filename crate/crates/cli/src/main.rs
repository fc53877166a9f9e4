fn main() {
    std::process::exit(treeloc_cli::run(std::env::args_os()));
}
