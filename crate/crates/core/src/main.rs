fn main() {
    std::process::exit(copgraph::cli::run(std::env::args_os()));
}
