fn main() {
    std::process::exit(valueid::cli::run(std::env::args()));
}
