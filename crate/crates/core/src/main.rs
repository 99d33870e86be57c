fn main() {
    std::process::exit(annred::cli::main());
}
