fn main() {
    std::process::exit(mddf::cli::main());
}
