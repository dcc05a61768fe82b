fn main() {
    std::process::exit(edgenap::cli::main());
}
