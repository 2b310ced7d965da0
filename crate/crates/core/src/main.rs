fn main() {
    std::process::exit(specproj::cli::main());
}
