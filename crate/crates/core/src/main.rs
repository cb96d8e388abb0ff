fn main() {
    std::process::exit(rtconv::cli::main());
}
