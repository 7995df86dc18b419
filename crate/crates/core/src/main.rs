fn main() {
    std::process::exit(gridmask::cli::main());
}
