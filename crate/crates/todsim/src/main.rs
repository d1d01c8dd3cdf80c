fn main() {
    std::process::exit(todsim::cli::main());
}
