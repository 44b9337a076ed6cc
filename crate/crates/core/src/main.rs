fn main() {
    std::process::exit(p2pscope::cli::main());
}
