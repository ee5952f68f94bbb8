fn main() {
    glareseg::cli::main()
}
