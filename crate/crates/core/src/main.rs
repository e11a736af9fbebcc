fn main() {
    std::process::exit(episwarm::cli::main_entry());
}
