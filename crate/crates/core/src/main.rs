fn main() {
    std::process::exit(localvvo::cli::main_with_args());
}
