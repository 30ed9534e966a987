fn main() {
    let code = binmargin::cli::main_with_args(std::env::args());
    std::process::exit(code);
}
