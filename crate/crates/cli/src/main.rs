fn main() {
    let code = gaugetomo_cli::main_with(std::env::args().collect());
    std::process::exit(code);
}
