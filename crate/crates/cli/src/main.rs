fn main() {
    std::process::exit(dfrc_cli::run(std::env::args().skip(1)));
}
