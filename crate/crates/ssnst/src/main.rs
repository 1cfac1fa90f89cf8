fn main() {
    std::process::exit(ssnst::workbench::cli::run(std::env::args()));
}
