fn main() {
    std::process::exit(hyvascore::run_cli());
}
