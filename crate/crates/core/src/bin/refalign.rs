fn main() {
    std::process::exit(refalign::tooling::cli_main(std::env::args_os()));
}
