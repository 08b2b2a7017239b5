fn main() {
    std::process::exit(ospca::harness::cli_main(std::env::args_os()));
}
