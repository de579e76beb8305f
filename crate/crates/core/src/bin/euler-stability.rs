fn main() {
    std::process::exit(euler_stability::harness::cli_main(std::env::args_os()));
}
