fn main() {
    std::process::exit(maml_lab::harness::cli_dispatch(std::env::args_os()));
}
