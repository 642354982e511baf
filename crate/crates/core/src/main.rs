fn main() {
    std::process::exit(scaling_lab_core::experiments::cli_main(std::env::args_os()));
}
