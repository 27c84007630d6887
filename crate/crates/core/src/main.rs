fn main() {
    std::process::exit(thermal_kms::cli::main_with_args(std::env::args_os()));
}
