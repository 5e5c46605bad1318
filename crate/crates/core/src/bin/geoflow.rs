fn main() {
    std::process::exit(geoflow::cli::main_with_args(std::env::args_os()));
}
