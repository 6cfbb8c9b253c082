fn main() {
    std::process::exit(nbody_hkam::cli::main_with_args(std::env::args_os()));
}
