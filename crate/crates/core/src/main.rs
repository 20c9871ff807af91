fn main() {
    std::process::exit(wclass_sim::cli::main_with_args(std::env::args_os()));
}
