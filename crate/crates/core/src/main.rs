fn main() {
    std::process::exit(dtlids::cli::main_with_args(std::env::args_os()));
}
