fn main() {
    std::process::exit(pitaevskii::cli::main_with_args(std::env::args_os()));
}
