fn main() {
    std::process::exit(crowd_imitation::cli::main_with(std::env::args_os()));
}
