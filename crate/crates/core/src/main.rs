fn main() {
    std::process::exit(replay_scope::cli::main_with_args(std::env::args_os()));
}
