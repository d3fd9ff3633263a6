fn main() {
    std::process::exit(entry_guidance::cli::main_with(std::env::args_os()));
}
