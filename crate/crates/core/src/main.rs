fn main() {
    std::process::exit(rfspec::cli::run_command(std::env::args_os()));
}
