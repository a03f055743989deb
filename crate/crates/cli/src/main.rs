fn main() {
    std::process::exit(camtraj_cli::run(std::env::args_os()));
}
