fn main() -> std::process::ExitCode {
    tamperproof::cli::run(std::env::args_os())
}
