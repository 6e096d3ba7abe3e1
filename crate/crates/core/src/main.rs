fn main() -> std::process::ExitCode {
    nl2opt::cli::main()
}
