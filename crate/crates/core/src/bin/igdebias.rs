fn main() -> std::process::ExitCode {
    igdebias::cli::main()
}
