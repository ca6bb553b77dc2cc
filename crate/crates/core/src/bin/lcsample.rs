fn main() -> std::process::ExitCode {
    lcsample::cli::main()
}
