fn main() -> std::process::ExitCode {
    flare_core::harness::cli::main()
}
