fn main() -> std::process::ExitCode {
    sensrec::cli::main()
}
