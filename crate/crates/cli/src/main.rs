fn main() {
    std::process::exit(ctreport_cli::main_with(std::env::args_os()));
}
