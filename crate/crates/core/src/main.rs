fn main() {
    let code = omada::harness::cli::cli_dispatch(std::env::args_os());
    std::process::exit(code);
}
