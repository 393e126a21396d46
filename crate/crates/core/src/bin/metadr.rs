fn main() {
    std::process::exit(metadr::cli::main_dispatch(std::env::args_os()));
}
