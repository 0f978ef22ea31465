fn main() {
    std::process::exit(ramkit::cli::dispatch(std::env::args_os()));
}
