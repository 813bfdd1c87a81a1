fn main() {
    std::process::exit(elicit::cli::dispatch(std::env::args_os()));
}
