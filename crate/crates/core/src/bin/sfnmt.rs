fn main() {
    std::process::exit(sfnmt::cli::dispatch(std::env::args_os()));
}
