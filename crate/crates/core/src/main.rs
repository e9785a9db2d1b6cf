fn main() {
    std::process::exit(tailgauge::cli::dispatch(std::env::args_os()));
}
