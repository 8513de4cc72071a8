fn main() {
    std::process::exit(wdesign::cli::run(std::env::args_os()));
}
