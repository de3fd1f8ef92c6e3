fn main() {
    std::process::exit(bertcaps::app::run(std::env::args_os()));
}
