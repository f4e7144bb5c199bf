fn main() {
    std::process::exit(sodaug_cli::run());
}
