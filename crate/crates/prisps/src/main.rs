fn main() {
    std::process::exit(prisps::cli::run());
}
