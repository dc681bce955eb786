fn main() {
    std::process::exit(knnlab::cli::run());
}
