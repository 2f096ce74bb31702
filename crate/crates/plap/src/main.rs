fn main() {
    std::process::exit(plap::run());
}
