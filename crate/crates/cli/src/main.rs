fn main() {
    std::process::exit(conelab::run(std::env::args_os()));
}
