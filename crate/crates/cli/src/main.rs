fn main() {
    std::process::exit(lsrseg::main_with_args(std::env::args_os()));
}
