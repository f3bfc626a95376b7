fn main() {
    std::process::exit(dgcn::cli::run(std::env::args_os()));
}
