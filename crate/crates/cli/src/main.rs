fn main() {
    std::process::exit(sdlbfgs_bench::run(std::env::args_os()));
}
