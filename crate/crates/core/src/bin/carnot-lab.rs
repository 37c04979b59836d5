fn main() {
    std::process::exit(carnot_lab::cli::run(std::env::args_os()));
}
