fn main() {
    std::process::exit(manakov_halfline::cli::run(std::env::args_os()));
}
