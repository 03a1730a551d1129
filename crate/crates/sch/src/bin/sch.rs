fn main() {
    std::process::exit(sch::cli::run_env());
}
