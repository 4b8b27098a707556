fn main() {
    std::process::exit(interveno::service::cli::run(std::env::args_os()));
}
