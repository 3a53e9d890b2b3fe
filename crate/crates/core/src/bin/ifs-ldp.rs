fn main() {
    std::process::exit(ifs_ldp::cli::main_with_args(std::env::args_os()));
}
