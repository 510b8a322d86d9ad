fn main() {
    std::process::exit(attn_topo::cli::main_with_args(std::env::args_os()));
}
