fn main() {
    std::process::exit(hdlpboot::simharness::cli_main(std::env::args_os()));
}
