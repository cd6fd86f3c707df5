fn main() {
    // Die quietly on a closed pipe (`microcl report | head`) instead of
    // panicking mid-print; Rust ignores SIGPIPE by default.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(microcl::cli::cli_main(std::env::args().skip(1)));
}
