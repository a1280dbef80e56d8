fn main() {
    std::process::exit(lame_spectra::cli::run());
}
