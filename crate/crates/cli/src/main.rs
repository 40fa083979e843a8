fn main() {
    std::process::exit(rig_spectra_cli::run(std::env::args_os()));
}
