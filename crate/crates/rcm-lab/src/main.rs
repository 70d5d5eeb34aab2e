fn main() {
    eprintln!("rcm-lab: experiment drivers not wired up yet");
    std::process::exit(2);
}
