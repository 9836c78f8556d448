fn main() {
    std::process::exit(persona_motion::cli::run());
}
