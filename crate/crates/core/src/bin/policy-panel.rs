fn main() {
    std::process::exit(policy_panel::cli::main());
}
