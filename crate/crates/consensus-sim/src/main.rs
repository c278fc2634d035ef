fn main() {
    std::process::exit(consensus_sim::cli::main_entry());
}
