fn main() {
    std::process::exit(mdp_embed::cli::main_entry());
}
