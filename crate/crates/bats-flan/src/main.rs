use bats_flan::cli;

fn main() {
    std::process::exit(cli::main_entry());
}
