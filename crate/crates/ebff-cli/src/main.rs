use clap::Parser;
use ebff_cli::cli::{run, Cli};

fn main() {
    // clap exits with 2 on usage errors and 0 for --help
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ebff: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
