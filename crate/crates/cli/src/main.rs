use clap::Parser;

fn main() {
    let cli = smpl_cli::Cli::parse();
    if let Err(e) = smpl_cli::run(cli) {
        if e.is_broken_pipe() {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(e.code());
    }
}
