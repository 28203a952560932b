use clap::Parser;
use rqvol_cli::{run, Cli, Options};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let opts = Options {
        seed: cli.seed,
        out: cli.out.clone(),
        plot: cli.plot,
    };
    match run(cli.command, &cli.config, &opts) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("rqvol: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
