use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sliding_cli::commands::{self, AuditArgs};

#[derive(Parser)]
#[command(
    name = "sliding",
    version,
    about = "Sliding vector fields on discontinuity surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario config; writes <prefix>.csv and <prefix>.events.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Audit a sliding law against the structural checks.
    Audit {
        /// filippov, mean, scaled_filippov or scaled_filippov(<c>).
        #[arg(long)]
        law: String,
        /// A check name, or `all`.
        #[arg(long, default_value = "all")]
        check: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Report file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a trajectory CSV into plot blocks.
    Plotdata {
        #[arg(long = "in")]
        input: PathBuf,
        /// Comma-separated column names; all state coordinates by default.
        #[arg(long, value_delimiter = ',')]
        cols: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out_prefix } => commands::simulate(&config, &out_prefix),
        Command::Audit {
            law,
            check,
            trials,
            seed,
            dim,
            out,
        } => commands::audit(
            &AuditArgs {
                law,
                check,
                trials,
                seed,
                dim,
            },
            out.as_deref(),
        ),
        Command::Plotdata { input, cols, out } => commands::plot(&input, cols.as_deref(), &out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
