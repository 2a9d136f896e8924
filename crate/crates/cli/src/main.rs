use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use outfitter_cli::{commands, service, CliError, ServiceConfig};
use outfitter_core::Category;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "outfitter",
    version,
    about = "Instruction-driven virtual try-on"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the REST service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build a catalog directory from garment images and a captions file.
    Ingest {
        #[arg(long)]
        images: PathBuf,
        /// Tab-separated `filename, category, caption` lines.
        #[arg(long)]
        captions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Embed with the offline mock even if a remote embedder is configured.
        #[arg(long)]
        mock: bool,
    },
    /// Rank catalog garments against a text query.
    Match {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Restrict to one category (top, bottom, dress).
        #[arg(long)]
        category: Option<Category>,
        #[arg(long)]
        mock: bool,
        #[arg(long)]
        json: bool,
    },
    /// Apply one instruction to a person photo.
    Edit {
        #[arg(long)]
        person: PathBuf,
        #[arg(long)]
        instruction: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Run every model as its offline mock.
        #[arg(long)]
        mock: bool,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Service config to take backends, template and tau from.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// PSNR/SSIM table for `ref/*.png` against `out/*.png`.
    Eval {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write the demo person photo, garment images and captions file.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<Option<String>, CliError> {
    let env = |k: &str| std::env::var(k).ok();
    Ok(Some(match cli.command {
        Command::Serve { config } => {
            let config = ServiceConfig::load(&config)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Server(e.into()))?;
            runtime.block_on(service::serve(config))?;
            return Ok(None);
        }
        Command::Ingest {
            images,
            captions,
            out,
            mock,
        } => commands::ingest(&images, &captions, &out, mock, &env)?,
        Command::Match {
            catalog,
            query,
            k,
            category,
            mock,
            json,
        } => commands::match_query(&catalog, &query, k, category, mock, json, &env)?,
        Command::Edit {
            person,
            instruction,
            out,
            seed,
            mock,
            catalog,
            config,
            tau,
        } => commands::edit(
            &commands::EditArgs {
                person: &person,
                instruction: &instruction,
                out: &out,
                seed,
                mock,
                catalog: catalog.as_deref(),
                config: config.as_deref(),
                tau,
            },
            &env,
        )?,
        Command::Eval { pairs, json } => commands::eval(&pairs, json)?,
        Command::Fixtures { out } => commands::fixtures(&out)?,
    }))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(output) => {
            if let Some(text) = output {
                println!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.exit_code())
        }
    }
}
