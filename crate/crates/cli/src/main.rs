use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use streamspeech_cli::config::RunConfig;
use streamspeech_cli::error::{invalid, CliResult};
use streamspeech_cli::infer::InferInput;
use streamspeech_cli::{datagen, gradcheck, infer, latency, stats, train};
use streamspeech_datagen::Kind;

/// Log filter variable, e.g. `STREAMSPEECH_LOG=debug`.
const LOG_ENV: &str = "STREAMSPEECH_LOG";

#[derive(Parser)]
#[command(name = "streamspeech", version, about = "Streaming speech-to-speech toy pipeline")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dialogue manifest, audio and statistics.
    Datagen {
        /// Instructions per language.
        #[arg(long)]
        n: Option<usize>,
        /// Record kinds to keep, comma separated (EMPATHETIC,GENERAL,T2S).
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<String>>,
    },
    /// Run one training stage (1s, 1e, 2a, 2b, 3) or `all` in order.
    Train {
        #[arg(long)]
        stage: String,
    },
    /// Answer a spoken or typed query with speech.
    Infer {
        /// Mono 16-bit WAV query.
        #[arg(long, conflicts_with = "text", required_unless_present = "text")]
        wav: Option<PathBuf>,
        /// Typed query as space-separated vocabulary words.
        #[arg(long)]
        text: Option<String>,
        /// Interleaved streaming decoding instead of offline decoding.
        #[arg(long)]
        streaming: bool,
        /// Checkpoint to load instead of the final stage's.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Tabulate first-audio latency, analytic against simulated.
    ProfileLatency,
    /// Finite-difference check of every kernel and composite model.
    GradCheck,
    /// Tag distributions of a manifest.
    Stats {
        /// Manifest path; the configured one when omitted.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_overrides(cli.seed, cli.out);
    match &cli.command {
        Command::Datagen { n, kinds } => {
            if let Some(n) = *n {
                log::info!(
                    "override datagen.instructions_per_language = {n} (config: {})",
                    cfg.datagen.instructions_per_language
                );
                cfg.datagen.instructions_per_language = n;
            }
            if let Some(kinds) = kinds {
                let parsed = kinds
                    .iter()
                    .map(|k| k.parse::<Kind>().map_err(|e| invalid(e.to_string())))
                    .collect::<CliResult<Vec<_>>>()?;
                log::info!("override datagen.kinds = {kinds:?}");
                cfg.datagen.kinds = parsed;
            }
        }
        Command::Stats { manifest: Some(m) } => {
            log::info!("override paths.manifest = {}", m.display());
            cfg.paths.manifest = Some(m.clone());
        }
        _ => {}
    }
    cfg.validate()?;
    match cli.command {
        Command::Datagen { .. } => {
            let data = datagen::cmd_datagen(&cfg)?;
            match &data.stats {
                Some(s) => print!("{}", s.to_table()),
                None => println!("records 0"),
            }
        }
        Command::Train { stage } => {
            for s in train::parse_stages(&stage)? {
                println!("{}", train::cmd_train(&cfg, s)?.to_line());
            }
        }
        Command::Infer {
            wav,
            text,
            streaming,
            checkpoint,
        } => {
            let input = match (wav, text) {
                (Some(w), _) => InferInput::Wav(w),
                (None, Some(t)) => InferInput::Text(t),
                (None, None) => return Err(invalid("infer needs --wav or --text")),
            };
            let (dir, out) = infer::cmd_infer(&cfg, &input, streaming, checkpoint.as_deref())?;
            println!("{}", dir.display());
            for t in &out.trace {
                println!(
                    "chunk {} tokens {}..{} after {} hidden states at {:.4} s",
                    t.chunk, t.start_token, t.end_token, t.hidden_consumed, t.time_s
                );
            }
        }
        Command::ProfileLatency => {
            let rows = latency::cmd_profile_latency(&cfg)?;
            print!("{}", latency::format_rows(&rows));
        }
        Command::GradCheck => {
            let entries = gradcheck::cmd_grad_check(&cfg)?;
            print!("{}", gradcheck::format_suite(&entries, cfg.gradcheck.tolerance));
        }
        Command::Stats { .. } => print!("{}", stats::cmd_stats(&cfg)?.to_table()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
