use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evoattack::rng::seeded;
use evoattack::{load_wav, normalize, TranscriberBinding};
use evoattack_cli::target::{generate_target, TargetTextSpec};
use evoattack_cli::{attack_command, evaluate_command, parse_binding, transfer_command, HarnessError, Outcome};

#[derive(Parser)]
#[command(name = "evoattack", version, about = "Black-box evolutionary attacks on speech recognizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attack one WAV file or every WAV in a directory.
    Attack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-score a manifest's original/adversarial pairs with an oracle.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// `toy`, a JSON binding file, or inline JSON.
        #[arg(long, default_value = "toy")]
        oracle: String,
        /// Also write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Transcribe a manifest's adversarial samples with a different oracle.
    Transfer {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        oracle: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Draw a target phrase sized for a reference transcript.
    GenTarget {
        #[arg(long)]
        corpus: PathBuf,
        /// A WAV file (transcribed with --oracle) or the transcript text itself.
        #[arg(long)]
        reference: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "toy")]
        oracle: String,
    },
}

fn emit(report: &impl serde::Serialize, path: Option<&PathBuf>) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(report).expect("reports serialize");
    if let Some(p) = path {
        std::fs::write(p, format!("{text}\n")).map_err(|source| HarnessError::Io { path: p.clone(), source })?;
    }
    println!("{text}");
    Ok(())
}

fn reference_length(reference: &str, binding: &TranscriberBinding) -> Result<usize, HarnessError> {
    let path = std::path::Path::new(reference);
    if path.is_file() {
        let clip = load_wav(path)?;
        Ok(binding.build()?.transcribe(&clip)?.len())
    } else {
        Ok(normalize(reference).len())
    }
}

fn run(cli: Cli) -> Result<Outcome, HarnessError> {
    match cli.command {
        Command::Attack { config, input, out } => {
            let run = attack_command(&config, &input, &out)?;
            emit(&run.manifest.means, None)?;
            eprintln!("manifest: {}", run.manifest_path.display());
            Ok(Outcome::from_failures(run.manifest.means.failed))
        }
        Command::Evaluate { manifest, oracle, report } => {
            let r = evaluate_command(&manifest, &parse_binding(&oracle)?)?;
            emit(&r, report.as_ref())?;
            Ok(Outcome::from_failures(r.means.failed))
        }
        Command::Transfer { manifest, oracle, report } => {
            let r = transfer_command(&manifest, &parse_binding(&oracle)?)?;
            emit(&r, report.as_ref())?;
            Ok(Outcome::from_failures(r.means.failed))
        }
        Command::GenTarget { corpus, reference, seed, oracle } => {
            let n = reference_length(&reference, &parse_binding(&oracle)?)?;
            let target = generate_target(&TargetTextSpec { corpus_path: corpus, n }, &mut seeded(seed))?;
            println!("{target}");
            Ok(Outcome::Success)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(outcome) => ExitCode::from(outcome as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Outcome::ConfigError as u8)
        }
    }
}
