//! `molgrow`: talks to a molgrow server given by `--server`, or starts one
//! in-process on a free loopback port.

use clap::{Args, Parser, Subcommand};
use molgrow_api::{
    EnumerateRequest, JobRequest, JobResult, JobState, JobStatus, ParseRequest, ProgressEvent,
    RoundtripRequest, ScoreRequest,
};
use molgrow_client::{Client, ClientError};
use molgrow_core::config::{AlphabetChoice, PretrainRunConfig, RunConfig};
use molgrow_core::{Alphabet, Constraints};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "molgrow", version, about = "Molecular design by sequential graph edits")]
struct Cli {
    /// Server root URL; without it an embedded server is started.
    #[arg(long, global = true, env = "MOLGROW_SERVER")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Pretrain a policy on a SMILES corpus and write a checkpoint.
    Pretrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON pretraining config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the self-improving design loop.
    Design {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output directory for results, checkpoint and logs.
        #[arg(long, default_value = "molgrow-run")]
        out: PathBuf,
    },
    /// Count (and optionally list) all molecules up to a size.
    Enumerate {
        #[command(flatten)]
        alphabet: AlphabetArgs,
        #[arg(long)]
        max_atoms: usize,
        /// JSON constraints file.
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long)]
        list: bool,
    },
    /// Evaluate an objective on SMILES strings.
    Score {
        #[command(flatten)]
        alphabet: AlphabetArgs,
        /// Objective as inline JSON or a path to a JSON file.
        #[arg(long)]
        objective: String,
        #[arg(long, num_args = 1.., required = true)]
        smiles: Vec<String>,
    },
    /// Parse, write and reparse every line of a corpus.
    Roundtrip {
        #[command(flatten)]
        alphabet: AlphabetArgs,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Show the graph, formula and canonical SMILES of one molecule.
    Parse {
        #[command(flatten)]
        alphabet: AlphabetArgs,
        smiles: String,
    },
}

#[derive(Args)]
struct AlphabetArgs {
    /// Preset name (solvent-CNO, drug-full) or a JSON alphabet file.
    #[arg(long, conflicts_with = "symbols")]
    alphabet: Option<String>,
    /// Comma-separated atom symbols, e.g. C,N,O.
    #[arg(long, value_delimiter = ',')]
    symbols: Option<Vec<String>>,
    /// Maximum bond order used with --symbols.
    #[arg(long, default_value_t = 3, requires = "symbols")]
    max_bond_order: u8,
}

/// A failure with the exit code to report it under.
struct Failure(i32, String);

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure(e.exit_code(), e.to_string())
    }
}

fn config_error(e: impl std::fmt::Display) -> Failure {
    Failure(2, e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(2, format!("cannot read {}: {e}", path.display())))
}

fn absolute(path: &Path) -> Result<String, Failure> {
    std::path::absolute(path)
        .map(|p| p.display().to_string())
        .map_err(|e| Failure(2, format!("bad path {}: {e}", path.display())))
}

impl AlphabetArgs {
    fn choice(&self) -> Result<AlphabetChoice, Failure> {
        if let Some(symbols) = &self.symbols {
            let refs: Vec<&str> = symbols.iter().map(String::as_str).collect();
            return Alphabet::from_symbols(&refs, self.max_bond_order)
                .map(AlphabetChoice::Inline)
                .map_err(config_error);
        }
        match &self.alphabet {
            None => Ok(AlphabetChoice::default()),
            Some(a) if Path::new(a).is_file() => {
                serde_json::from_str(&read(Path::new(a))?).map(AlphabetChoice::Inline).map_err(config_error)
            }
            Some(name) => Ok(AlphabetChoice::Preset(name.clone())),
        }
    }
}

async fn wait_reporting(client: &Client, id: u64) -> Result<JobStatus, Failure> {
    let status = client
        .wait(id, Duration::from_millis(100), &mut |e| match e {
            ProgressEvent::Design(p) => eprintln!(
                "epoch {:>4}  best {:>10}  top20 {:>10}  archive {:>4}  sampled {:>5}  {} ms{}",
                p.epoch,
                p.best.map_or("-".into(), |v| format!("{v:.4}")),
                p.mean_top20.map_or("-".into(), |v| format!("{v:.4}")),
                p.archive_size,
                p.sampled,
                p.wall_ms,
                if p.aborted { "  (aborted)" } else { "" }
            ),
            ProgressEvent::Pretrain(l) => eprintln!(
                "epoch {:>4}  train {:.4}  validation {:.4}  {} ms",
                l.epoch, l.train_loss, l.validation_loss, l.wall_ms
            ),
            ProgressEvent::Rejected(r) => eprintln!("line {}: rejected {:?}: {}", r.line, r.text, r.reason),
        })
        .await?;
    if status.state == JobState::Failed {
        let e = status.error.clone().expect("failed jobs carry an error");
        return Err(Failure(e.exit_code, e.message));
    }
    Ok(status)
}

async fn run(cli: Cli, client: &Client) -> Result<i32, Failure> {
    match cli.command {
        Command::Serve { .. } => unreachable!("handled before a client exists"),
        Command::Pretrain { corpus, out, config } => {
            let config = match config {
                Some(p) => serde_json::from_str::<PretrainRunConfig>(&read(&p)?).map_err(config_error)?,
                None => PretrainRunConfig::default(),
            };
            let id = client
                .submit(&JobRequest::Pretrain {
                    config,
                    corpus: read(&corpus)?,
                    out: absolute(&out)?,
                })
                .await?;
            let status = wait_reporting(client, id).await?;
            if let Some(JobResult::Pretrain(s)) = status.result {
                println!("accepted {}", s.accepted);
                println!("rejected {}", s.rejected.len());
                println!("checkpoint {} sha256 {}", s.checkpoint.display(), s.checkpoint_sha256);
            }
            Ok(0)
        }
        Command::Design {
            config,
            checkpoint,
            out,
        } => {
            let config = RunConfig::from_json(&read(&config)?).map_err(config_error)?;
            let id = client
                .submit(&JobRequest::Design {
                    config,
                    checkpoint: checkpoint.as_deref().map(absolute).transpose()?,
                    output_dir: absolute(&out)?,
                })
                .await?;
            let status = wait_reporting(client, id).await?;
            let Some(JobResult::Design(s)) = status.result else {
                return Err(Failure(1, "job finished without a result".into()));
            };
            println!("rank\tobjective\tepoch\tsmiles");
            for r in &s.best {
                println!("{}\t{}\t{}\t{}", r.rank, r.objective, r.epoch, r.smiles);
            }
            eprintln!(
                "stopped ({:?}) after {} epochs; results in {}",
                s.stop,
                s.epochs_run,
                s.output_dir.display()
            );
            Ok(s.exit_code())
        }
        Command::Enumerate {
            alphabet,
            max_atoms,
            constraints,
            list,
        } => {
            let constraints = constraints
                .map(|p| serde_json::from_str::<Constraints>(&read(&p)?).map_err(config_error))
                .transpose()?;
            let r = client
                .enumerate(&EnumerateRequest {
                    alphabet: alphabet.choice()?,
                    max_atoms,
                    constraints,
                })
                .await?;
            println!("count {}", r.count);
            if list {
                for s in r.smiles {
                    println!("{s}");
                }
            }
            Ok(0)
        }
        Command::Score {
            alphabet,
            objective,
            smiles,
        } => {
            let text = if objective.trim_start().starts_with('{') {
                objective
            } else {
                read(Path::new(&objective))?
            };
            let r = client
                .score(&ScoreRequest {
                    alphabet: alphabet.choice()?,
                    objective: serde_json::from_str(&text).map_err(config_error)?,
                    smiles,
                })
                .await?;
            for s in r.scores {
                match (s.value, s.error) {
                    (_, Some(e)) => println!("{}\terror: {e}", s.smiles),
                    (Some(v), None) => println!("{}\t{v}", s.smiles),
                    (None, None) => println!("{}\t-inf", s.smiles),
                }
            }
            Ok(0)
        }
        Command::Roundtrip { alphabet, corpus } => {
            let r = client
                .roundtrip(&RoundtripRequest {
                    alphabet: alphabet.choice()?,
                    corpus: read(&corpus)?,
                })
                .await?;
            for l in &r.lines {
                match (&l.written, &l.error) {
                    (Some(w), None) => println!("{}\tpass\t{}\t{w}", l.line, l.input),
                    (_, e) => println!("{}\tfail\t{}\t{}", l.line, l.input, e.as_deref().unwrap_or("")),
                }
            }
            println!("{}/{} passed", r.passed, r.total);
            Ok(if r.passed == r.total { 0 } else { 1 })
        }
        Command::Parse { alphabet, smiles } => {
            let p = client
                .parse(&ParseRequest {
                    alphabet: alphabet.choice()?,
                    smiles,
                })
                .await?;
            println!("formula {}", p.formula);
            println!("canonical {}", p.canonical_smiles);
            for (i, a) in p.atoms.iter().enumerate() {
                println!("atom {i} {a}");
            }
            for b in &p.bonds {
                println!("bond {} {} {}", b.a, b.b, b.order);
            }
            Ok(0)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    if let Command::Serve { addr } = cli.command {
        return match molgrow_server::spawn(addr).await {
            Ok((local, handle)) => {
                println!("listening on {local}");
                match handle.await {
                    Ok(Ok(())) => ExitCode::SUCCESS,
                    _ => ExitCode::FAILURE,
                }
            }
            Err(e) => {
                eprintln!("error: cannot bind {addr}: {e}");
                ExitCode::FAILURE
            }
        };
    }
    let client = match &cli.server {
        Some(url) => Client::new(url.clone()),
        None => match molgrow_server::spawn(([127, 0, 0, 1], 0).into()).await {
            Ok((addr, _)) => Client::new(format!("http://{addr}")),
            Err(e) => {
                eprintln!("error: cannot start embedded server: {e}");
                return ExitCode::FAILURE;
            }
        },
    };
    match run(cli, &client).await {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
