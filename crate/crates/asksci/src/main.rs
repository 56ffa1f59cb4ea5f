use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use asksci::config::{ServiceConfig, ENV_CONFIG, ENV_LISTEN};
use asksci::embedder::{Embedder, EmbedderConfig};
use asksci::engine::{ClientInfo, Corpus, QueryEngine};
use asksci::feedback::{render_report_text, report_from_logs};
use asksci::ingest::{ingest_exam_bank, ingest_textbook};
use asksci::logs::to_timestamp;
use asksci::service;
use asksci::store::DataPaths;
use asksci_core::domain::YearBounds;
use asksci_core::metrics::Window;
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "asksci", version, about = "Semantic question answering over science textbooks and past exams")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = ENV_CONFIG)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk and embed a textbook JSON file into the answer bank.
    IngestTextbook {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Embed an exam-bank JSON-lines file into the exam bank.
    IngestExams {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Subject tag; defaults to the textbook manifest in `out_dir`.
        #[arg(long)]
        subject: Option<String>,
        #[arg(long, default_value_t = 2000)]
        min_year: u16,
        #[arg(long, default_value_t = 2020)]
        max_year: u16,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = ENV_LISTEN)]
        listen: Option<String>,
    },
    /// Answer one question in the terminal.
    Ask {
        question: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Offline metrics report from the question and vote logs.
    Metrics {
        #[arg(long)]
        questions_log: Option<PathBuf>,
        #[arg(long)]
        votes_log: Option<PathBuf>,
        /// RFC 3339 instant.
        #[arg(long)]
        start: Option<DateTime<Utc>>,
        #[arg(long)]
        end: Option<DateTime<Utc>>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn load_config(path: Option<&PathBuf>) -> Result<ServiceConfig> {
    match path {
        Some(p) => Ok(ServiceConfig::from_file(p)?),
        None => Ok(ServiceConfig::default()),
    }
}

fn embedder(config: &EmbedderConfig) -> Result<Embedder> {
    Ok(Embedder::from_config(&config.clone().with_env_overrides()?)?)
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let mut config = load_config(cli.config.as_ref())?;

    match cli.command {
        Command::IngestTextbook { input, out_dir } => {
            std::fs::create_dir_all(&out_dir).with_context(|| out_dir.display().to_string())?;
            let built = ingest_textbook(&input, &embedder(&config.embedder)?)?;
            built.write(&DataPaths::in_dir(&out_dir))?;
            println!("{}", serde_json::to_string_pretty(&built.manifest)?);
        }
        Command::IngestExams {
            input,
            out_dir,
            subject,
            min_year,
            max_year,
        } => {
            if min_year > max_year {
                bail!("--min-year {min_year} is after --max-year {max_year}");
            }
            std::fs::create_dir_all(&out_dir).with_context(|| out_dir.display().to_string())?;
            let paths = DataPaths::in_dir(&out_dir);
            let subject = match subject {
                Some(s) => s,
                None => {
                    let m: asksci::ingest::CorpusManifest = asksci::store::load_json(&paths.answer_manifest)
                        .context("no --subject given and no textbook manifest to take it from")?;
                    m.subject
                }
            };
            let bounds = YearBounds {
                min: min_year,
                max: max_year,
            };
            let built = ingest_exam_bank(&input, &subject, bounds, &embedder(&config.embedder)?)?;
            built.write(&paths)?;
            println!("{}", serde_json::to_string_pretty(&built.manifest)?);
        }
        Command::Serve { listen } => {
            if let Some(listen) = listen {
                config.listen = listen;
            }
            tokio::runtime::Runtime::new()?.block_on(service::serve(config))?;
        }
        Command::Ask {
            question,
            data_dir,
            format,
        } => {
            if let Some(dir) = data_dir {
                config.data_dir = dir;
            }
            let corpus = Corpus::load(&config.data_paths())?;
            let engine = QueryEngine::new(corpus, embedder(&config.embedder)?, config.query.clone())?
                .with_figure_base(config.figure_base.clone());
            let result = engine.answer_question(&question, &ClientInfo::new("cli"))?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&result)?),
                Format::Text => {
                    if let Some(msg) = &result.message {
                        println!("{msg}");
                    }
                    for (i, a) in result.answers.iter().enumerate() {
                        println!("{}. [{:.1}%] {}", i + 1, a.score * 100.0, a.text);
                        for f in &a.figures {
                            println!("   {}: {} ({})", f.label, f.caption, f.uri);
                        }
                    }
                    if !result.related.is_empty() {
                        println!("\nRelated past exam questions:");
                        for r in &result.related {
                            println!("- [{:.1}%] {}\n  {}", r.score * 100.0, r.question, r.answer);
                        }
                    }
                }
            }
        }
        Command::Metrics {
            questions_log,
            votes_log,
            start,
            end,
            format,
        } => {
            let questions = questions_log.unwrap_or(config.question_log);
            let votes = votes_log.unwrap_or(config.vote_log);
            let window = Window::new(start.map(to_timestamp), end.map(to_timestamp))?;
            let report = report_from_logs(&questions, &votes, window)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Text => print!("{}", render_report_text(&report)),
            }
        }
    }
    Ok(())
}
