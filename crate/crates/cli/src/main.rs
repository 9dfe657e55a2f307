//! `gapscope`: run knowledge-gap extraction and evaluation from the shell.
//!
//! Exit status: 0 success, 1 configuration error, 2 data error, 3 service
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gapscope_core::corpus::{filter_gap_statements, load_corpus, write_corpus, CorpusFormat};
use gapscope_core::evaluation::CueDictionary;
use gapscope_core::orchestrator::{
    export_review_bundle, import_judgments, read_run_config, run_agreement, run_evaluate,
    run_extract, ContextMode, OrchestratorError, Overrides, RunConfig, REPORTS_DIR,
};
use gapscope_core::util::atomic_write;

#[derive(Parser)]
#[command(
    name = "gapscope",
    version,
    about = "Knowledge-gap extraction and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; repeat for `agreement`.
    #[arg(long = "run-dir")]
    run_dir: Vec<PathBuf>,
    /// Restrict to these model ids (repeatable).
    #[arg(long)]
    model: Vec<String>,
    #[arg(long = "context-mode")]
    context_mode: Option<ContextMode>,
    #[arg(long = "chunk-budget")]
    chunk_budget: Option<usize>,
    #[arg(long = "match-threshold")]
    match_threshold: Option<f64>,
    #[arg(long = "entailment-threshold")]
    entailment_threshold: Option<f64>,
    #[arg(long = "cluster-threshold")]
    cluster_threshold: Option<f64>,
    #[arg(long = "grounding-threshold")]
    grounding_threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a corpus; optionally write its canonical form.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Corpus path, when not taken from --config.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        format: Option<CorpusFormat>,
        /// Write canonical section JSON-lines here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prompt every model on every unit and store parsed predictions.
    Extract {
        #[command(flatten)]
        common: Common,
    },
    /// Score a run against gold and write reports.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Cross-model overlap over one or more runs.
    Agreement {
        #[command(flatten)]
        common: Common,
        /// Output directory (default: <first run>/reports/agreement).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the review bundle for an implicit run.
    ExportReview {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize expert judgments into a human-validation report.
    ImportReview {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        judgments: PathBuf,
        /// Output directory (default: <run>/reports).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            run_dir: self.run_dir.first().cloned(),
            context_mode: self.context_mode,
            models: self.model.clone(),
            match_threshold: self.match_threshold,
            entailment_threshold: self.entailment_threshold,
            cluster_threshold: self.cluster_threshold,
            grounding_threshold: self.grounding_threshold,
            chunk_budget: self.chunk_budget,
        }
    }

    /// Config from --config, else the one persisted in the run directory.
    fn load_config(&self) -> Result<RunConfig, OrchestratorError> {
        let mut cfg = match (&self.config, self.run_dir.first()) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(dir)) => read_run_config(dir)?,
            (None, None) => {
                return Err(OrchestratorError::Config(
                    "give --config or --run-dir".into(),
                ))
            }
        };
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }

    fn single_run_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.run_dir
            .first()
            .cloned()
            .unwrap_or_else(|| cfg.run_dir.clone())
    }
}

fn run(command: Command) -> Result<(), OrchestratorError> {
    match command {
        Command::Ingest {
            common,
            corpus,
            format,
            out,
        } => {
            let (path, format, policy) = match (corpus, format) {
                (Some(p), Some(f)) => (p, f, None),
                (Some(_), None) | (None, Some(_)) => {
                    return Err(OrchestratorError::Config(
                        "--corpus and --format go together".into(),
                    ))
                }
                (None, None) => {
                    let cfg = common.load_config()?;
                    (
                        cfg.corpus.path.clone(),
                        cfg.corpus.format,
                        Some(cfg.corpus.filter_policy()),
                    )
                }
            };
            let mut corpus = load_corpus(&path, format)?;
            let raw_gold = corpus.gold_count();
            if let Some(policy) = policy {
                corpus = filter_gap_statements(&corpus, &policy);
            }
            let masked: usize = corpus
                .paragraphs()
                .map(|p| p.masked_conclusions.len())
                .sum();
            println!(
                "documents={} sections={} paragraphs={} gold={} gold_after_filter={} masked={}",
                corpus.documents.len(),
                corpus.sections().count(),
                corpus.paragraph_count(),
                raw_gold,
                corpus.gold_count(),
                masked
            );
            if let Some(out) = out {
                atomic_write(&out, write_corpus(&corpus))?;
                println!("wrote {}", out.display());
            }
        }
        Command::Extract { common } => {
            let path = common
                .config
                .as_ref()
                .ok_or_else(|| OrchestratorError::Config("extract needs --config".into()))?;
            let mut cfg = RunConfig::load(path)?;
            cfg.apply(&common.overrides());
            let s = run_extract(&cfg)?;
            println!(
                "run={} predictions={} backend_calls={} cache_hits={} context_length={}",
                s.run_dir.display(),
                s.predictions,
                s.backend_calls,
                s.cache_hits,
                s.context_length
            );
        }
        Command::Evaluate { common } => {
            let cfg = common.load_config()?;
            let run_dir = common.single_run_dir(&cfg);
            let s = run_evaluate(&run_dir, &cfg)?;
            for f in s.report_files {
                println!("wrote {}", f.display());
            }
        }
        Command::Agreement { common, out } => {
            if common.run_dir.is_empty() {
                return Err(OrchestratorError::Config(
                    "agreement needs at least one --run-dir".into(),
                ));
            }
            let cfg = match &common.config {
                Some(path) => {
                    let mut c = RunConfig::load(path)?;
                    c.apply(&common.overrides());
                    Some(c)
                }
                None => None,
            };
            let threshold = common
                .cluster_threshold
                .or(cfg.as_ref().map(|c| c.thresholds.cluster))
                .unwrap_or(gapscope_core::agreement::DEFAULT_CLUSTER_THRESHOLD);
            let use_stemming = cfg.as_ref().is_none_or(|c| c.evaluation.use_stemming);
            let cues = match cfg.as_ref().and_then(|c| c.cue_dictionary.as_ref()) {
                Some(p) => Some(CueDictionary::load(p)?),
                None => None,
            };
            let out = out.unwrap_or_else(|| common.run_dir[0].join(REPORTS_DIR).join("agreement"));
            let s = run_agreement(
                &common.run_dir,
                &out,
                threshold,
                use_stemming,
                cues.as_ref(),
            )?;
            println!("models={} clusters={}", s.models.join(","), s.clusters);
            for (k, v) in &s.regions {
                println!("{k}\t{v}");
            }
        }
        Command::ExportReview { common, out } => {
            let cfg = common.load_config()?;
            let run_dir = common.single_run_dir(&cfg);
            let path = export_review_bundle(&run_dir, &cfg, out.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::ImportReview {
            common,
            bundle,
            judgments,
            out,
        } => {
            let run_dir = common.run_dir.first();
            let bundle = bundle
                .or_else(|| run_dir.map(|d| d.join(REPORTS_DIR).join("review_bundle.json")))
                .ok_or_else(|| {
                    OrchestratorError::Config("import-review needs --bundle or --run-dir".into())
                })?;
            let out = out
                .or_else(|| run_dir.map(|d| d.join(REPORTS_DIR)))
                .unwrap_or_else(|| bundle.parent().map(Path::to_path_buf).unwrap_or_default());
            let r = import_judgments(&bundle, &judgments, &out)?;
            println!(
                "items={} judged={} coverage_pct={} gap_agree_pct={} direction_agree_pct={}",
                r.items_total,
                r.items_judged,
                r.coverage_pct,
                r.gap.agree_pct,
                r.direction.agree_pct
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gapscope: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
