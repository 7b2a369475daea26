use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sutureml::data::SynthProfile;
use sutureml::pipeline::{
    cmd_benchmark, cmd_evaluate, cmd_fit, cmd_meta_build, cmd_predict, cmd_synth, DataSource, RunConfig,
    DEFAULT_BENCHMARK_REPETITIONS, PREDICTIONS_CSV,
};
use sutureml::report::LossMetric;
use sutureml::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "sutureml", version, about = "AutoML for surgical suturing action recognition")]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct GlobalFlags {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    metric: Option<MetricArg>,
    /// Maximum number of configuration evaluations.
    #[arg(long, global = true, value_name = "N")]
    budget_evals: Option<usize>,
    /// Wall-clock budget for the search.
    #[arg(long, global = true, value_name = "SECONDS")]
    budget_seconds: Option<f64>,
    /// Cross-validation folds (default 5).
    #[arg(long, global = true, value_name = "K")]
    kfolds: Option<usize>,
    /// Knowledge base used to warmstart the search.
    #[arg(long, global = true, value_name = "PATH")]
    warmstart_kb: Option<PathBuf>,
    /// Greedy selection rounds (default 50).
    #[arg(long, global = true, value_name = "N")]
    ensemble_rounds: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MetricArg {
    BalancedAccuracy,
    MacroF1,
    LogLoss,
}

impl From<MetricArg> for LossMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::BalancedAccuracy => LossMetric::BalancedAccuracy,
            MetricArg::MacroF1 => LossMetric::MacroF1,
            MetricArg::LogLoss => LossMetric::LogLoss,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ProfileArg {
    PaperLike,
    Balanced,
}

#[derive(Args, Debug)]
struct ProfileFlags {
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Size multiplier for the paper_like profile.
    #[arg(long)]
    scale: Option<f64>,
    /// Training samples for the balanced profile.
    #[arg(long)]
    total: Option<usize>,
}

impl ProfileFlags {
    fn profile(&self) -> Option<SynthProfile> {
        let kind = match (self.profile, self.scale, self.total) {
            (None, None, None) => return None,
            (Some(p), _, _) => p,
            (None, _, Some(_)) => ProfileArg::Balanced,
            (None, _, None) => ProfileArg::PaperLike,
        };
        Some(match kind {
            ProfileArg::PaperLike => match self.scale {
                Some(scale) => SynthProfile::PaperLike { scale },
                None => SynthProfile::default(),
            },
            ProfileArg::Balanced => SynthProfile::Balanced {
                total: self.total.unwrap_or(1100),
            },
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search, ensemble and report; writes a model bundle.
    Fit {
        /// Training CSV (features or labeled trajectory); synthetic data when omitted.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, requires = "train")]
        test: Option<PathBuf>,
        #[command(flatten)]
        synth: ProfileFlags,
    },
    /// Predict classes and probabilities for a CSV.
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Score a bundle on a labeled CSV.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Throughput and accuracy of every ensemble truncation.
    Benchmark {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BENCHMARK_REPETITIONS)]
        repetitions: usize,
    },
    /// Write a synthetic train/test pair and a labeled recording.
    Synth {
        #[command(flatten)]
        synth: ProfileFlags,
    },
    /// Build a knowledge base from a list of datasets.
    MetaBuild {
        /// One dataset per line: a CSV path or `synth:paper_like:<scale>` / `synth:balanced:<total>`.
        #[arg(long)]
        list: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        /// Skip datasets that fail instead of aborting.
        #[arg(long)]
        allow_partial: bool,
    },
}

fn run_config(g: &GlobalFlags) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(m) = g.metric {
        cfg.metric = m.into();
    }
    if let Some(n) = g.budget_evals {
        cfg.budget.max_evaluations = n;
    }
    if let Some(s) = g.budget_seconds {
        cfg.budget.max_wall_time_s = Some(s);
    }
    if let Some(k) = g.kfolds {
        cfg.budget.k_folds = k;
    }
    if let Some(kb) = &g.warmstart_kb {
        cfg.warmstart.enabled = true;
        cfg.warmstart.kb_path = Some(kb.clone());
    }
    if let Some(r) = g.ensemble_rounds {
        cfg.ensemble_rounds = r;
    }
    if let Some(out) = &g.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = run_config(&cli.global)?;
    match cli.command {
        Command::Fit { train, test, synth } => {
            if let Some(train) = train {
                cfg.data = DataSource::Files { train, test };
            } else if let Some(profile) = synth.profile() {
                cfg.data = DataSource::Synth { profile };
            }
            let outcome = cmd_fit(&cfg)?;
            let r = &outcome.bundle.summary.report;
            println!(
                "{} evaluations, {} ensemble members, accuracy {:.4}, macro recall {:.4}",
                outcome.bundle.summary.evaluations,
                outcome.ensemble.len(),
                r.accuracy,
                r.macro_avg.recall
            );
            for path in &outcome.artifacts {
                println!("wrote {}", path.display());
            }
        }
        Command::Predict { bundle, input } => {
            let (bundle, preds) = cmd_predict(&bundle, &input)?;
            let path = cfg.out_dir.join(PREDICTIONS_CSV);
            write_file(&path, &preds.to_csv(&bundle.class_names))?;
            println!("{} rows predicted, wrote {}", preds.labels.len(), path.display());
        }
        Command::Evaluate { bundle, input } => {
            let report = cmd_evaluate(&bundle, &input, &cfg.out_dir)?;
            print!("{}", report.to_text());
        }
        Command::Benchmark {
            bundle,
            input,
            repetitions,
        } => {
            let rows = cmd_benchmark(&bundle, &input, repetitions, &cfg.out_dir)?;
            print!("{}", sutureml::report::benchmark_csv(&rows));
        }
        Command::Synth { synth } => {
            let profile = synth.profile().unwrap_or_default();
            for path in cmd_synth(&profile, cfg.seed, &cfg.out_dir)? {
                println!("wrote {}", path.display());
            }
        }
        Command::MetaBuild { list, kb, allow_partial } => {
            let outcome = cmd_meta_build(&list, &cfg, &kb, allow_partial)?;
            for (id, e) in &outcome.skipped {
                eprintln!("skipped {id}: [{}] {e}", e.code());
            }
            println!("{} entries, wrote {}", outcome.kb.entries.len(), kb.display());
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
