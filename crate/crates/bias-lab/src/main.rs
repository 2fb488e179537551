//! Command-line front end: sample synthetic datasets, corrupt them, train
//! classifiers, run verification suites, and execute experiment grids.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use bias_lab::data::Dataset;
use bias_lab::inject::{self, InjectionKind, InjectionSpec};
use bias_lab::nn::{self, Architecture, Method, TrainConfig, TrainedModel};
use bias_lab::runner::{self, GridSpec};
use bias_lab::scm::{build_scm, ScmConfig};
use bias_lab::verify::{self, VerificationReport, EPS_NATS, EPS_PROBE};

#[derive(Parser)]
#[command(name = "bias-lab", version, about = "Synthetic bias laboratory")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Prevalence,
    Presentation,
    Annotation,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Erm,
    Frl,
    Cfrl,
}

impl MethodArg {
    fn method(self) -> Method {
        match self {
            MethodArg::Erm => Method::Erm,
            MethodArg::Frl => Method::FrlMarginal,
            MethodArg::Cfrl => Method::FrlConditional,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Iid,
    Lemmas,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from a causal model config (TOML ScmConfig).
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corrupt an existing dataset with one bias mechanism.
    Inject {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        kind: KindArg,
        #[arg(long, default_value_t = 1)]
        group: u8,
        #[arg(long, default_value_t = 0.5)]
        rate: f64,
        #[arg(long, default_value_t = 0.5)]
        severity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a classifier and write a checkpoint.
    Train {
        #[arg(long)]
        method: MethodArg,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// Optional TOML TrainConfig override file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run verification suites against a causal model config.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        /// TOML ScmConfig the suite instantiates.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute an experiment grid (TOML GridSpec).
    Grid {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a completed grid directory.
    Report {
        dir: PathBuf,
        #[arg(long)]
        svg: bool,
    },
}

/// Default output root: --out if given, else $BIAS_LAB_OUT/<leaf>, else ./<leaf>.
fn out_path(explicit: Option<PathBuf>, leaf: &str) -> PathBuf {
    explicit.unwrap_or_else(|| {
        std::env::var_os("BIAS_LAB_OUT")
            .map(|root| PathBuf::from(root).join(leaf))
            .unwrap_or_else(|| PathBuf::from(leaf))
    })
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("configuring worker pool")?;
    }
    #[cfg(not(feature = "parallel"))]
    if cli.workers.is_some_and(|w| w > 1) {
        eprintln!("note: built without the 'parallel' feature; running sequentially");
    }

    match cli.command {
        Command::Sample { config, n, seed, out } => {
            let cfg: ScmConfig = read_toml(&config)?;
            let scm = build_scm(cfg)?;
            let d = scm.sample_dataset(n, seed);
            let out = out_path(out, "dataset");
            d.save(&out)?;
            println!("wrote {n} records to {}", out.display());
        }
        Command::Inject { input, kind, group, rate, severity, seed, out } => {
            let d = Dataset::load(&input)?;
            let spec = InjectionSpec {
                kind: match kind {
                    KindArg::Prevalence => InjectionKind::Prevalence,
                    KindArg::Presentation => InjectionKind::Presentation,
                    KindArg::Annotation => InjectionKind::Annotation,
                },
                target_group: group,
                rate,
                severity,
                seed,
            };
            let corrupted = inject::inject(&d, &spec)?;
            let out = out_path(out, "dataset-injected");
            corrupted.save(&out)?;
            let ev = corrupted.injection_history.last().unwrap();
            println!(
                "affected {} records ({} -> {})",
                ev.affected,
                d.len(),
                corrupted.len()
            );
            println!("wrote {}", out.display());
        }
        Command::Train { method, train, val, config, out } => {
            let train_d = Dataset::load(&train)?;
            let val_d = Dataset::load(&val)?;
            let mut cfg = TrainConfig::for_method(method.method());
            if let Some(path) = config {
                cfg = read_toml(&path)?;
                cfg.method = method.method();
            }
            let arch = Architecture::for_input(train_d.d_z() + train_d.d_a());
            let model = nn::train(&train_d, &val_d, &arch, &cfg)?;
            let out = out_path(out, "model.json");
            model.save(&out)?;
            let last = &model.history[model.stopping_epoch];
            println!(
                "stopped at epoch {} (val worst-group AUC {:.4}); wrote {}",
                model.stopping_epoch,
                last.val_worst_group_auc,
                out.display()
            );
        }
        Command::Verify { suite, config, out } => {
            let cfg: ScmConfig = read_toml(&config)?;
            let report = run_verify_suite(suite, cfg)?;
            let out = out_path(out, "report.json");
            report.save(&out)?;
            for c in &report.checks {
                let status = if !c.applicable {
                    "n/a "
                } else if c.pass {
                    "pass"
                } else {
                    "FAIL"
                };
                println!("[{status}] {} {}", c.name, c.notes);
            }
            println!("wrote {}", out.display());
            if !report.all_pass() {
                std::process::exit(1);
            }
        }
        Command::Grid { spec, out } => {
            let spec = match spec {
                Some(path) => GridSpec::from_toml(&std::fs::read_to_string(&path)?)?,
                None => GridSpec::desk_default(),
            };
            let out = out_path(out, "grid");
            let summary = runner::run_grid(&spec, &out)?;
            println!(
                "{} cells total, {} newly run; results at {}",
                summary.total_cells,
                summary.new_runs,
                summary.csv_path.display()
            );
            if !summary.failed.is_empty() {
                for f in &summary.failed {
                    eprintln!("failed: {f}");
                }
                std::process::exit(1);
            }
        }
        Command::Report { dir, svg } => {
            let artifacts = runner::report(&dir, svg)?;
            print!("{}", artifacts.markdown);
        }
    }
    Ok(())
}

/// Builds the requested verification suite around one causal model: IID
/// futility on trained models, the exact/lemma-level checks, or both.
fn run_verify_suite(suite: SuiteArg, cfg: ScmConfig) -> Result<VerificationReport> {
    let scm = build_scm(cfg.clone())?;
    let mut report = VerificationReport::default();

    let train = scm.sample_dataset(4000, 11);
    let val = scm.sample_dataset(1000, 12);
    let test_iid = scm.sample_dataset(4000, 13);
    let arch = Architecture::for_input(train.d_z() + train.d_a());
    let trained = |method: Method| -> Result<TrainedModel> {
        let mut tc = TrainConfig::for_method(method);
        tc.seed = 11;
        Ok(nn::train(&train, &val, &arch, &tc)?)
    };

    let want_iid = matches!(suite, SuiteArg::Iid | SuiteArg::All);
    let want_lemmas = matches!(suite, SuiteArg::Lemmas | SuiteArg::All);

    if cfg.family == bias_lab::scm::Family::Discrete {
        report.checks.push(verify::check_unbiased_exact(&scm)?);
        report.checks.push(verify::oracle_futility(&scm)?);
    } else {
        report
            .checks
            .push(verify::check_unbiased_sampled(&train, 99, 17));
    }

    if want_iid || want_lemmas {
        let erm = trained(Method::Erm)?;
        let frl = trained(Method::FrlMarginal)?;
        if want_iid {
            report.checks.push(verify::check_futility(
                &erm, &frl, &train, &test_iid, true, EPS_PROBE, EPS_NATS, 19,
            )?);
        }
        if want_lemmas {
            report
                .checks
                .push(verify::check_fair_rep_invariance(&frl, &scm, 500, 23, EPS_PROBE)?);
            report
                .checks
                .push(verify::check_erm_fairness_iff(&erm, &scm, &train, EPS_PROBE, 29)?);
        }
    } else {
        bail!("unknown suite");
    }
    Ok(report)
}
