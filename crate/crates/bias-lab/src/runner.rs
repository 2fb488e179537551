//! Experiment grid executor and report generator.
//!
//! A grid crosses SCM configs (spanning separability levels) with bias
//! mechanisms, training methods, and seeds. Every cell trains on data from
//! the (possibly biased) model and always evaluates on a test set drawn
//! from the unbiased counterpart. Cells persist individual JSON results
//! (atomically, via tmp+rename), so interrupted grids resume without
//! retraining; the assembled CSV is byte-deterministic.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::exec;
use crate::inject::{self, InjectionKind, InjectionSpec};
use crate::metrics::{self, MetricsReport};
use crate::nn::{self, Architecture, Method, TrainConfig};
use crate::rng;
use crate::scm::{build_scm, Mechanism, ScmConfig};

pub const CSV_HEADER: &str = "dataset_id,mechanism,separability_s,method,seed,group,\
accuracy,auc,delta_acc_pp,probe_auc,mi_a_r,mi_y_r,cmi";

/// Optional overrides of the per-method training defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub adversarial_coefficient: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
    pub hidden: Option<Vec<usize>>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = self.adversarial_coefficient {
            if cfg.method != Method::Erm {
                cfg.adversarial_coefficient = v;
            }
        }
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Base models; typically identical except for separability_strength.
    /// Their `mechanism` field is overridden per grid cell.
    pub scm_configs: Vec<ScmConfig>,
    pub mechanisms: Vec<Mechanism>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Bias-knob defaults applied when a cell's mechanism needs them.
    #[serde(default = "default_prevalence_rates")]
    pub prevalence_rates: (f64, f64),
    #[serde(default = "default_presentation_shift")]
    pub presentation_shift: f64,
    #[serde(default = "default_annotation_flip")]
    pub annotation_flip: f64,
    /// "native": sample the biased model directly. "injected": sample the
    /// unbiased counterpart and corrupt it post hoc.
    #[serde(default = "default_bias_source")]
    pub bias_source: String,
    /// Injection rate when bias_source = "injected".
    #[serde(default = "default_injection_rate")]
    pub injection_rate: f64,
    #[serde(default)]
    pub train: TrainOverrides,
    /// Skip the attribute-classifier run and report oracle separability
    /// instead; cuts grid time roughly in half.
    #[serde(default)]
    pub skip_measured_separability: bool,
}

fn default_prevalence_rates() -> (f64, f64) {
    (0.3, 0.6)
}
fn default_presentation_shift() -> f64 {
    2.0
}
fn default_annotation_flip() -> f64 {
    0.3
}
fn default_bias_source() -> String {
    "native".into()
}
fn default_injection_rate() -> f64 {
    0.5
}

impl GridSpec {
    /// Desk-scale defaults: Gaussian models at three separability levels,
    /// all mechanisms, both marginal methods, five seeds.
    pub fn desk_default() -> GridSpec {
        let scm_configs = [0.1, 0.4, 0.8]
            .iter()
            .map(|&s| ScmConfig {
                separability_strength: s,
                ..ScmConfig::default()
            })
            .collect();
        GridSpec {
            scm_configs,
            mechanisms: vec![
                Mechanism::Unbiased,
                Mechanism::Prevalence,
                Mechanism::Presentation,
                Mechanism::Annotation,
            ],
            methods: vec![Method::Erm, Method::FrlMarginal],
            seeds: vec![0, 1, 2, 3, 4],
            n_train: 8000,
            n_val: 2000,
            n_test: 10_000,
            prevalence_rates: default_prevalence_rates(),
            presentation_shift: default_presentation_shift(),
            annotation_flip: default_annotation_flip(),
            bias_source: default_bias_source(),
            injection_rate: default_injection_rate(),
            train: TrainOverrides::default(),
            skip_measured_separability: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<GridSpec> {
        let spec: GridSpec = toml::from_str(text).context("parsing grid spec")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scm_configs.is_empty()
            || self.mechanisms.is_empty()
            || self.methods.is_empty()
            || self.seeds.is_empty()
        {
            bail!("grid spec must list at least one config, mechanism, method, and seed");
        }
        if !matches!(self.bias_source.as_str(), "native" | "injected") {
            bail!("bias_source must be 'native' or 'injected'");
        }
        if self.bias_source == "injected"
            && self.mechanisms.iter().any(|m| {
                matches!(m, Mechanism::CausalAnnotation | Mechanism::Collider)
            })
        {
            bail!("injected bias supports only prevalence, presentation, annotation");
        }
        for (i, base) in self.scm_configs.iter().enumerate() {
            for m in &self.mechanisms {
                self.specialize(base, *m)
                    .validate()
                    .with_context(|| format!("scm_configs[{i}] with mechanism {}", m.name()))?;
            }
        }
        Ok(())
    }

    /// Applies a mechanism and the grid's bias knobs to a base config.
    fn specialize(&self, base: &ScmConfig, mechanism: Mechanism) -> ScmConfig {
        let mut c = base.clone();
        c.mechanism = mechanism;
        c.pad_interaction = false;
        c.base_rates = (base.base_rates.0, base.base_rates.0);
        c.presentation_shift = 0.0;
        c.annotation_flip = 0.0;
        match mechanism {
            Mechanism::Unbiased | Mechanism::Collider => {}
            Mechanism::Prevalence => c.base_rates = self.prevalence_rates,
            Mechanism::Presentation => c.presentation_shift = self.presentation_shift,
            Mechanism::Annotation | Mechanism::CausalAnnotation => {
                c.annotation_flip = self.annotation_flip
            }
        }
        c
    }

    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (idx, base) in self.scm_configs.iter().enumerate() {
            for &mechanism in &self.mechanisms {
                for &method in &self.methods {
                    for &seed in &self.seeds {
                        out.push(Cell {
                            config_index: idx,
                            mechanism,
                            method,
                            seed,
                            base: base.clone(),
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Cell {
    config_index: usize,
    mechanism: Mechanism,
    method: Method,
    seed: u64,
    base: ScmConfig,
}

impl Cell {
    fn dataset_id(&self, injected: bool) -> String {
        let suffix = if injected { "-inj" } else { "" };
        format!("d{:02}{suffix}", self.config_index)
    }

    fn key(&self, injected: bool) -> String {
        format!(
            "{}_{}_{}_{}",
            self.dataset_id(injected),
            self.mechanism.name(),
            self.method.name(),
            self.seed
        )
    }
}

/// One completed grid cell, persisted as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset_id: String,
    pub mechanism: String,
    pub separability_s: f64,
    pub method: String,
    pub seed: u64,
    /// Test AUC of an attribute classifier (oracle value when measurement
    /// is skipped).
    pub separability_auc: f64,
    pub report: MetricsReport,
    pub checkpoint: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: GridSpec,
    pub total_cells: usize,
    pub completed: Vec<String>,
    pub failed: Vec<String>,
}

#[derive(Debug)]
pub struct GridSummary {
    pub total_cells: usize,
    pub new_runs: usize,
    pub failed: Vec<String>,
    pub csv_path: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// Derived per-purpose dataset seeds, so cells never share RNG streams.
fn data_seed(cell_seed: u64, purpose: u64) -> u64 {
    rng::mix(cell_seed, 0xDA7A_0000 + purpose)
}

fn run_cell(spec: &GridSpec, cell: &Cell, out_dir: &Path) -> Result<RunResult> {
    let started = Instant::now();
    let injected = spec.bias_source == "injected";
    let biased_cfg = spec.specialize(&cell.base, cell.mechanism);
    let unbiased_cfg = biased_cfg.unbiased_counterpart();
    let biased = build_scm(biased_cfg.clone())?;
    let unbiased = build_scm(unbiased_cfg)?;

    let (train, val) = if injected && cell.mechanism != Mechanism::Unbiased {
        let raw = unbiased.sample_dataset(
            spec.n_train + spec.n_val,
            data_seed(cell.seed, 1),
        );
        let kind = match cell.mechanism {
            Mechanism::Prevalence => InjectionKind::Prevalence,
            Mechanism::Presentation => InjectionKind::Presentation,
            Mechanism::Annotation => InjectionKind::Annotation,
            _ => bail!("injected bias unsupported for {}", cell.mechanism.name()),
        };
        let corrupted = inject::inject(
            &raw,
            &InjectionSpec {
                kind,
                target_group: 1,
                rate: spec.injection_rate,
                severity: spec.presentation_shift.min(1.0),
                seed: data_seed(cell.seed, 4),
            },
        )?;
        let frac_train = spec.n_train as f64 / (spec.n_train + spec.n_val) as f64;
        let (t, v, _) =
            inject::split_dataset(&corrupted, (frac_train, 1.0 - frac_train, 0.0), cell.seed)?;
        (t, v)
    } else {
        (
            biased.sample_dataset(spec.n_train, data_seed(cell.seed, 1)),
            biased.sample_dataset(spec.n_val, data_seed(cell.seed, 2)),
        )
    };
    // The test set always comes from the unbiased counterpart.
    let test = unbiased.sample_dataset(spec.n_test, data_seed(cell.seed, 3));
    debug_assert!(matches!(
        test.provenance,
        crate::data::Provenance::Scm(ref c) if c.mechanism == Mechanism::Unbiased
    ));

    let d_in = train.d_z() + train.d_a();
    let arch = match &spec.train.hidden {
        Some(h) => {
            let mut widths = vec![d_in];
            widths.extend(h);
            Architecture::new(widths, nn::Activation::Relu)
        }
        None => Architecture::for_input(d_in),
    };
    let mut cfg = TrainConfig::for_method(cell.method);
    cfg.seed = cell.seed;
    spec.train.apply(&mut cfg);
    let model = nn::train(&train, &val, &arch, &cfg)?;

    let mut report = metrics::group_metrics(&model, &test, 0.5)?;
    let reps = model.extract_representations(&test)?;
    let a: Vec<u8> = test.records.iter().map(|r| r.a).collect();
    let y: Vec<u8> = test.records.iter().map(|r| r.y).collect();
    report.probe_auc = metrics::probe_leakage(&reps, &a, data_seed(cell.seed, 5)).ok();
    report.mi.mi_a_r = metrics::mi_continuous(&reps, &a, 8).ok();
    report.mi.mi_y_r = metrics::mi_continuous(&reps, &y, 8).ok();
    report.mi.cmi_y_xa_given_xz = biased.oracle_cmi().ok();

    let separability_auc = if spec.skip_measured_separability {
        biased.oracle_separability()
    } else {
        let mut sep_cfg = TrainConfig::for_method(Method::Erm);
        sep_cfg.seed = cell.seed;
        spec.train.apply(&mut sep_cfg);
        sep_cfg.max_epochs = sep_cfg.max_epochs.min(15);
        metrics::separability_auc(&train, &test, &sep_cfg)?
    };

    let key = cell.key(injected);
    let ckpt = out_dir.join("models").join(format!("{key}.json"));
    model.save(&ckpt)?;

    Ok(RunResult {
        dataset_id: cell.dataset_id(injected),
        mechanism: cell.mechanism.name().into(),
        separability_s: biased_cfg.separability_strength,
        method: cell.method.name().into(),
        seed: cell.seed,
        separability_auc,
        report,
        checkpoint: format!("models/{key}.json"),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Executes every grid cell (in parallel with the default feature set),
/// skipping cells whose result file already exists, then assembles the CSV
/// and manifest. Per-cell failures do not stop the rest of the grid.
pub fn run_grid(spec: &GridSpec, out_dir: &Path) -> Result<GridSummary> {
    spec.validate()?;
    let cells_dir = out_dir.join("cells");
    std::fs::create_dir_all(&cells_dir)?;
    std::fs::create_dir_all(out_dir.join("models"))?;

    let cells = spec.cells();
    let injected = spec.bias_source == "injected";
    let pending: Vec<&Cell> = cells
        .iter()
        .filter(|c| !cells_dir.join(format!("{}.json", c.key(injected))).exists())
        .collect();
    let new_runs = pending.len();

    let outcomes: Vec<(String, Result<()>)> = exec::map_items(&pending, |cell| {
        let key = cell.key(injected);
        let outcome = run_cell(spec, cell, out_dir).and_then(|res| {
            write_atomic(
                &cells_dir.join(format!("{key}.json")),
                serde_json::to_string_pretty(&res)?.as_bytes(),
            )?;
            Ok(())
        });
        (key, outcome)
    });
    let failed: Vec<String> = outcomes
        .iter()
        .filter_map(|(k, r)| r.as_ref().err().map(|e| format!("{k}: {e:#}")))
        .collect();

    let completed: Vec<String> = cells
        .iter()
        .map(|c| c.key(injected))
        .filter(|k| cells_dir.join(format!("{k}.json")).exists())
        .collect();
    let manifest = Manifest {
        spec: spec.clone(),
        total_cells: cells.len(),
        completed: completed.clone(),
        failed: failed.clone(),
    };
    write_atomic(
        &out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;

    let csv_path = out_dir.join("results.csv");
    assemble_csv(out_dir, &csv_path)?;
    Ok(GridSummary {
        total_cells: cells.len(),
        new_runs,
        failed,
        csv_path,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Rebuilds results.csv from the per-cell JSON files. Rows are emitted in
/// sorted coordinate order with shortest-round-trip float formatting, so
/// the bytes depend only on the result values.
pub fn assemble_csv(results_dir: &Path, csv_path: &Path) -> Result<()> {
    let results = load_results(results_dir)?;
    // ERM accuracy per (dataset, mechanism, seed, group) for the delta column.
    let mut erm_acc: BTreeMap<(String, String, u64, u8), f64> = BTreeMap::new();
    for r in &results {
        if r.method == Method::Erm.name() {
            for (g, st) in &r.report.per_group {
                erm_acc.insert(
                    (r.dataset_id.clone(), r.mechanism.clone(), r.seed, *g),
                    st.accuracy,
                );
            }
        }
    }
    let mut rows: Vec<(String, String) > = Vec::new();
    for r in &results {
        for (g, st) in &r.report.per_group {
            let delta = erm_acc
                .get(&(r.dataset_id.clone(), r.mechanism.clone(), r.seed, *g))
                .map(|e| 100.0 * (st.accuracy - e));
            let sort_key = format!(
                "{},{},{},{:05},{}",
                r.dataset_id, r.mechanism, r.method, r.seed, g
            );
            let line = format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.dataset_id,
                r.mechanism,
                r.separability_s,
                r.method,
                r.seed,
                g,
                st.accuracy,
                fmt_opt(st.auc),
                fmt_opt(delta),
                fmt_opt(r.report.probe_auc),
                fmt_opt(r.report.mi.mi_a_r),
                fmt_opt(r.report.mi.mi_y_r),
                fmt_opt(r.report.mi.cmi_y_xa_given_xz),
            );
            rows.push((sort_key, line));
        }
    }
    rows.sort();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (_, line) in rows {
        out.push_str(&line);
        out.push('\n');
    }
    write_atomic(csv_path, out.as_bytes())?;
    Ok(())
}

pub fn load_results(results_dir: &Path) -> Result<Vec<RunResult>> {
    let cells_dir = results_dir.join("cells");
    let mut names: Vec<PathBuf> = std::fs::read_dir(&cells_dir)
        .with_context(|| format!("no cells directory under {}", results_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    names.sort();
    names
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset_id: String,
    pub mechanism: String,
    pub separability_s: f64,
    pub separability_auc_mean: f64,
    pub method: String,
    pub group: u8,
    pub mean_delta_pp: f64,
    pub sd_delta_pp: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone)]
pub struct AssociationPoint {
    pub separability_auc: f64,
    pub mean_delta_pp: f64,
}

#[derive(Debug)]
pub struct ReportArtifacts {
    /// Unbiased-IID suite, per group, ordered by separability.
    pub iid_table: Vec<SummaryRow>,
    /// Biased suites, per mechanism.
    pub mechanism_table: Vec<SummaryRow>,
    /// Group-1 delta vs measured separability, aggregated over biased
    /// mechanisms, with the rank-association test per FRL method.
    pub association: BTreeMap<String, (Vec<AssociationPoint>, Result<(f64, f64), String>)>,
    pub markdown: String,
    pub incomplete: bool,
}

fn mean_sd(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = if vals.len() > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

struct FlatRow {
    dataset_id: String,
    mechanism: String,
    separability_s: f64,
    separability_auc: f64,
    method: String,
    group: u8,
    delta_pp: Option<f64>,
}

fn flatten(results: &[RunResult]) -> Vec<FlatRow> {
    let mut erm_acc: BTreeMap<(String, String, u64, u8), f64> = BTreeMap::new();
    for r in results {
        if r.method == Method::Erm.name() {
            for (g, st) in &r.report.per_group {
                erm_acc.insert(
                    (r.dataset_id.clone(), r.mechanism.clone(), r.seed, *g),
                    st.accuracy,
                );
            }
        }
    }
    let mut out = Vec::new();
    for r in results {
        for (g, st) in &r.report.per_group {
            let delta = erm_acc
                .get(&(r.dataset_id.clone(), r.mechanism.clone(), r.seed, *g))
                .map(|e| 100.0 * (st.accuracy - e));
            out.push(FlatRow {
                dataset_id: r.dataset_id.clone(),
                mechanism: r.mechanism.clone(),
                separability_s: r.separability_s,
                separability_auc: r.separability_auc,
                method: r.method.clone(),
                group: *g,
                delta_pp: delta,
            });
        }
    }
    out
}

fn summarize(rows: &[&FlatRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, String, u8), Vec<&FlatRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.dataset_id.clone(), r.mechanism.clone(), r.method.clone(), r.group))
            .or_default()
            .push(r);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .filter_map(|((dataset_id, mechanism, method, group), rs)| {
            let deltas: Vec<f64> = rs.iter().filter_map(|r| r.delta_pp).collect();
            if deltas.is_empty() {
                return None;
            }
            let (mean_delta_pp, sd_delta_pp) = mean_sd(&deltas);
            let (sep_mean, _) =
                mean_sd(&rs.iter().map(|r| r.separability_auc).collect::<Vec<_>>());
            Some(SummaryRow {
                dataset_id,
                mechanism,
                separability_s: rs[0].separability_s,
                separability_auc_mean: sep_mean,
                method,
                group,
                mean_delta_pp,
                sd_delta_pp,
                n_seeds: deltas.len(),
            })
        })
        .collect();
    // "Datasets are sorted by increasing subgroup separability."
    out.sort_by(|a, b| {
        a.separability_auc_mean
            .partial_cmp(&b.separability_auc_mean)
            .unwrap()
            .then_with(|| a.dataset_id.cmp(&b.dataset_id))
            .then_with(|| a.mechanism.cmp(&b.mechanism))
            .then_with(|| a.method.cmp(&b.method))
            .then_with(|| a.group.cmp(&b.group))
    });
    out
}

fn table_md(out: &mut String, title: &str, rows: &[SummaryRow]) {
    let _ = writeln!(out, "## {title}\n");
    let _ = writeln!(
        out,
        "| dataset | mechanism | s | sep. AUC | method | group | mean ΔAcc (pp) | sd |\n\
         |---|---|---|---|---|---|---|---|"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.3} | {} | {} | {:+.2} | {:.2} |",
            r.dataset_id,
            r.mechanism,
            r.separability_s,
            r.separability_auc_mean,
            r.method,
            r.group,
            r.mean_delta_pp,
            r.sd_delta_pp
        );
    }
    let _ = writeln!(out);
}

/// Summarizes a results directory: per-group accuracy-gap tables for the
/// IID and biased suites, and the separability association with a
/// rank-correlation test. Writes report.md (and optionally figures.svg).
pub fn report(results_dir: &Path, svg: bool) -> Result<ReportArtifacts> {
    let results = load_results(results_dir)?;
    if results.is_empty() {
        bail!("no completed cells under {}", results_dir.display());
    }
    let incomplete = match std::fs::read_to_string(results_dir.join("manifest.json")) {
        Ok(text) => serde_json::from_str::<Manifest>(&text)
            .map(|m| m.completed.len() < m.total_cells)
            .unwrap_or(true),
        Err(_) => true,
    };
    let flat = flatten(&results);
    let unbiased_name = Mechanism::Unbiased.name();

    let iid_rows: Vec<&FlatRow> = flat
        .iter()
        .filter(|r| r.mechanism == unbiased_name && r.method != Method::Erm.name())
        .collect();
    let iid_table = summarize(&iid_rows);

    let mech_rows: Vec<&FlatRow> = flat
        .iter()
        .filter(|r| r.mechanism != unbiased_name && r.method != Method::Erm.name())
        .collect();
    let mechanism_table = summarize(&mech_rows);

    // Association: aggregate group-1 delta over the biased mechanisms at
    // each dataset (separability level).
    let mut association = BTreeMap::new();
    let frl_methods: Vec<String> = {
        let mut ms: Vec<String> = flat
            .iter()
            .filter(|r| r.method != Method::Erm.name())
            .map(|r| r.method.clone())
            .collect();
        ms.sort();
        ms.dedup();
        ms
    };
    for method in &frl_methods {
        let mut by_dataset: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for r in flat.iter().filter(|r| {
            r.mechanism != unbiased_name && &r.method == method && r.group == 1
        }) {
            let e = by_dataset.entry(r.dataset_id.clone()).or_default();
            if let Some(d) = r.delta_pp {
                e.0.push(d);
                e.1.push(r.separability_auc);
            }
        }
        let points: Vec<AssociationPoint> = by_dataset
            .values()
            .filter(|(d, _)| !d.is_empty())
            .map(|(d, s)| AssociationPoint {
                separability_auc: mean_sd(s).0,
                mean_delta_pp: mean_sd(d).0,
            })
            .collect();
        let tau = if points.len() >= 3 {
            let xs: Vec<f64> = points.iter().map(|p| p.separability_auc).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.mean_delta_pp).collect();
            metrics::kendall_tau(&xs, &ys).map_err(|e| e.to_string())
        } else {
            Err("fewer than 3 separability points".into())
        };
        association.insert(method.clone(), (points, tau));
    }

    let mut md = String::from("# Grid report\n\n");
    if incomplete {
        md.push_str("**Partial coverage:** the manifest lists incomplete cells.\n\n");
    }
    table_md(
        &mut md,
        "IID unbiased suite (accuracy gap vs. unconstrained training)",
        &iid_table,
    );
    table_md(&mut md, "Biased-mechanism suites (unbiased test set)", &mechanism_table);
    md.push_str("## Separability association (group 1, biased mechanisms pooled)\n\n");
    for (method, (points, tau)) in &association {
        let _ = writeln!(md, "### {method}\n");
        let _ = writeln!(md, "| sep. AUC | mean ΔAcc (pp) |\n|---|---|");
        for p in points {
            let _ = writeln!(md, "| {:.3} | {:+.2} |", p.separability_auc, p.mean_delta_pp);
        }
        match tau {
            Ok((t, p)) => {
                let _ = writeln!(md, "\nKendall tau-b = {t:.3}, two-sided p = {p:.4}\n");
            }
            Err(e) => {
                let _ = writeln!(md, "\nRank association unavailable: {e}\n");
            }
        }
    }
    std::fs::write(results_dir.join("report.md"), &md)?;
    if svg {
        std::fs::write(results_dir.join("figures.svg"), association_svg(&association))?;
    }
    Ok(ReportArtifacts {
        iid_table,
        mechanism_table,
        association,
        markdown: md,
        incomplete,
    })
}

/// Minimal scatter plot of the association points, one series per method.
fn association_svg(
    association: &BTreeMap<String, (Vec<AssociationPoint>, Result<(f64, f64), String>)>,
) -> String {
    let (w, h, m) = (640.0, 420.0, 50.0);
    let all: Vec<&AssociationPoint> =
        association.values().flat_map(|(p, _)| p.iter()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (0.5f64, 1.0f64, -1.0f64, 1.0f64);
    for p in &all {
        x0 = x0.min(p.separability_auc);
        x1 = x1.max(p.separability_auc);
        y0 = y0.min(p.mean_delta_pp);
        y1 = y1.max(p.mean_delta_pp);
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0).max(1e-9) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0).max(1e-9) * (h - 2.0 * m);
    let colors = ["#1f77b4", "#d62728", "#2ca02c"];
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        h - m,
        w - m,
        h - m
    );
    let _ = writeln!(
        s,
        "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>",
        h - m
    );
    let zero_y = sy(0.0);
    let _ = writeln!(
        s,
        "<line x1=\"{m}\" y1=\"{zero_y}\" x2=\"{}\" y2=\"{zero_y}\" stroke=\"#999\" \
         stroke-dasharray=\"4\"/>",
        w - m
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">subgroup separability (AUC)</text>",
        w / 2.0 - 80.0,
        h - 12.0
    );
    for (i, (method, (points, _))) in association.iter().enumerate() {
        let color = colors[i % colors.len()];
        for p in points {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{color}\"/>",
                sx(p.separability_auc),
                sy(p.mean_delta_pp)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{method}</text>",
            w - m - 120.0,
            m + 16.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::Family;

    fn tiny_spec() -> GridSpec {
        let mut spec = GridSpec::desk_default();
        spec.scm_configs = vec![
            ScmConfig {
                family: Family::Gaussian,
                d_z: 3,
                d_a: 2,
                separability_strength: 0.2,
                noise_scale: 0.6,
                ..ScmConfig::default()
            },
            ScmConfig {
                family: Family::Gaussian,
                d_z: 3,
                d_a: 2,
                separability_strength: 0.9,
                noise_scale: 0.6,
                ..ScmConfig::default()
            },
        ];
        spec.mechanisms = vec![Mechanism::Unbiased, Mechanism::Prevalence];
        spec.methods = vec![Method::Erm, Method::FrlMarginal];
        spec.seeds = vec![0, 1];
        spec.n_train = 300;
        spec.n_val = 120;
        spec.n_test = 300;
        spec.skip_measured_separability = true;
        spec.train.max_epochs = Some(2);
        spec.train.batch_size = Some(64);
        spec
    }

    #[test]
    fn spec_roundtrip_and_validation() {
        let spec = GridSpec::desk_default();
        let text = toml::to_string(&spec).unwrap();
        let back = GridSpec::from_toml(&text).unwrap();
        assert_eq!(spec, back);

        let mut bad = spec;
        bad.bias_source = "telepathy".into();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cell_count_is_grid_cardinality() {
        let spec = tiny_spec();
        assert_eq!(spec.cells().len(), 2 * 2 * 2 * 2);
    }

    #[test]
    fn grid_runs_resumes_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec();
        let summary = run_grid(&spec, dir.path()).unwrap();
        assert_eq!(summary.total_cells, 16);
        assert_eq!(summary.new_runs, 16);
        assert!(summary.failed.is_empty(), "{:?}", summary.failed);

        let csv1 = std::fs::read(dir.path().join("results.csv")).unwrap();
        // Header + one row per (cell, group).
        let text = String::from_utf8(csv1.clone()).unwrap();
        assert_eq!(text.lines().count(), 1 + 16 * 2);
        assert!(text.starts_with(CSV_HEADER));
        for line in text.lines().skip(1) {
            assert_eq!(line.split(',').count(), 13, "bad row: {line}");
        }

        // Rerun: no new training, byte-identical CSV.
        let summary = run_grid(&spec, dir.path()).unwrap();
        assert_eq!(summary.new_runs, 0);
        let csv2 = std::fs::read(dir.path().join("results.csv")).unwrap();
        assert_eq!(csv1, csv2);

        let artifacts = report(dir.path(), true).unwrap();
        assert!(!artifacts.incomplete);
        assert!(!artifacts.iid_table.is_empty());
        assert!(!artifacts.mechanism_table.is_empty());
        assert!(dir.path().join("report.md").exists());
        assert!(dir.path().join("figures.svg").exists());
        // ERM deltas vs itself are exactly zero, hence excluded; FRL rows
        // carry finite deltas for every group.
        for row in &artifacts.iid_table {
            assert_eq!(row.method, Method::FrlMarginal.name());
            assert!(row.mean_delta_pp.is_finite());
            assert_eq!(row.n_seeds, 2);
        }
    }

    #[test]
    fn report_handles_degenerate_and_monotone_fixtures() {
        // Hand-written summary inputs exercise the aggregation arithmetic.
        let vals = [1.0, 2.0, 3.0, 6.0];
        let (m, sd) = mean_sd(&vals);
        assert_eq!(m, 3.0);
        assert!((sd - (14.0f64 / 3.0).sqrt()).abs() < 1e-12);

        // Monotone association fixture: tau = 1.
        let xs = [0.55, 0.6, 0.7, 0.8, 0.9, 0.95];
        let ys = [0.1, 0.4, 0.9, 1.5, 2.2, 3.0];
        let (tau, p) = metrics::kendall_tau(&xs, &ys).unwrap();
        assert_eq!(tau, 1.0);
        assert!(p < 0.05);

        // Degenerate all-equal deltas: the tau test reports the tie error.
        let ys = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(metrics::kendall_tau(&xs, &ys).is_err());
    }
}
