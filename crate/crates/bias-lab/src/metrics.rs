//! Performance, fairness, information-theoretic, and statistical measures.
//!
//! Mutual information is reported in nats throughout. AUC follows the
//! Mann-Whitney convention with ties counted half.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::{Dataset, FeatureKind};
use crate::nn::{self, Architecture, TrainConfig, TrainedModel};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("inputs must have equal length >= {0}")]
    TooShort(usize),
    #[error("kendall tau undefined: all values tied")]
    AllTied,
    #[error("contingency table is empty or all-zero")]
    EmptyTable,
    #[error("reports cover different groups")]
    GroupMismatch,
    #[error("input must contain both groups")]
    SingleGroup,
}

/// Mann-Whitney AUC with ties counted half. `None` if only one class is
/// present.
pub fn auc(scored: &[(f64, u8)]) -> Option<f64> {
    let n1 = scored.iter().filter(|(_, y)| *y == 1).count();
    let n0 = scored.len() - n1;
    if n1 == 0 || n0 == 0 {
        return None;
    }
    let mut sorted: Vec<&(f64, u8)> = scored.iter().collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // Average rank of the tie group (1-based ranks i+1..=j).
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &sorted[i..j] {
            if item.1 == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    Some((rank_sum_pos - (n1 * (n1 + 1)) as f64 / 2.0) / (n1 as f64 * n0 as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimates {
    pub mi_a_r: Option<f64>,
    pub mi_y_r: Option<f64>,
    pub cmi_y_xa_given_xz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_group: BTreeMap<u8, GroupStats>,
    pub overall_accuracy: f64,
    pub overall_auc: Option<f64>,
    /// |P(pred = 1 | A = 0) - P(pred = 1 | A = 1)|.
    pub dp_gap: f64,
    /// Max over y of the group gap in P(pred = 1 | A, Y = y).
    pub eo_gap: f64,
    pub probe_auc: Option<f64>,
    pub mi: MiEstimates,
    pub threshold: f64,
}

impl MetricsReport {
    /// Flat key-value text rendering.
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "threshold = {}", self.threshold);
        let _ = writeln!(s, "overall.accuracy = {}", self.overall_accuracy);
        if let Some(v) = self.overall_auc {
            let _ = writeln!(s, "overall.auc = {v}");
        }
        for (g, st) in &self.per_group {
            let _ = writeln!(s, "group{g}.accuracy = {}", st.accuracy);
            if let Some(v) = st.auc {
                let _ = writeln!(s, "group{g}.auc = {v}");
            }
            let _ = writeln!(s, "group{g}.n = {}", st.n);
        }
        let _ = writeln!(s, "dp_gap = {}", self.dp_gap);
        let _ = writeln!(s, "eo_gap = {}", self.eo_gap);
        if let Some(v) = self.probe_auc {
            let _ = writeln!(s, "probe_auc = {v}");
        }
        if let Some(v) = self.mi.mi_a_r {
            let _ = writeln!(s, "mi.a_r = {v}");
        }
        if let Some(v) = self.mi.mi_y_r {
            let _ = writeln!(s, "mi.y_r = {v}");
        }
        if let Some(v) = self.mi.cmi_y_xa_given_xz {
            let _ = writeln!(s, "mi.cmi = {v}");
        }
        s
    }
}

/// Accuracy, AUC, and parity gaps of `model` on `d` at the given threshold.
pub fn group_metrics(
    model: &TrainedModel,
    d: &Dataset,
    threshold: f64,
) -> Result<MetricsReport, MetricsError> {
    if d.is_empty() || !d.has_group(0) || !d.has_group(1) {
        return Err(MetricsError::SingleGroup);
    }
    let scored: Vec<(f64, u8, u8)> = (0..d.len())
        .map(|i| {
            let (p, _) = model.predict(&d.features(i)).expect("dims fixed by caller");
            (p, d.records[i].y, d.records[i].a)
        })
        .collect();
    Ok(scored_metrics(&scored, threshold))
}

/// Same as [`group_metrics`] but from precomputed (score, y, a) triples.
pub fn scored_metrics(scored: &[(f64, u8, u8)], threshold: f64) -> MetricsReport {
    let mut per_group = BTreeMap::new();
    let mut pos_rate = [0.0f64; 2];
    let mut group_n = [0.0f64; 2];
    // P(pred=1 | a, y): [a][y] -> (count pred 1, count).
    let mut cond = [[(0.0f64, 0.0f64); 2]; 2];
    for a in 0..2u8 {
        let grp: Vec<(f64, u8)> = scored
            .iter()
            .filter(|(_, _, ga)| *ga == a)
            .map(|(p, y, _)| (*p, *y))
            .collect();
        if grp.is_empty() {
            continue;
        }
        let correct = grp
            .iter()
            .filter(|(p, y)| (*p >= threshold) == (*y == 1))
            .count();
        per_group.insert(
            a,
            GroupStats {
                accuracy: correct as f64 / grp.len() as f64,
                auc: auc(&grp),
                n: grp.len(),
            },
        );
    }
    for (p, y, a) in scored {
        let pred = (*p >= threshold) as usize as f64;
        pos_rate[*a as usize] += pred;
        group_n[*a as usize] += 1.0;
        cond[*a as usize][*y as usize].0 += pred;
        cond[*a as usize][*y as usize].1 += 1.0;
    }
    let dp_gap = (pos_rate[0] / group_n[0].max(1.0) - pos_rate[1] / group_n[1].max(1.0)).abs();
    let mut eo_gap = 0.0f64;
    for y in 0..2 {
        if cond[0][y].1 > 0.0 && cond[1][y].1 > 0.0 {
            eo_gap = eo_gap.max((cond[0][y].0 / cond[0][y].1 - cond[1][y].0 / cond[1][y].1).abs());
        }
    }
    let overall: Vec<(f64, u8)> = scored.iter().map(|(p, y, _)| (*p, *y)).collect();
    let correct = overall
        .iter()
        .filter(|(p, y)| (*p >= threshold) == (*y == 1))
        .count();
    MetricsReport {
        per_group,
        overall_accuracy: correct as f64 / overall.len() as f64,
        overall_auc: auc(&overall),
        dp_gap,
        eo_gap,
        probe_auc: None,
        mi: MiEstimates {
            mi_a_r: None,
            mi_y_r: None,
            cmi_y_xa_given_xz: None,
        },
        threshold,
    }
}

/// Percentage-point accuracy difference per group; positive means `frl`
/// outperforms `erm`.
pub fn delta_acc(
    frl: &MetricsReport,
    erm: &MetricsReport,
) -> Result<BTreeMap<u8, f64>, MetricsError> {
    if frl.per_group.keys().ne(erm.per_group.keys()) {
        return Err(MetricsError::GroupMismatch);
    }
    Ok(frl
        .per_group
        .iter()
        .map(|(g, f)| (*g, 100.0 * (f.accuracy - erm.per_group[g].accuracy)))
        .collect())
}

/// Test AUC of a classifier trained to predict the sensitive attribute:
/// the measured subgroup separability.
pub fn separability_auc(
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<f64, MetricsError> {
    let relabel = |d: &Dataset| {
        let mut out = d.clone();
        for r in out.records.iter_mut() {
            r.y = r.a;
        }
        out
    };
    let tr = relabel(train);
    let (fit, val) = {
        let (a, b, _) = crate::inject::split_dataset(&tr, (0.8, 0.2, 0.0), cfg.seed)
            .map_err(|_| MetricsError::TooShort(10))?;
        (a, b)
    };
    let arch = Architecture::for_input(tr.d_z() + tr.d_a());
    let model = nn::train(&fit, &val, &arch, cfg).map_err(|_| MetricsError::SingleGroup)?;
    let scored: Vec<(f64, u8)> = (0..test.len())
        .map(|i| {
            let (p, _) = model.predict(&test.features(i)).unwrap();
            (p, test.records[i].a)
        })
        .collect();
    auc(&scored).ok_or(MetricsError::SingleGroup)
}

/// Plug-in mutual information of a 2-D contingency table, in nats.
pub fn mi_discrete(counts: &[Vec<u64>]) -> Result<f64, MetricsError> {
    let total: u64 = counts.iter().flatten().sum();
    if total == 0 {
        return Err(MetricsError::EmptyTable);
    }
    let n = total as f64;
    let rows = counts.len();
    let cols = counts[0].len();
    let mut p_r = vec![0.0; rows];
    let mut p_c = vec![0.0; cols];
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            p_r[i] += c as f64 / n;
            p_c[j] += c as f64 / n;
        }
    }
    let mut mi = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p / (p_r[i] * p_c[j])).ln();
            }
        }
    }
    Ok(mi)
}

/// Miller-Madow bias-corrected variant of [`mi_discrete`]:
/// subtracts (non-empty cells - non-empty rows - non-empty cols + 1) / 2n.
pub fn mi_discrete_miller_madow(counts: &[Vec<u64>]) -> Result<f64, MetricsError> {
    let plugin = mi_discrete(counts)?;
    let n: u64 = counts.iter().flatten().sum();
    let cells = counts.iter().flatten().filter(|c| **c > 0).count() as f64;
    let rows = counts.iter().filter(|r| r.iter().any(|c| *c > 0)).count() as f64;
    let cols = (0..counts[0].len())
        .filter(|&j| counts.iter().any(|r| r[j] > 0))
        .count() as f64;
    Ok(plugin - (cells - rows - cols + 1.0) / (2.0 * n as f64))
}

/// Plug-in I(Y; X_A | X_Z) from counts indexed `[y][x_a][x_z]`, in nats.
pub fn cmi_discrete(counts: &[Vec<Vec<u64>>]) -> Result<f64, MetricsError> {
    let total: u64 = counts.iter().flatten().flatten().sum();
    if total == 0 {
        return Err(MetricsError::EmptyTable);
    }
    let n = total as f64;
    let d_y = counts.len();
    let d_a = counts[0].len();
    let d_z = counts[0][0].len();
    let mut p_z = vec![0.0; d_z];
    let mut p_yz = vec![0.0; d_y * d_z];
    let mut p_az = vec![0.0; d_a * d_z];
    for y in 0..d_y {
        for a in 0..d_a {
            for z in 0..d_z {
                let p = counts[y][a][z] as f64 / n;
                p_z[z] += p;
                p_yz[y * d_z + z] += p;
                p_az[a * d_z + z] += p;
            }
        }
    }
    let mut mi = 0.0;
    for y in 0..d_y {
        for a in 0..d_a {
            for z in 0..d_z {
                let p = counts[y][a][z] as f64 / n;
                if p > 0.0 {
                    mi += p * (p * p_z[z] / (p_yz[y * d_z + z] * p_az[a * d_z + z])).ln();
                }
            }
        }
    }
    Ok(mi)
}

/// L2-regularized logistic probe fit by full-batch gradient descent.
/// Deterministic and invariant to row order. Returns (weights, bias) over
/// standardized columns plus the standardization parameters.
struct Probe {
    w: Vec<f64>,
    b: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Probe {
    fn fit(rows: &[Vec<f64>], labels: &[u8]) -> Probe {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut scale = vec![0.0; d];
        for r in rows {
            for k in 0..d {
                scale[k] += (r[k] - mean[k]).powi(2) / n;
            }
        }
        for s in scale.iter_mut() {
            *s = s.sqrt().max(1e-12);
        }
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let lr = 1.0;
        let l2 = 1e-3;
        for _ in 0..400 {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (r, &y) in rows.iter().zip(labels) {
                let z: f64 = (0..d).map(|k| w[k] * (r[k] - mean[k]) / scale[k]).sum::<f64>() + b;
                let p = 1.0 / (1.0 + (-z).exp());
                let e = (p - y as f64) / n;
                for k in 0..d {
                    gw[k] += e * (r[k] - mean[k]) / scale[k];
                }
                gb += e;
            }
            for k in 0..d {
                w[k] -= lr * (gw[k] + l2 * w[k]);
            }
            b -= lr * gb;
        }
        Probe { w, b, mean, scale }
    }

    fn logit(&self, r: &[f64]) -> f64 {
        (0..r.len())
            .map(|k| self.w[k] * (r[k] - self.mean[k]) / self.scale[k])
            .sum::<f64>()
            + self.b
    }
}

/// Held-out AUC of a logistic probe predicting `attr` from the rows of `r`.
/// AUC near 0.5 operationalizes I(A; R) = 0.
pub fn probe_leakage(r: &[Vec<f64>], attr: &[u8], seed: u64) -> Result<f64, MetricsError> {
    if r.len() < 50 || r.len() != attr.len() {
        return Err(MetricsError::TooShort(50));
    }
    if attr.iter().all(|a| *a == attr[0]) {
        return Err(MetricsError::SingleGroup);
    }
    let mut order: Vec<usize> = (0..r.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng::stream(seed, 0x9806E));
    let cut = (r.len() * 7) / 10;
    let fit_rows: Vec<Vec<f64>> = order[..cut].iter().map(|&i| r[i].clone()).collect();
    let fit_labels: Vec<u8> = order[..cut].iter().map(|&i| attr[i]).collect();
    if fit_labels.iter().all(|a| *a == fit_labels[0]) {
        return Err(MetricsError::SingleGroup);
    }
    let probe = Probe::fit(&fit_rows, &fit_labels);
    let scored: Vec<(f64, u8)> = order[cut..]
        .iter()
        .map(|&i| (probe.logit(&r[i]), attr[i]))
        .collect();
    auc(&scored).ok_or(MetricsError::SingleGroup)
}

/// Binned plug-in estimate of I(R; label) in nats.
///
/// Multi-dimensional representations are reduced to the scalar logit of a
/// logistic probe fit on the full input (full-batch, so the estimate is
/// invariant to row order), then binned by equal-frequency quantiles. The
/// estimate carries positive bias at small n.
pub fn mi_continuous(r: &[Vec<f64>], labels: &[u8], bins: usize) -> Result<f64, MetricsError> {
    if r.len() < 10 * bins || r.len() != labels.len() {
        return Err(MetricsError::TooShort(10 * bins));
    }
    let scalar: Vec<f64> = if labels.iter().all(|y| *y == labels[0]) {
        vec![0.0; r.len()]
    } else {
        let probe = Probe::fit(r, labels);
        r.iter().map(|row| probe.logit(row)).collect()
    };
    // Quantile edges; constant input collapses to a single bin.
    let mut sorted = scalar.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut edges = Vec::new();
    for k in 1..bins {
        edges.push(sorted[k * sorted.len() / bins]);
    }
    edges.dedup_by(|a, b| a == b);
    let bin_of = |v: f64| edges.iter().filter(|e| v >= **e).count();
    let mut counts = vec![vec![0u64; 2]; edges.len() + 1];
    for (v, &y) in scalar.iter().zip(labels) {
        counts[bin_of(*v)][y as usize] += 1;
    }
    mi_discrete(&counts)
}

/// Kendall's tau-b with tie correction and a two-sided significance test.
/// Uses exact permutation enumeration for n <= 8, otherwise the normal
/// approximation with tie-adjusted variance.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), MetricsError> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(MetricsError::TooShort(3));
    }
    let n = xs.len();
    let all_tied = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if all_tied(xs) || all_tied(ys) {
        return Err(MetricsError::AllTied);
    }
    let tau = tau_b(xs, ys)?;

    let p = if n <= 8 {
        // Exact: enumerate every permutation of ys.
        let mut perm: Vec<usize> = (0..n).collect();
        let mut count = 0u64;
        let mut total = 0u64;
        permute(&mut perm, 0, &mut |p| {
            let ys_p: Vec<f64> = p.iter().map(|&i| ys[i]).collect();
            let t = tau_b(xs, &ys_p).unwrap_or(0.0);
            total += 1;
            if t.abs() >= tau.abs() - 1e-12 {
                count += 1;
            }
        });
        count as f64 / total as f64
    } else {
        // Normal approximation with tie-adjusted variance of S.
        let (s, tie_x, tie_y) = s_and_ties(xs, ys);
        let nf = n as f64;
        let v0 = nf * (nf - 1.0) * (2.0 * nf + 5.0);
        let term = |ties: &[u64], f: &dyn Fn(f64) -> f64| -> f64 {
            ties.iter().map(|&t| f(t as f64)).sum()
        };
        let vt = term(&tie_x, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
        let vu = term(&tie_y, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
        let v1 = term(&tie_x, &|t| t * (t - 1.0)) * term(&tie_y, &|t| t * (t - 1.0))
            / (2.0 * nf * (nf - 1.0));
        let v2 = term(&tie_x, &|t| t * (t - 1.0) * (t - 2.0))
            * term(&tie_y, &|t| t * (t - 1.0) * (t - 2.0))
            / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
        let var_s = (v0 - vt - vu) / 18.0 + v1 + v2;
        if var_s <= 0.0 {
            return Err(MetricsError::AllTied);
        }
        let z = s / var_s.sqrt();
        let normal = Normal::new(0.0, 1.0).unwrap();
        2.0 * (1.0 - normal.cdf(z.abs()))
    };
    Ok((tau, p))
}

fn permute(idx: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == idx.len() {
        visit(idx);
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permute(idx, k + 1, visit);
        idx.swap(k, i);
    }
}

/// S = concordant - discordant, plus tie-group sizes per variable.
fn s_and_ties(xs: &[f64], ys: &[f64]) -> (f64, Vec<u64>, Vec<u64>) {
    let n = xs.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            s += (dx * dy).signum() * f64::from(dx != 0.0 && dy != 0.0);
        }
    }
    let ties = |v: &[f64]| {
        let mut sorted = v.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut out = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            if j - i > 1 {
                out.push((j - i) as u64);
            }
            i = j;
        }
        out
    };
    (s, ties(xs), ties(ys))
}

fn tau_b(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    let n = xs.len() as f64;
    let (s, tie_x, tie_y) = s_and_ties(xs, ys);
    let n0 = n * (n - 1.0) / 2.0;
    let n1: f64 = tie_x.iter().map(|&t| (t * (t - 1) / 2) as f64).sum();
    let n2: f64 = tie_y.iter().map(|&t| (t * (t - 1) / 2) as f64).sum();
    let denom = ((n0 - n1) * (n0 - n2)).sqrt();
    if denom == 0.0 {
        return Err(MetricsError::AllTied);
    }
    Ok(s / denom)
}

/// Plug-in decomposition of the train/test distribution shift, in nats:
/// total = covariate + label + attribute, where the terms are
/// I(X; T), I(Y; T | X), and I(A; T | X, Y) for the pooled indicator T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftDecomposition {
    pub total: f64,
    pub covariate: f64,
    pub label: f64,
    pub attribute: f64,
}

pub fn shift_decomposition(
    train: &Dataset,
    test: &Dataset,
) -> Result<ShiftDecomposition, MetricsError> {
    if train.is_empty() || test.is_empty() {
        return Err(MetricsError::EmptyTable);
    }
    const BINS: usize = 4;
    // Symbolize inputs: categorical codes directly, continuous features by
    // per-coordinate quantile bins computed on the pooled data.
    let d = train.d_z() + train.d_a();
    let pooled_col = |k: usize| -> Vec<f64> {
        (0..train.len())
            .map(|i| train.features(i)[k])
            .chain((0..test.len()).map(|i| test.features(i)[k]))
            .collect()
    };
    let continuous = train.feature_kind == FeatureKind::Continuous;
    let mut edges: Vec<Vec<f64>> = Vec::new();
    if continuous {
        for k in 0..d {
            let mut col = pooled_col(k);
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut e = Vec::new();
            for q in 1..BINS {
                e.push(col[q * col.len() / BINS]);
            }
            edges.push(e);
        }
    }
    let symbol = |feat: &[f64]| -> Vec<u16> {
        feat.iter()
            .enumerate()
            .map(|(k, v)| {
                if continuous {
                    edges[k].iter().filter(|e| *v >= **e).count() as u16
                } else {
                    *v as u16
                }
            })
            .collect()
    };
    // Joint counts over (x symbol, y, a, t).
    let mut x_ids: std::collections::HashMap<Vec<u16>, usize> = Default::default();
    let mut counts: Vec<[[[f64; 2]; 2]; 2]> = Vec::new();
    for (t, ds) in [(0usize, train), (1usize, test)] {
        for i in 0..ds.len() {
            let sym = symbol(&ds.features(i));
            let next = x_ids.len();
            let id = *x_ids.entry(sym).or_insert(next);
            if id == counts.len() {
                counts.push([[[0.0; 2]; 2]; 2]);
            }
            counts[id][ds.records[i].y as usize][ds.records[i].a as usize][t] += 1.0;
        }
    }
    let n: f64 = counts
        .iter()
        .flat_map(|c| c.iter().flatten().flatten())
        .sum();

    // Generic plug-in MI helper over (key, t) pairs.
    let mi_of = |cells: &BTreeMap<(usize, usize, usize), [f64; 2]>| -> f64 {
        let mut p_key: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        let mut p_t = [0.0f64; 2];
        for (k, v) in cells {
            *p_key.entry(*k).or_default() += (v[0] + v[1]) / n;
            p_t[0] += v[0] / n;
            p_t[1] += v[1] / n;
        }
        let mut mi = 0.0;
        for (k, v) in cells {
            for t in 0..2 {
                let p = v[t] / n;
                if p > 0.0 {
                    mi += p * (p / (p_key[k] * p_t[t])).ln();
                }
            }
        }
        mi
    };
    // Conditional MI I(V; T | C) = I((V, C); T) - I(C; T).
    let project = |f: &dyn Fn(usize, usize, usize) -> (usize, usize, usize)| {
        let mut cells: BTreeMap<(usize, usize, usize), [f64; 2]> = BTreeMap::new();
        for (x, c) in counts.iter().enumerate() {
            for y in 0..2 {
                for a in 0..2 {
                    for t in 0..2 {
                        let v = c[y][a][t];
                        if v > 0.0 {
                            cells.entry(f(x, y, a)).or_insert([0.0; 2])[t] += v;
                        }
                    }
                }
            }
        }
        cells
    };
    let i_x_t = mi_of(&project(&|x, _, _| (x, 0, 0)));
    let i_xy_t = mi_of(&project(&|x, y, _| (x, y, 0)));
    let i_xya_t = mi_of(&project(&|x, y, a| (x, y, a)));
    Ok(ShiftDecomposition {
        total: i_xya_t,
        covariate: i_x_t,
        label: i_xy_t - i_x_t,
        attribute: i_xya_t - i_xy_t,
    })
}
