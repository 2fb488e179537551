//! Bias injection: corrupting an existing dataset one mechanism at a time,
//! plus deterministic stratified splitting.
//!
//! All three injections target the positive records of one group. Selection
//! is a seeded shuffle of the eligible indices followed by a prefix take of
//! floor(rate * m); every untargeted record is left bit-for-bit unchanged.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, FeatureKind, InjectionEvent};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum InjectError {
    #[error("no positive records in target group {0}")]
    EmptySelection(u8),
    #[error("wrong injection kind for this operation")]
    KindMismatch,
    #[error("presentation injection requires continuous features")]
    CategoricalFeatures,
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("split fractions must be positive where used and sum to 1")]
    BadFractions,
    #[error("stratification cell ({a}, {y}) has fewer records than splits")]
    CellTooSmall { a: u8, y: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionKind {
    Prevalence,
    Presentation,
    Annotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub kind: InjectionKind,
    pub target_group: u8,
    /// rho in [0, 1]: fraction of eligible records affected.
    pub rate: f64,
    /// Presentation only: attenuation strength toward the positive-class mean.
    pub severity: f64,
    pub seed: u64,
}

impl InjectionSpec {
    fn validate(&self) -> Result<(), InjectError> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(InjectError::InvalidSpec("rate must lie in [0, 1]".into()));
        }
        if self.severity < 0.0 {
            return Err(InjectError::InvalidSpec("severity must be >= 0".into()));
        }
        if self.target_group > 1 {
            return Err(InjectError::InvalidSpec("target_group must be 0 or 1".into()));
        }
        Ok(())
    }

    fn event(&self, affected: usize) -> InjectionEvent {
        InjectionEvent {
            kind: match self.kind {
                InjectionKind::Prevalence => "prevalence".into(),
                InjectionKind::Presentation => "presentation".into(),
                InjectionKind::Annotation => "annotation".into(),
            },
            target_group: self.target_group,
            rate: self.rate,
            severity: self.severity,
            seed: self.seed,
            affected,
        }
    }
}

/// Seeded shuffle of the eligible (positive, target-group) indices, then a
/// prefix of floor(rate * m). Errors if the group has no positives.
fn select(d: &Dataset, spec: &InjectionSpec) -> Result<Vec<usize>, InjectError> {
    let mut eligible: Vec<usize> = d
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.y == 1 && r.a == spec.target_group)
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(InjectError::EmptySelection(spec.target_group));
    }
    let take = (spec.rate * eligible.len() as f64).floor() as usize;
    let mut g = rng::stream(spec.seed, 0xB1A5);
    eligible.shuffle(&mut g);
    let mut chosen = eligible[..take].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Drops floor(rate * m) positive target-group records.
pub fn inject_prevalence(d: &Dataset, spec: &InjectionSpec) -> Result<Dataset, InjectError> {
    spec.validate()?;
    if spec.kind != InjectionKind::Prevalence {
        return Err(InjectError::KindMismatch);
    }
    let chosen = select(d, spec)?;
    let drop: std::collections::HashSet<usize> = chosen.iter().copied().collect();
    let mut out = d.clone();
    out.records = d
        .records
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    out.injection_history.push(spec.event(chosen.len()));
    Ok(out)
}

/// Attenuates x_z of floor(rate * m) positive target-group records toward
/// the global positive-class mean: x_z <- x_z + severity * (mean_pos - x_z).
/// The tabular analogue of corrupting an image by reducing sharpness.
pub fn inject_presentation(d: &Dataset, spec: &InjectionSpec) -> Result<Dataset, InjectError> {
    spec.validate()?;
    if spec.kind != InjectionKind::Presentation {
        return Err(InjectError::KindMismatch);
    }
    if d.feature_kind == FeatureKind::Categorical {
        return Err(InjectError::CategoricalFeatures);
    }
    let chosen = select(d, spec)?;
    let d_z = d.d_z();
    let mut mean_pos = vec![0.0; d_z];
    let mut n_pos = 0.0;
    for r in &d.records {
        if r.y == 1 {
            for (m, x) in mean_pos.iter_mut().zip(&r.x_z) {
                *m += x;
            }
            n_pos += 1.0;
        }
    }
    for m in mean_pos.iter_mut() {
        *m /= n_pos;
    }
    let mut out = d.clone();
    for &i in &chosen {
        let r = &mut out.records[i];
        for (x, m) in r.x_z.iter_mut().zip(&mean_pos) {
            *x += spec.severity * (*m - *x);
        }
    }
    out.injection_history.push(spec.event(chosen.len()));
    Ok(out)
}

/// Flips y to 0 for floor(rate * m) positive target-group records; the
/// latent z is left untouched.
pub fn inject_annotation(d: &Dataset, spec: &InjectionSpec) -> Result<Dataset, InjectError> {
    spec.validate()?;
    if spec.kind != InjectionKind::Annotation {
        return Err(InjectError::KindMismatch);
    }
    let chosen = select(d, spec)?;
    let mut out = d.clone();
    for &i in &chosen {
        out.records[i].y = 0;
    }
    out.injection_history.push(spec.event(chosen.len()));
    Ok(out)
}

pub fn inject(d: &Dataset, spec: &InjectionSpec) -> Result<Dataset, InjectError> {
    match spec.kind {
        InjectionKind::Prevalence => inject_prevalence(d, spec),
        InjectionKind::Presentation => inject_presentation(d, spec),
        InjectionKind::Annotation => inject_annotation(d, spec),
    }
}

/// Disjoint (train, val, test) partition, stratified on the (a, y) cells so
/// each split's cell proportions deviate from the parent by at most one
/// record. Deterministic by seed.
pub fn split_dataset(
    d: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), InjectError> {
    let fr = [fractions.0, fractions.1, fractions.2];
    if fr.iter().any(|f| *f < 0.0) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(InjectError::BadFractions);
    }
    let n_splits = fr.iter().filter(|f| **f > 0.0).count();

    let mut cells: std::collections::BTreeMap<(u8, u8), Vec<usize>> = Default::default();
    for (i, r) in d.records.iter().enumerate() {
        cells.entry((r.a, r.y)).or_default().push(i);
    }
    let mut assignments: [Vec<usize>; 3] = Default::default();
    for (cell_id, ((a, y), mut idx)) in cells.into_iter().enumerate() {
        if idx.len() < n_splits {
            return Err(InjectError::CellTooSmall { a, y });
        }
        let mut g = rng::stream(seed, 0x5117 + cell_id as u64);
        idx.shuffle(&mut g);
        // Largest-remainder allocation of the cell across splits.
        let m = idx.len() as f64;
        let exact: Vec<f64> = fr.iter().map(|f| f * m).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut rem: usize = idx.len() - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&i, &j| {
            let ri = exact[i] - exact[i].floor();
            let rj = exact[j] - exact[j].floor();
            rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
        });
        for &i in order.iter().cycle() {
            if rem == 0 {
                break;
            }
            if fr[i] > 0.0 {
                counts[i] += 1;
                rem -= 1;
            }
        }
        let mut start = 0;
        for (split, &c) in counts.iter().enumerate() {
            assignments[split].extend(&idx[start..start + c]);
            start += c;
        }
    }
    let mut out = Vec::with_capacity(3);
    for split in assignments.iter_mut() {
        split.sort_unstable();
        let mut ds = d.clone();
        ds.records = split.iter().map(|&i| d.records[i].clone()).collect();
        out.push(ds);
    }
    let test = out.pop().unwrap();
    let val = out.pop().unwrap();
    let train = out.pop().unwrap();
    Ok((train, val, test))
}
