//! Structural causal models of dataset bias.
//!
//! Every model shares the skeleton A -> X_A, Z -> X_Z, Z -> Y. Bias
//! mechanisms add one edge each: Presentation adds A -> X_Z, Prevalence adds
//! A -> Z, Annotation adds A -> Y, CausalAnnotation uses the causal labelling
//! direction (X_Z, A) -> Y, and Collider appends an interaction feature
//! X_{A and Z} to x_a. Two generative families are provided: a categorical
//! family with exact enumeration oracles (conditional mutual information,
//! Bayes AUC, Bayes accuracy) and a Gaussian family for training realistic
//! continuous classifiers.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::{Dataset, FeatureKind, Provenance, Record};
use crate::exec;
use crate::rng;

/// Probability mass the task features place on the class-matching half of
/// their support in the discrete family.
const XZ_FIDELITY: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum ScmError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("operation requires the discrete family")]
    RequiresDiscrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Unbiased,
    Presentation,
    Prevalence,
    Annotation,
    CausalAnnotation,
    Collider,
}

impl Mechanism {
    pub const ALL: [Mechanism; 6] = [
        Mechanism::Unbiased,
        Mechanism::Presentation,
        Mechanism::Prevalence,
        Mechanism::Annotation,
        Mechanism::CausalAnnotation,
        Mechanism::Collider,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Unbiased => "unbiased",
            Mechanism::Presentation => "presentation",
            Mechanism::Prevalence => "prevalence",
            Mechanism::Annotation => "annotation",
            Mechanism::CausalAnnotation => "causal_annotation",
            Mechanism::Collider => "collider",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Discrete,
    Gaussian,
}

/// Parameters of one structural causal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmConfig {
    pub mechanism: Mechanism,
    pub family: Family,
    /// X_Z dimension (Gaussian) or support size (Discrete).
    pub d_z: usize,
    /// X_A dimension (Gaussian) or support size (Discrete).
    pub d_a: usize,
    /// P(A = 1).
    pub p_a: f64,
    /// (q0, q1) = P(Z = 1 | A = a). Must be equal unless mechanism = Prevalence.
    pub base_rates: (f64, f64),
    /// s in [0, 1]; scales the A -> X_A signal.
    pub separability_strength: f64,
    /// delta >= 0; strength of the A -> X_Z edge (Presentation only).
    /// Gaussian: group 1's signal direction is rotated by delta radians.
    /// Discrete: group 1's X_Z table is mixed toward uniform with weight delta.
    pub presentation_shift: f64,
    /// eta = P(Y != Z | A = 1, Z = 1) (Annotation mechanisms only).
    pub annotation_flip: f64,
    /// Baseline label noise nu = P(Y != Z), all groups.
    pub label_noise: f64,
    /// Gaussian family noise scale sigma.
    pub noise_scale: f64,
    /// Internal: pad x_a with an inert interaction slot so an unbiased
    /// counterpart stays dimension-compatible with a Collider model.
    #[serde(default)]
    pub pad_interaction: bool,
}

impl Default for ScmConfig {
    fn default() -> Self {
        ScmConfig {
            mechanism: Mechanism::Unbiased,
            family: Family::Gaussian,
            d_z: 8,
            d_a: 4,
            p_a: 0.5,
            base_rates: (0.3, 0.3),
            separability_strength: 0.5,
            presentation_shift: 0.0,
            annotation_flip: 0.0,
            label_noise: 0.0,
            noise_scale: 1.0,
            pad_interaction: false,
        }
    }
}

impl ScmConfig {
    pub fn validate(&self) -> Result<(), ScmError> {
        let err = |m: &str| Err(ScmError::InvalidConfig(m.into()));
        let (q0, q1) = self.base_rates;
        let probs = [self.p_a, q0, q1, self.annotation_flip];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return err("probabilities must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.separability_strength) {
            return err("separability_strength must lie in [0, 1]");
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return err("label_noise must lie in [0, 0.5)");
        }
        if self.presentation_shift < 0.0 {
            return err("presentation_shift must be nonnegative");
        }
        if self.noise_scale <= 0.0 {
            return err("noise_scale must be positive");
        }
        if self.d_z == 0 || self.d_a == 0 {
            return err("d_z and d_a must be positive");
        }
        if self.mechanism != Mechanism::Prevalence && (q0 - q1).abs() > 0.0 {
            return err("base rates must be equal unless mechanism is prevalence");
        }
        if self.mechanism != Mechanism::Presentation && self.presentation_shift != 0.0 {
            return err("presentation_shift requires mechanism = presentation");
        }
        let annot = matches!(
            self.mechanism,
            Mechanism::Annotation | Mechanism::CausalAnnotation
        );
        if !annot && self.annotation_flip != 0.0 {
            return err("annotation_flip requires an annotation mechanism");
        }
        if self.pad_interaction && self.mechanism != Mechanism::Unbiased {
            return err("pad_interaction is only valid for the unbiased mechanism");
        }
        if self.family == Family::Discrete {
            if self.d_z > 16 || self.d_a > 16 {
                return err("discrete supports are limited to 16");
            }
            if self.d_z < 2 || self.d_a < 2 {
                return err("discrete supports need at least 2 values");
            }
            if self.presentation_shift > 1.0 {
                return err("discrete presentation_shift must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// The same model with every bias edge removed. Interaction slots are
    /// kept (as inert noise) so feature dimensions stay comparable.
    pub fn unbiased_counterpart(&self) -> ScmConfig {
        let mut c = self.clone();
        c.base_rates = (self.base_rates.0, self.base_rates.0);
        c.presentation_shift = 0.0;
        c.annotation_flip = 0.0;
        c.pad_interaction = self.mechanism == Mechanism::Collider || self.pad_interaction;
        c.mechanism = Mechanism::Unbiased;
        c
    }
}

/// A built sampler. Immutable after construction; sampling calls derive
/// their own generator state, so the value is safe to share across threads.
#[derive(Debug, Clone)]
pub struct Scm {
    config: ScmConfig,
    tables: Option<DiscreteTables>,
}

/// Conditional probability tables of the discrete family.
#[derive(Debug, Clone)]
struct DiscreteTables {
    /// P(Z = 1 | A = a).
    p_z: [f64; 2],
    /// P(X_Z = k | Z = z, A = a), indexed [z][a].
    xz: [[Vec<f64>; 2]; 2],
    /// P(X_A = j | A = a, Z = z) over the effective support, indexed [a][z].
    xa: [[Vec<f64>; 2]; 2],
    /// P(Y != Z | Z = z, A = a), indexed [z][a]. Unused for CausalAnnotation.
    flip: [[f64; 2]; 2],
}

/// One cell of the exact discrete joint distribution.
#[derive(Debug, Clone, Copy)]
pub struct JointCell {
    pub p: f64,
    pub a: u8,
    pub z: u8,
    pub x_z: usize,
    pub x_a: usize,
    pub y: u8,
}

fn half_mass(d: usize, matching_high: bool, concentration: f64) -> Vec<f64> {
    let lo = d / 2;
    let hi = d - lo;
    let (p_match, n_match, n_other) = if matching_high {
        (concentration, hi, lo)
    } else {
        (concentration, lo, hi)
    };
    (0..d)
        .map(|k| {
            let in_high = k >= lo;
            if in_high == matching_high {
                p_match / n_match as f64
            } else {
                (1.0 - p_match) / n_other as f64
            }
        })
        .collect()
}

/// Unit vector along (1, 1, ..., 1).
fn dir_ones(d: usize) -> Vec<f64> {
    let v = 1.0 / (d as f64).sqrt();
    vec![v; d]
}

/// Unit vector orthogonal to `dir_ones`: alternating signs, Gram-Schmidt
/// corrected for odd dimensions.
fn dir_orthogonal(d: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mean = v.iter().sum::<f64>() / d as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    v
}

/// Signal mean after rotating the task direction by `angle` radians toward
/// the orthogonal presentation direction. `angle = 0` recovers `dir_ones`.
fn presentation_mean(d: usize, angle: f64) -> Vec<f64> {
    let mu = dir_ones(d);
    let nu = dir_orthogonal(d);
    let (c, s) = (angle.cos(), angle.sin());
    mu.iter().zip(&nu).map(|(m, n)| c * m + s * n).collect()
}

impl Scm {
    pub fn config(&self) -> &ScmConfig {
        &self.config
    }

    /// Effective x_a support size / dimension, interaction slot included.
    pub fn d_a_eff(&self) -> usize {
        let extra = matches!(self.config.mechanism, Mechanism::Collider) || self.config.pad_interaction;
        match self.config.family {
            Family::Discrete => {
                if extra {
                    2 * self.config.d_a
                } else {
                    self.config.d_a
                }
            }
            Family::Gaussian => {
                if extra {
                    self.config.d_a + 1
                } else {
                    self.config.d_a
                }
            }
        }
    }

    fn build_tables(config: &ScmConfig) -> DiscreteTables {
        let (q0, q1) = config.base_rates;
        let d_z = config.d_z;
        let d_a = config.d_a;
        let s = config.separability_strength;
        let delta = config.presentation_shift;
        let nu = config.label_noise;
        let eta = config.annotation_flip;

        let base_xz = |z: usize| half_mass(d_z, z == 1, XZ_FIDELITY);
        let mut xz: [[Vec<f64>; 2]; 2] = Default::default();
        for z in 0..2 {
            for a in 0..2 {
                let mut t = base_xz(z);
                if config.mechanism == Mechanism::Presentation && a == 1 {
                    // Group 1's task features are mixed toward uniform:
                    // information about Z is partially destroyed.
                    for p in t.iter_mut() {
                        *p = (1.0 - delta) * *p + delta / d_z as f64;
                    }
                }
                xz[z][a] = t;
            }
        }

        let base_xa = |a: usize| half_mass(d_a, a == 1, 0.5 + 0.5 * s);
        let collider = config.mechanism == Mechanism::Collider;
        let padded = config.pad_interaction;
        let eff = if collider || padded { 2 * d_a } else { d_a };
        let mut xa: [[Vec<f64>; 2]; 2] = Default::default();
        for a in 0..2 {
            for z in 0..2 {
                let base = base_xa(a);
                let mut t = vec![0.0; eff];
                let offset = if collider && a == 1 && z == 1 { d_a } else { 0 };
                for (k, p) in base.iter().enumerate() {
                    t[offset + k] = *p;
                }
                xa[a][z] = t;
            }
        }

        let mut flip = [[nu; 2]; 2];
        if config.mechanism == Mechanism::Annotation {
            flip[1][1] = 1.0 - (1.0 - nu) * (1.0 - eta);
        }

        DiscreteTables {
            p_z: [q0, q1],
            xz,
            xa,
            flip,
        }
    }

    /// P(Y = 1 | X_Z = k, A = a) under the causal labelling direction.
    fn causal_p_y1_discrete(&self, k: usize, a: usize) -> f64 {
        let t = self.tables.as_ref().expect("discrete family");
        let q = self.config.base_rates.0;
        let p1 = q * t.xz[1][a][k];
        let p0 = (1.0 - q) * t.xz[0][a][k];
        let post = if p1 + p0 > 0.0 { p1 / (p1 + p0) } else { q };
        let scaled = if a == 1 {
            post * (1.0 - self.config.annotation_flip)
        } else {
            post
        };
        let nu = self.config.label_noise;
        scaled * (1.0 - nu) + (1.0 - scaled) * nu
    }

    /// P(Y = 1 | x_z, A = a) under the causal labelling direction (Gaussian).
    fn causal_p_y1_gaussian(&self, x_z: &[f64], a: usize) -> f64 {
        let c = &self.config;
        let mu = dir_ones(c.d_z);
        let dot: f64 = x_z.iter().zip(&mu).map(|(x, m)| x * m).sum();
        let q = c.base_rates.0;
        let llr = 2.0 * dot / (c.noise_scale * c.noise_scale) + (q / (1.0 - q)).ln();
        let post = 1.0 / (1.0 + (-llr).exp());
        let scaled = if a == 1 {
            post * (1.0 - c.annotation_flip)
        } else {
            post
        };
        let nu = c.label_noise;
        scaled * (1.0 - nu) + (1.0 - scaled) * nu
    }

    /// Enumerates the exact joint P(A, Z, X_Z, X_A, Y) of a discrete model.
    pub fn joint(&self) -> Result<Vec<JointCell>, ScmError> {
        let t = self.tables.as_ref().ok_or(ScmError::RequiresDiscrete)?;
        let c = &self.config;
        let causal = c.mechanism == Mechanism::CausalAnnotation;
        let mut cells = Vec::new();
        for a in 0..2usize {
            let pa = if a == 1 { c.p_a } else { 1.0 - c.p_a };
            for z in 0..2usize {
                let pz = if z == 1 { t.p_z[a] } else { 1.0 - t.p_z[a] };
                for (k, pk) in t.xz[z][a].iter().enumerate() {
                    for (j, pj) in t.xa[a][z].iter().enumerate() {
                        let p_y1 = if causal {
                            self.causal_p_y1_discrete(k, a)
                        } else {
                            let f = t.flip[z][a];
                            if z == 1 {
                                1.0 - f
                            } else {
                                f
                            }
                        };
                        for y in 0..2usize {
                            let py = if y == 1 { p_y1 } else { 1.0 - p_y1 };
                            let p = pa * pz * pk * pj * py;
                            if p > 0.0 {
                                cells.push(JointCell {
                                    p,
                                    a: a as u8,
                                    z: z as u8,
                                    x_z: k,
                                    x_a: j,
                                    y: y as u8,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }

    /// Exact I(Y; X_A | X_Z) in nats, by full enumeration of the joint.
    pub fn oracle_cmi(&self) -> Result<f64, ScmError> {
        let cells = self.joint()?;
        let d_z = self.config.d_z;
        let d_a = self.d_a_eff();
        // Marginalize to P(y, x_a, x_z).
        let mut p = vec![0.0; 2 * d_a * d_z];
        let idx = |y: usize, j: usize, k: usize| (y * d_a + j) * d_z + k;
        for c in &cells {
            p[idx(c.y as usize, c.x_a, c.x_z)] += c.p;
        }
        let mut p_xz = vec![0.0; d_z];
        let mut p_y_xz = vec![0.0; 2 * d_z];
        let mut p_xa_xz = vec![0.0; d_a * d_z];
        for y in 0..2 {
            for j in 0..d_a {
                for k in 0..d_z {
                    let v = p[idx(y, j, k)];
                    p_xz[k] += v;
                    p_y_xz[y * d_z + k] += v;
                    p_xa_xz[j * d_z + k] += v;
                }
            }
        }
        let mut mi = 0.0;
        for y in 0..2 {
            for j in 0..d_a {
                for k in 0..d_z {
                    let pyjk = p[idx(y, j, k)];
                    if pyjk > 0.0 {
                        mi += pyjk
                            * (pyjk * p_xz[k] / (p_y_xz[y * d_z + k] * p_xa_xz[j * d_z + k])).ln();
                    }
                }
            }
        }
        Ok(mi.max(0.0))
    }

    /// AUC of the Bayes-optimal predictor of A.
    ///
    /// Discrete: exact, scoring every input cell by P(A = 1 | x_z, x_a).
    /// Gaussian: closed form for the A -> X_A channel,
    /// Phi(sqrt(2) * s / sigma), from the pair of A-conditional feature
    /// Gaussians along the fixed signal direction.
    pub fn oracle_separability(&self) -> f64 {
        match self.config.family {
            Family::Gaussian => {
                let n = Normal::new(0.0, 1.0).unwrap();
                n.cdf(2.0_f64.sqrt() * self.config.separability_strength / self.config.noise_scale)
            }
            Family::Discrete => {
                let cells = self.joint().expect("discrete");
                let d_z = self.config.d_z;
                let d_a = self.d_a_eff();
                let mut p = vec![[0.0f64; 2]; d_z * d_a];
                for c in &cells {
                    p[c.x_z * d_a + c.x_a][c.a as usize] += c.p;
                }
                let totals: [f64; 2] = p.iter().fold([0.0, 0.0], |acc, q| {
                    [acc[0] + q[0], acc[1] + q[1]]
                });
                // Score each cell by the posterior of A = 1, then take the
                // exact probability that a positive outranks a negative.
                let mut scored: Vec<(f64, f64, f64)> = p
                    .iter()
                    .filter(|q| q[0] + q[1] > 0.0)
                    .map(|q| (q[1] / (q[0] + q[1]), q[0] / totals[0], q[1] / totals[1]))
                    .collect();
                scored.sort_by(|u, v| u.0.partial_cmp(&v.0).unwrap());
                // Merge ties on the score before pair counting.
                let mut merged: Vec<(f64, f64, f64)> = Vec::new();
                for s in scored {
                    match merged.last_mut() {
                        Some(last) if (last.0 - s.0).abs() < 1e-12 => {
                            last.1 += s.1;
                            last.2 += s.2;
                        }
                        _ => merged.push(s),
                    }
                }
                let mut auc = 0.0;
                let mut cum_neg = 0.0;
                for (_, p0, p1) in &merged {
                    auc += p1 * (cum_neg + 0.5 * p0);
                    cum_neg += p0;
                }
                auc.max(0.5)
            }
        }
    }

    /// Exact Bayes accuracy of predicting Y from (X_Z, X_A), per group and
    /// overall, for the discrete family.
    pub fn oracle_bayes_accuracy(&self) -> Result<(f64, [f64; 2]), ScmError> {
        let cells = self.joint()?;
        let d_z = self.config.d_z;
        let d_a = self.d_a_eff();
        let mut p_xy = vec![[0.0f64; 2]; d_z * d_a];
        let mut p_xya = vec![[[0.0f64; 2]; 2]; d_z * d_a];
        for c in &cells {
            p_xy[c.x_z * d_a + c.x_a][c.y as usize] += c.p;
            p_xya[c.x_z * d_a + c.x_a][c.a as usize][c.y as usize] += c.p;
        }
        let mut overall = 0.0;
        let mut per_group = [0.0f64; 2];
        let mut group_mass = [0.0f64; 2];
        for (cell, by_a) in p_xy.iter().zip(&p_xya) {
            // The Bayes rule predicts the majority class of the cell.
            let pred = usize::from(cell[1] > cell[0]);
            overall += cell[pred];
            for a in 0..2 {
                per_group[a] += by_a[a][pred];
                group_mass[a] += by_a[a][0] + by_a[a][1];
            }
        }
        for a in 0..2 {
            if group_mass[a] > 0.0 {
                per_group[a] /= group_mass[a];
            }
        }
        Ok((overall, per_group))
    }

    /// Draws x_a (interaction slot included) from P(X_A | A = a, Z = z)
    /// using the supplied generator; used for counterfactual interventions
    /// that hold x_z fixed.
    pub fn resample_x_a<R: Rng>(&self, a: u8, z: u8, g: &mut R) -> Vec<f64> {
        let c = &self.config;
        match c.family {
            Family::Discrete => {
                let t = self.tables.as_ref().unwrap();
                vec![sample_categorical(g, &t.xa[a as usize][z as usize]) as f64]
            }
            Family::Gaussian => {
                let mu_a = dir_ones(c.d_a);
                let asign = (2 * a) as f64 - 1.0;
                let mut x_a: Vec<f64> = (0..c.d_a)
                    .map(|i| {
                        c.separability_strength * asign * mu_a[i]
                            + c.noise_scale * normal_sample(g)
                    })
                    .collect();
                if c.mechanism == Mechanism::Collider || c.pad_interaction {
                    let interaction = if c.mechanism == Mechanism::Collider {
                        (a * z) as f64
                    } else {
                        0.0
                    };
                    x_a.push(interaction + c.noise_scale * normal_sample(g));
                }
                x_a
            }
        }
    }

    /// Draws the record at `index` of the stream identified by `seed`.
    pub fn sample_record(&self, seed: u64, index: u64) -> Record {
        let mut g = rng::stream(seed, index);
        let c = &self.config;
        let a = usize::from(g.gen::<f64>() < c.p_a);
        match c.family {
            Family::Discrete => {
                let t = self.tables.as_ref().unwrap();
                let z = usize::from(g.gen::<f64>() < t.p_z[a]);
                let k = sample_categorical(&mut g, &t.xz[z][a]);
                let j = sample_categorical(&mut g, &t.xa[a][z]);
                let y = if c.mechanism == Mechanism::CausalAnnotation {
                    usize::from(g.gen::<f64>() < self.causal_p_y1_discrete(k, a))
                } else {
                    let flipped = g.gen::<f64>() < t.flip[z][a];
                    if flipped {
                        1 - z
                    } else {
                        z
                    }
                };
                Record {
                    x_z: vec![k as f64],
                    x_a: vec![j as f64],
                    a: a as u8,
                    z: Some(z as u8),
                    y: y as u8,
                }
            }
            Family::Gaussian => {
                let q = if a == 1 { c.base_rates.1 } else { c.base_rates.0 };
                let z = usize::from(g.gen::<f64>() < q);
                let sign = (2 * z) as f64 - 1.0;
                // Presentation bias rotates group 1's signal direction by
                // delta radians within a fixed 2-plane: the same latent state
                // expresses through different features for the two groups.
                let mu = presentation_mean(c.d_z, if a == 1 { c.presentation_shift } else { 0.0 });
                let x_z: Vec<f64> = (0..c.d_z)
                    .map(|i| sign * mu[i] + c.noise_scale * normal_sample(&mut g))
                    .collect();
                let mu_a = dir_ones(c.d_a);
                let asign = (2 * a) as f64 - 1.0;
                let mut x_a: Vec<f64> = (0..c.d_a)
                    .map(|i| {
                        c.separability_strength * asign * mu_a[i]
                            + c.noise_scale * normal_sample(&mut g)
                    })
                    .collect();
                if c.mechanism == Mechanism::Collider || c.pad_interaction {
                    let interaction = if c.mechanism == Mechanism::Collider {
                        (a * z) as f64
                    } else {
                        0.0
                    };
                    x_a.push(interaction + c.noise_scale * normal_sample(&mut g));
                }
                let y = if c.mechanism == Mechanism::CausalAnnotation {
                    usize::from(g.gen::<f64>() < self.causal_p_y1_gaussian(&x_z, a))
                } else {
                    let mut f = c.label_noise;
                    if c.mechanism == Mechanism::Annotation && a == 1 && z == 1 {
                        f = 1.0 - (1.0 - c.label_noise) * (1.0 - c.annotation_flip);
                    }
                    if g.gen::<f64>() < f {
                        1 - z
                    } else {
                        z
                    }
                };
                Record {
                    x_z,
                    x_a,
                    a: a as u8,
                    z: Some(z as u8),
                    y: y as u8,
                }
            }
        }
    }

    /// Draws `n` i.i.d. records. Deterministic given (config, n, seed); the
    /// per-record streams make the result independent of evaluation order.
    pub fn sample_dataset(&self, n: usize, seed: u64) -> Dataset {
        assert!(n >= 1, "n must be at least 1");
        let records = exec::map_indexed(n, |i| self.sample_record(seed, i as u64));
        Dataset {
            records,
            feature_kind: match self.config.family {
                Family::Discrete => FeatureKind::Categorical,
                Family::Gaussian => FeatureKind::Continuous,
            },
            provenance: Provenance::Scm(self.config.clone()),
            injection_history: Vec::new(),
            seed,
        }
    }
}

fn sample_categorical<R: Rng>(g: &mut R, table: &[f64]) -> usize {
    let u: f64 = g.gen();
    let mut acc = 0.0;
    for (k, p) in table.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    table.len() - 1
}

/// Box-Muller standard normal; consumes exactly two uniforms per call.
fn normal_sample<R: Rng>(g: &mut R) -> f64 {
    let u1: f64 = g.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = g.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Validates the config and builds a sampler for it.
pub fn build_scm(config: ScmConfig) -> Result<Scm, ScmError> {
    config.validate()?;
    let tables = match config.family {
        Family::Discrete => Some(Scm::build_tables(&config)),
        Family::Gaussian => None,
    };
    Ok(Scm { config, tables })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn discrete(mechanism: Mechanism) -> ScmConfig {
        ScmConfig {
            mechanism,
            family: Family::Discrete,
            d_z: 4,
            d_a: 4,
            ..ScmConfig::default()
        }
    }

    #[test]
    fn rejects_inconsistent_parameters() {
        let mut c = discrete(Mechanism::Unbiased);
        c.presentation_shift = 0.5;
        assert!(build_scm(c).is_err());

        let mut c = discrete(Mechanism::Unbiased);
        c.base_rates = (0.3, 0.6);
        assert!(build_scm(c).is_err());

        let mut c = discrete(Mechanism::Presentation);
        c.presentation_shift = 0.5;
        c.annotation_flip = 0.2;
        assert!(build_scm(c).is_err());
    }

    #[test]
    fn unbiased_oracle_cmi_is_zero() {
        let scm = build_scm(discrete(Mechanism::Unbiased)).unwrap();
        assert!(scm.oracle_cmi().unwrap().abs() < 1e-12);
    }

    #[test]
    fn presentation_with_zero_shift_is_unbiased() {
        let mut c = discrete(Mechanism::Presentation);
        c.presentation_shift = 0.0;
        let scm = build_scm(c).unwrap();
        assert!(scm.oracle_cmi().unwrap() < 1e-15);
    }

    #[test]
    fn presentation_shift_yields_positive_cmi() {
        let mut c = discrete(Mechanism::Presentation);
        c.presentation_shift = 0.5;
        let scm = build_scm(c).unwrap();
        assert!(scm.oracle_cmi().unwrap() > 0.0);
    }

    #[test]
    fn prevalence_base_rate_readback() {
        let mut c = discrete(Mechanism::Prevalence);
        c.base_rates = (0.3, 0.6);
        let scm = build_scm(c).unwrap();
        let joint = scm.joint().unwrap();
        let mut pz1 = [0.0f64; 2];
        let mut pa = [0.0f64; 2];
        for cell in &joint {
            pa[cell.a as usize] += cell.p;
            if cell.z == 1 {
                pz1[cell.a as usize] += cell.p;
            }
        }
        let diff = pz1[1] / pa[1] - pz1[0] / pa[0];
        assert!((diff - 0.3).abs() < 1e-12);
        assert!(scm.oracle_cmi().unwrap() > 0.0);
    }

    #[test]
    fn cmi_monotone_in_bias_knobs() {
        // 5-point grids per mechanism; oracle CMI must be non-decreasing.
        let grid = [0.0, 0.2, 0.4, 0.6, 0.8];
        let mut last = -1.0;
        for delta in grid {
            let mut c = discrete(Mechanism::Presentation);
            c.presentation_shift = delta;
            let v = build_scm(c).unwrap().oracle_cmi().unwrap();
            assert!(v >= last - 1e-12, "presentation not monotone at {delta}");
            last = v;
        }
        last = -1.0;
        for gap in grid {
            let mut c = discrete(Mechanism::Prevalence);
            c.base_rates = (0.1, 0.1 + gap);
            let v = build_scm(c).unwrap().oracle_cmi().unwrap();
            assert!(v >= last - 1e-12, "prevalence not monotone at {gap}");
            last = v;
        }
        for mech in [Mechanism::Annotation, Mechanism::CausalAnnotation] {
            last = -1.0;
            for eta in grid {
                let mut c = discrete(mech);
                c.annotation_flip = eta;
                let v = build_scm(c).unwrap().oracle_cmi().unwrap();
                assert!(v >= last - 1e-12, "{mech:?} not monotone at {eta}");
                last = v;
            }
        }
    }

    #[test]
    fn collider_is_biased() {
        let scm = build_scm(discrete(Mechanism::Collider)).unwrap();
        assert!(scm.oracle_cmi().unwrap() > 0.0);
        // Its unbiased counterpart keeps the padded slot and is unbiased.
        let cp = build_scm(scm.config().unbiased_counterpart()).unwrap();
        assert_eq!(cp.d_a_eff(), scm.d_a_eff());
        assert!(cp.oracle_cmi().unwrap() < 1e-15);
    }

    #[test]
    fn separability_extremes_and_monotonicity() {
        for family in [Family::Discrete, Family::Gaussian] {
            let mut c = discrete(Mechanism::Unbiased);
            c.family = family;
            c.separability_strength = 0.0;
            let low = build_scm(c.clone()).unwrap().oracle_separability();
            assert!((low - 0.5).abs() < 1e-12, "{family:?}");
            let mut last = 0.0;
            for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
                c.separability_strength = s;
                let v = build_scm(c.clone()).unwrap().oracle_separability();
                assert!(v >= last - 1e-12);
                last = v;
            }
        }
        // Deterministic X_A = A: binary support with full concentration.
        let mut c = discrete(Mechanism::Unbiased);
        c.d_a = 2;
        c.separability_strength = 1.0;
        let auc = build_scm(c).unwrap().oracle_separability();
        assert!((auc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_separability_matches_monte_carlo_bayes_rule() {
        let mut c = ScmConfig {
            family: Family::Gaussian,
            separability_strength: 0.5,
            noise_scale: 1.0,
            ..ScmConfig::default()
        };
        c.mechanism = Mechanism::Unbiased;
        let scm = build_scm(c.clone()).unwrap();
        let oracle = scm.oracle_separability();
        // Empirical AUC of the analytic Bayes rule (projection on the
        // signal direction) over 10^6 samples.
        let data = scm.sample_dataset(1_000_000, 99);
        let mu = dir_ones(c.d_a);
        let mut scored: Vec<(f64, u8)> = data
            .records
            .iter()
            .map(|r| {
                let s: f64 = r.x_a.iter().zip(&mu).map(|(x, m)| x * m).sum();
                (s, r.a)
            })
            .collect();
        scored.sort_by(|u, v| u.0.partial_cmp(&v.0).unwrap());
        let n1 = scored.iter().filter(|(_, a)| *a == 1).count() as f64;
        let n0 = scored.len() as f64 - n1;
        let mut rank_sum = 0.0;
        for (i, (_, a)) in scored.iter().enumerate() {
            if *a == 1 {
                rank_sum += (i + 1) as f64;
            }
        }
        let empirical = (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
        assert!(
            (oracle - empirical).abs() < 0.005,
            "oracle {oracle} vs empirical {empirical}"
        );
    }

    #[test]
    fn sampling_is_deterministic() {
        let scm = build_scm(discrete(Mechanism::Unbiased)).unwrap();
        let a = scm.sample_dataset(10_000, 7);
        let b = scm.sample_dataset(10_000, 7);
        assert_eq!(a, b);
        let c = scm.sample_dataset(10_000, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_marginals_converge() {
        let mut c = discrete(Mechanism::Unbiased);
        c.p_a = 0.5;
        let scm = build_scm(c).unwrap();
        let d = scm.sample_dataset(100_000, 3);
        let p_a1 = d.records.iter().filter(|r| r.a == 1).count() as f64 / d.len() as f64;
        assert!((p_a1 - 0.5).abs() < 0.01);
    }

    #[test]
    fn annotation_flip_readback_in_samples() {
        let mut c = discrete(Mechanism::Annotation);
        c.annotation_flip = 0.5;
        c.label_noise = 0.0;
        let scm = build_scm(c).unwrap();
        let d = scm.sample_dataset(100_000, 11);
        let (mut n, mut fl) = (0.0, 0.0);
        for r in &d.records {
            if r.z == Some(1) && r.a == 1 {
                n += 1.0f64;
                if r.y == 0 {
                    fl += 1.0f64;
                }
            }
        }
        assert!((fl / n - 0.5).abs() < 0.02);
    }

    #[test]
    fn plugin_cmi_matches_oracle_on_samples() {
        let mut c = discrete(Mechanism::Prevalence);
        c.base_rates = (0.3, 0.6);
        let scm = build_scm(c).unwrap();
        let d = scm.sample_dataset(100_000, 5);
        let mut counts = vec![vec![vec![0u64; 4]; scm.d_a_eff()]; 2];
        for r in &d.records {
            counts[r.y as usize][r.x_a[0] as usize][r.x_z[0] as usize] += 1;
        }
        let est = crate::metrics::cmi_discrete(&counts).unwrap();
        let oracle = scm.oracle_cmi().unwrap();
        assert!((est - oracle).abs() < 0.01, "est {est} oracle {oracle}");
    }
}
