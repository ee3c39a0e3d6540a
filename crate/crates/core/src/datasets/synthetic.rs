//! Synthetic evolving-domain benchmarks.
//!
//! * Circle: domain `t` is a Gaussian cloud (std 0.15) centered on the unit
//!   arc at angle `t·π/(n−1)`; points inside the unit circle are class 1.
//! * Circle-C: the same points, labeled by a circle whose center `x₀` and
//!   radius `r` drift per domain.
//! * Sine: domain `t` samples `x ∈ [0.3t, 0.3t + 1]`, `y ∈ [−1.5, 1.5]`
//!   uniformly; class 1 iff `y ≤ sin x`.
//! * Sine-C: Sine with labels reversed from a given (1-based) domain onward.
//!
//! Features are min-max normalized to `[0, 1]` over the whole sequence.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Domain, DomainSequence, SplitSpec};
use crate::error::{Error, Result};
use crate::rng::{standard_normal, SeedTree};
use crate::tensor::Tensor;

const CIRCLE_STD: f64 = 0.15;
const SINE_SHIFT: f64 = 0.3;
const SINE_WIDTH: f64 = 1.0;
const SINE_Y_RANGE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "circle")]
    Circle,
    #[serde(rename = "circle-c")]
    CircleC,
    #[serde(rename = "sine")]
    Sine,
    #[serde(rename = "sine-c")]
    SineC,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 4] = [
        DatasetKind::Circle,
        DatasetKind::CircleC,
        DatasetKind::Sine,
        DatasetKind::SineC,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Circle => "circle",
            DatasetKind::CircleC => "circle-c",
            DatasetKind::Sine => "sine",
            DatasetKind::SineC => "sine-c",
        }
    }

    /// `(domains, samples per domain)`.
    pub fn default_sizes(self) -> (usize, usize) {
        match self {
            DatasetKind::Circle | DatasetKind::CircleC => (30, 100),
            DatasetKind::Sine | DatasetKind::SineC => (24, 95),
        }
    }

    pub fn default_split(self) -> SplitSpec {
        match self {
            DatasetKind::Circle | DatasetKind::CircleC => SplitSpec {
                n_source: 15,
                n_intermediate: 5,
                n_target: 10,
            },
            DatasetKind::Sine | DatasetKind::SineC => SplitSpec {
                n_source: 12,
                n_intermediate: 4,
                n_target: 8,
            },
        }
    }

    /// Generates the dataset at its default sizes.
    pub fn generate(self, seed: u64) -> Result<Synthetic> {
        let (n, per) = self.default_sizes();
        match self {
            DatasetKind::Circle => gen_circle(n, per, seed),
            DatasetKind::CircleC => gen_circle_c(n, per, seed, &circle_c_schedule(n)),
            DatasetKind::Sine => gen_sine(n, per, seed),
            DatasetKind::SineC => gen_sine_c(n, per, seed, 6),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown dataset {s:?} (expected circle, circle-c, sine or sine-c)"
                ))
            })
    }
}

/// Per-feature min-max constants: `normalized = (raw − min) / (max − min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    fn fit(points: &[Vec<[f64; 2]>]) -> Self {
        let mut min = vec![f64::INFINITY; 2];
        let mut max = vec![f64::NEG_INFINITY; 2];
        for p in points.iter().flatten() {
            for k in 0..2 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        Self { min, max }
    }

    pub fn apply(&self, k: usize, raw: f64) -> f64 {
        let span = self.max[k] - self.min[k];
        if span > 0.0 {
            (raw - self.min[k]) / span
        } else {
            0.0
        }
    }

    pub fn invert(&self, k: usize, normalized: f64) -> f64 {
        self.min[k] + normalized * (self.max[k] - self.min[k])
    }
}

/// Everything needed to describe and regenerate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub dataset: DatasetKind,
    pub seed: u64,
    pub n_domains: usize,
    pub n_per_domain: usize,
    pub dim: usize,
    pub classes: usize,
    pub normalization: Normalization,
    /// Per-domain `(x₀, r)` of the labeling circle (Circle-C).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<(f64, f64)>>,
    /// First 1-based domain with reversed labels (Sine-C).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reversal_start: Option<usize>,
    pub split: SplitSpec,
}

/// A generated sequence with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub sequence: DomainSequence,
    pub meta: DatasetMeta,
}

/// Default Circle-C drift: `x₀` from 0 to 0.4 and `r` from 1.0 to 0.8, linearly.
pub fn circle_c_schedule(n_domains: usize) -> Vec<(f64, f64)> {
    (0..n_domains)
        .map(|t| {
            let s = if n_domains > 1 {
                t as f64 / (n_domains - 1) as f64
            } else {
                0.0
            };
            (0.4 * s, 1.0 - 0.2 * s)
        })
        .collect()
}

fn check_domains(n_domains: usize) -> Result<()> {
    if n_domains == 0 {
        return Err(Error::Invalid("n_domains must be at least 1".into()));
    }
    Ok(())
}

fn circle_points(n_domains: usize, n_per: usize, seed: u64) -> Vec<Vec<[f64; 2]>> {
    let root = SeedTree::new(seed).child("circle");
    (0..n_domains)
        .map(|t| {
            let theta = if n_domains > 1 {
                t as f64 * std::f64::consts::PI / (n_domains - 1) as f64
            } else {
                0.0
            };
            let (cx, cy) = (theta.cos(), theta.sin());
            let noise = standard_normal(&mut root.index(t as u64).rng(), n_per, 2);
            (0..n_per)
                .map(|i| [cx + CIRCLE_STD * noise.get(i, 0), cy + CIRCLE_STD * noise.get(i, 1)])
                .collect()
        })
        .collect()
}

fn sine_points(n_domains: usize, n_per: usize, seed: u64) -> Vec<Vec<[f64; 2]>> {
    let root = SeedTree::new(seed).child("sine");
    (0..n_domains)
        .map(|t| {
            let mut rng = root.index(t as u64).rng();
            let lo = SINE_SHIFT * t as f64;
            (0..n_per)
                .map(|_| {
                    let x = lo + SINE_WIDTH * rng.random::<f64>();
                    let y = SINE_Y_RANGE * (2.0 * rng.random::<f64>() - 1.0);
                    [x, y]
                })
                .collect()
        })
        .collect()
}

/// Inside-or-on the circle centered at `(x0, 0)` with radius `r`.
pub(crate) fn circle_label(p: [f64; 2], x0: f64, r: f64) -> usize {
    usize::from((p[0] - x0).powi(2) + p[1].powi(2) <= r * r)
}

pub(crate) fn sine_label(p: [f64; 2]) -> usize {
    usize::from(p[1] <= p[0].sin())
}

fn assemble(
    points: &[Vec<[f64; 2]>],
    labels: impl Fn(usize, [f64; 2]) -> usize,
    norm: &Normalization,
) -> Result<DomainSequence> {
    let domains = points
        .iter()
        .enumerate()
        .map(|(t, pts)| {
            let mut x = Tensor::zeros(pts.len(), 2);
            for (i, p) in pts.iter().enumerate() {
                x.set(i, 0, norm.apply(0, p[0]));
                x.set(i, 1, norm.apply(1, p[1]));
            }
            let y = pts.iter().map(|&p| labels(t, p)).collect();
            Domain { t, x, y }
        })
        .collect();
    DomainSequence::new(domains, 2)
}

fn meta(
    dataset: DatasetKind,
    seed: u64,
    n_domains: usize,
    n_per: usize,
    normalization: Normalization,
) -> DatasetMeta {
    DatasetMeta {
        dataset,
        seed,
        n_domains,
        n_per_domain: n_per,
        dim: 2,
        classes: 2,
        normalization,
        schedule: None,
        reversal_start: None,
        split: dataset.default_split(),
    }
}

pub fn gen_circle(n_domains: usize, n_per_domain: usize, seed: u64) -> Result<Synthetic> {
    check_domains(n_domains)?;
    let pts = circle_points(n_domains, n_per_domain, seed);
    let norm = Normalization::fit(&pts);
    let sequence = assemble(&pts, |_, p| circle_label(p, 0.0, 1.0), &norm)?;
    Ok(Synthetic {
        sequence,
        meta: meta(DatasetKind::Circle, seed, n_domains, n_per_domain, norm),
    })
}

/// Circle covariates labeled by the per-domain circle `schedule[t] = (x₀, r)`.
pub fn gen_circle_c(
    n_domains: usize,
    n_per_domain: usize,
    seed: u64,
    schedule: &[(f64, f64)],
) -> Result<Synthetic> {
    check_domains(n_domains)?;
    if schedule.len() != n_domains {
        return Err(Error::Invalid(format!(
            "drift schedule has {} entries for {n_domains} domains",
            schedule.len()
        )));
    }
    let pts = circle_points(n_domains, n_per_domain, seed);
    let norm = Normalization::fit(&pts);
    let sequence = assemble(
        &pts,
        |t, p| circle_label(p, schedule[t].0, schedule[t].1),
        &norm,
    )?;
    let mut meta = meta(DatasetKind::CircleC, seed, n_domains, n_per_domain, norm);
    meta.schedule = Some(schedule.to_vec());
    Ok(Synthetic { sequence, meta })
}

pub fn gen_sine(n_domains: usize, n_per_domain: usize, seed: u64) -> Result<Synthetic> {
    check_domains(n_domains)?;
    let pts = sine_points(n_domains, n_per_domain, seed);
    let norm = Normalization::fit(&pts);
    let sequence = assemble(&pts, |_, p| sine_label(p), &norm)?;
    Ok(Synthetic {
        sequence,
        meta: meta(DatasetKind::Sine, seed, n_domains, n_per_domain, norm),
    })
}

/// Sine with labels reversed for every 1-based domain `≥ reversal_start`.
pub fn gen_sine_c(
    n_domains: usize,
    n_per_domain: usize,
    seed: u64,
    reversal_start: usize,
) -> Result<Synthetic> {
    check_domains(n_domains)?;
    if reversal_start < 1 || reversal_start > n_domains {
        return Err(Error::Invalid(format!(
            "reversal_start must be in 1..={n_domains}, got {reversal_start}"
        )));
    }
    let pts = sine_points(n_domains, n_per_domain, seed);
    let norm = Normalization::fit(&pts);
    let sequence = assemble(
        &pts,
        |t, p| {
            let y = sine_label(p);
            if t + 1 >= reversal_start {
                1 - y
            } else {
                y
            }
        },
        &norm,
    )?;
    let mut meta = meta(DatasetKind::SineC, seed, n_domains, n_per_domain, norm);
    meta.reversal_start = Some(reversal_start);
    Ok(Synthetic { sequence, meta })
}
