//! Domain sequences, the synthetic evolving-domain benchmarks, splitting, and
//! CSV ingestion.

mod csv;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use self::csv::{
    load_csv_domains, load_csv_domains_with, load_dataset, load_meta, meta_path, save_csv_domains, save_meta,
};
pub use synthetic::{
    circle_c_schedule, gen_circle, gen_circle_c, gen_sine, gen_sine_c, DatasetKind, DatasetMeta,
    Normalization, Synthetic,
};

/// One labeled domain at time stamp `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub t: usize,
    pub x: Tensor,
    pub y: Vec<usize>,
}

impl Domain {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Time-ordered labeled domains sharing a feature dimension and class count.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSequence {
    domains: Vec<Domain>,
    dim: usize,
    classes: usize,
}

impl DomainSequence {
    pub fn new(domains: Vec<Domain>, classes: usize) -> Result<Self> {
        let first = domains
            .first()
            .ok_or_else(|| Error::Invalid("a domain sequence needs at least one domain".into()))?;
        let dim = first.x.cols();
        let start = first.t;
        for (i, d) in domains.iter().enumerate() {
            if d.t != start + i {
                return Err(Error::Invalid(format!(
                    "domain time stamps must be contiguous: expected {}, found {}",
                    start + i,
                    d.t
                )));
            }
            if d.is_empty() {
                return Err(Error::Invalid(format!("domain {} is empty", d.t)));
            }
            if d.x.rows() != d.y.len() || d.x.cols() != dim {
                return Err(Error::Shape(format!(
                    "domain {} has features {:?} and {} labels; expected width {dim}",
                    d.t,
                    d.x.shape(),
                    d.y.len()
                )));
            }
            if let Some(&bad) = d.y.iter().find(|&&y| y >= classes) {
                return Err(Error::Label { label: bad, classes });
            }
            if !d.x.is_finite() {
                return Err(Error::NonFinite(format!("features of domain {}", d.t)));
            }
        }
        Ok(Self {
            domains,
            dim,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn domain(&self, i: usize) -> &Domain {
        &self.domains[i]
    }

    /// Time stamp of the first domain.
    pub fn start(&self) -> usize {
        self.domains[0].t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn total_samples(&self) -> usize {
        self.domains.iter().map(Domain::len).sum()
    }

    /// All samples stacked in time order.
    pub fn pooled(&self) -> (Tensor, Vec<usize>) {
        let xs: Vec<&Tensor> = self.domains.iter().map(|d| &d.x).collect();
        let x = Tensor::concat_rows(&xs).expect("constant width");
        let y = self.domains.iter().flat_map(|d| d.y.iter().copied()).collect();
        (x, y)
    }

    /// Mean over features of the per-feature variance of all samples.
    pub fn feature_variance(&self) -> f64 {
        let (x, _) = self.pooled();
        let means = x.col_means();
        let n = x.rows() as f64;
        let mut total = 0.0;
        for (c, m) in means.iter().enumerate() {
            let ss: f64 = (0..x.rows()).map(|r| (x.get(r, c) - m).powi(2)).sum();
            total += ss / n;
        }
        total / self.dim as f64
    }

    /// Joins contiguous sequences back together.
    pub fn concat(parts: &[&DomainSequence]) -> Result<Self> {
        let classes = parts
            .first()
            .ok_or_else(|| Error::Invalid("nothing to concatenate".into()))?
            .classes;
        let domains = parts.iter().flat_map(|p| p.domains.iter().cloned()).collect();
        Self::new(domains, classes)
    }
}

/// Domain counts for the source, intermediate (validation) and target splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_source: usize,
    pub n_intermediate: usize,
    pub n_target: usize,
}

impl SplitSpec {
    pub fn new(n_source: usize, n_intermediate: usize, n_target: usize) -> Result<Self> {
        if n_source == 0 || n_intermediate == 0 || n_target == 0 {
            return Err(Error::Invalid(format!(
                "split counts must be positive, got {n_source}/{n_intermediate}/{n_target}"
            )));
        }
        Ok(Self {
            n_source,
            n_intermediate,
            n_target,
        })
    }

    pub fn total(&self) -> usize {
        self.n_source + self.n_intermediate + self.n_target
    }
}

impl std::str::FromStr for SplitSpec {
    type Err = Error;

    /// Parses `source,intermediate,target` (commas or slashes).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split([',', '/']).map(str::trim).collect();
        let bad = || Error::Invalid(format!("split spec {s:?} is not three counts like 15,5,10"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let n: Vec<usize> = parts
            .iter()
            .map(|p| p.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        Self::new(n[0], n[1], n[2])
    }
}

/// Contiguous prefix / middle / suffix split.
pub fn split_domains(
    seq: &DomainSequence,
    spec: SplitSpec,
) -> Result<(DomainSequence, DomainSequence, DomainSequence)> {
    if spec.total() != seq.len() {
        return Err(Error::Invalid(format!(
            "split {}/{}/{} sums to {} but the sequence has {} domains",
            spec.n_source,
            spec.n_intermediate,
            spec.n_target,
            spec.total(),
            seq.len()
        )));
    }
    let a = spec.n_source;
    let b = a + spec.n_intermediate;
    let part = |r: std::ops::Range<usize>| DomainSequence::new(seq.domains[r].to_vec(), seq.classes);
    Ok((part(0..a)?, part(a..b)?, part(b..seq.len())?))
}
