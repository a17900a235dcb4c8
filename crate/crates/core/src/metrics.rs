//! Divergences, jackknife estimates and readout-error mitigation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{pseudo_inverse, RealMatrix};

/// Shot tallies keyed by bitstring.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl Counts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(counts: BTreeMap<String, u64>) -> Self {
        let total = counts.values().sum();
        Counts { counts, total }
    }

    pub fn add(&mut self, label: impl Into<String>, n: u64) {
        *self.counts.entry(label.into()).or_insert(0) += n;
        self.total += n;
    }

    pub fn merge(mut self, other: Counts) -> Counts {
        for (k, v) in other.counts {
            self.add(k, v);
        }
        self
    }

    pub fn get(&self, label: &str) -> u64 {
        self.counts.get(label).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bitstring,count\n");
        for (k, v) in &self.counts {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut c = Counts::new();
        let mut offset = 0;
        for line in text.lines() {
            let start = offset;
            offset += line.len() + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with("bitstring") {
                continue;
            }
            let (k, v) = line.split_once(',').ok_or_else(|| Error::Parse {
                offset: start,
                msg: "expected `bitstring,count`".into(),
            })?;
            if !k.chars().all(|ch| ch == '0' || ch == '1') {
                return Err(Error::Parse {
                    offset: start,
                    msg: format!("bad bitstring {k:?}"),
                });
            }
            let n: u64 = v.trim().parse().map_err(|_| Error::Parse {
                offset: start,
                msg: format!("bad count {v:?}"),
            })?;
            c.add(k, n);
        }
        Ok(c)
    }
}

/// Probabilities over labeled outcomes; absent labels have probability 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: BTreeMap<String, f64>,
}

pub fn bitstring(index: usize, n: usize) -> String {
    (0..n).map(|i| if index >> i & 1 == 1 { '1' } else { '0' }).collect()
}

pub fn bitstring_index(label: &str) -> usize {
    label
        .bytes()
        .enumerate()
        .filter(|(_, b)| *b == b'1')
        .map(|(i, _)| 1 << i)
        .sum()
}

impl Distribution {
    pub fn from_map(probs: BTreeMap<String, f64>) -> Result<Self> {
        if probs.values().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput("probabilities must be finite and ≥ 0".into()));
        }
        let sum: f64 = probs.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("probabilities sum to {sum}")));
        }
        Ok(Distribution { probs })
    }

    /// Dense vector indexed by bitstring index (character i is bit i).
    pub fn from_dense(n: usize, p: &[f64]) -> Result<Self> {
        if p.len() != 1 << n {
            return Err(Error::Shape(format!("{} probabilities for {n} bits", p.len())));
        }
        let map = p
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (bitstring(i, n), *v))
            .collect();
        Self::from_map(map)
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; 1 << n];
        for (k, p) in &self.probs {
            v[bitstring_index(k)] += p;
        }
        v
    }

    pub fn get(&self, label: &str) -> f64 {
        self.probs.get(label).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.probs.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.probs.keys().map(String::as_str)
    }
}

pub fn counts_to_distribution(c: &Counts) -> Result<Distribution> {
    if c.total() == 0 {
        return Err(Error::Degenerate("no shots recorded".into()));
    }
    let t = c.total() as f64;
    Ok(Distribution {
        probs: c.iter().map(|(k, v)| (k.to_string(), v as f64 / t)).collect(),
    })
}

fn union<'a>(p: &'a Distribution, q: &'a Distribution) -> Vec<&'a str> {
    let mut labels: Vec<&str> = p.labels().chain(q.labels()).collect();
    labels.sort_unstable();
    labels.dedup();
    labels
}

/// `Σ p_T[ln(p_T/p_N) − 1] + p_N`, with `p_N` where `p_T = 0` and `+∞`
/// where only `p_N` vanishes.
pub fn convex_kl(pt: &Distribution, pn: &Distribution) -> f64 {
    union(pt, pn)
        .into_iter()
        .map(|k| {
            let (a, b) = (pt.get(k), pn.get(k));
            match (a > 0.0, b > 0.0) {
                (true, true) => a * ((a / b).ln() - 1.0) + b,
                (false, _) => b,
                (true, false) => f64::INFINITY,
            }
        })
        .sum()
}

pub fn total_variation(p: &Distribution, q: &Distribution) -> f64 {
    0.5 * union(p, q)
        .into_iter()
        .map(|k| (p.get(k) - q.get(k)).abs())
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jackknife {
    pub plain: f64,
    pub bias_corrected: f64,
    pub variance: f64,
}

/// Delete-one jackknife of `statistic` over `runs`.
pub fn jackknife<T: Clone, F: Fn(&[T]) -> f64>(runs: &[T], statistic: F) -> Result<Jackknife> {
    let n = runs.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("jackknife needs ≥ 2 runs, got {n}")));
    }
    let plain = statistic(runs);
    let loo: Vec<f64> = (0..n)
        .map(|i| {
            let rest: Vec<T> = runs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, r)| r.clone())
                .collect();
            statistic(&rest)
        })
        .collect();
    let nf = n as f64;
    let mean = loo.iter().sum::<f64>() / nf;
    Ok(Jackknife {
        plain,
        bias_corrected: nf * plain - (nf - 1.0) * mean,
        variance: (nf - 1.0) / nf * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>(),
    })
}

pub const ILL_CONDITIONED: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filtered {
    pub distribution: Distribution,
    pub condition_number: f64,
    /// Set when the confusion matrix was too ill-conditioned to invert; the
    /// distribution is then the raw one.
    pub ill_conditioned: bool,
}

/// Inverts readout confusion `a` (columns = true outcomes, indexed as in
/// [`bitstring_index`]) on normalized counts, then clips and renormalizes.
pub fn measurement_filter(counts: &Counts, a: &RealMatrix, n_bits: usize) -> Result<Filtered> {
    let dim = 1usize << n_bits;
    if a.rows() != dim || a.cols() != dim {
        return Err(Error::Shape(format!(
            "confusion matrix {}×{} for {n_bits} bits",
            a.rows(),
            a.cols()
        )));
    }
    if counts.iter().any(|(k, _)| k.len() != n_bits) {
        return Err(Error::Shape(format!("counts labels must have {n_bits} bits")));
    }
    let raw = counts_to_distribution(counts)?;
    let (pinv, cond) = pseudo_inverse(a, 1e-15)?;
    if !(cond <= ILL_CONDITIONED) {
        return Ok(Filtered {
            distribution: raw,
            condition_number: cond,
            ill_conditioned: true,
        });
    }
    let c = raw.to_dense(n_bits);
    let mut p: Vec<f64> = (0..dim)
        .map(|i| (0..dim).map(|j| pinv[(i, j)] * c[j]).sum::<f64>().max(0.0))
        .collect();
    let s: f64 = p.iter().sum();
    if !(s > 0.0) {
        return Err(Error::Degenerate("filtered distribution vanished".into()));
    }
    p.iter_mut().for_each(|v| *v /= s);
    Ok(Filtered {
        distribution: Distribution::from_dense(n_bits, &p)?,
        condition_number: cond,
        ill_conditioned: false,
    })
}

/// CSV rows `label,ideal,raw,filtered` over the union of labels.
pub fn comparison_csv(ideal: &Distribution, raw: &Distribution, filtered: &Distribution) -> String {
    let mut labels: Vec<&str> = ideal.labels().chain(raw.labels()).chain(filtered.labels()).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut s = String::from("label,ideal,raw,filtered\n");
    for k in labels {
        let _ = writeln!(s, "{k},{},{},{}", ideal.get(k), raw.get(k), filtered.get(k));
    }
    s
}
