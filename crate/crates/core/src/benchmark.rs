//! Exactly solvable single-excitation model: a χ = 2 MPS whose Born
//! distribution puts weight `p_i` on the one-hot string at `i`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{cnot_count, s_matrix, Circuit, Gate, Topology};
use crate::compiler::{compile_model, support_cost, CompileConfig, CompileReportEntry};
use crate::data::{one_hot_dataset, BitVector};
use crate::error::{Error, Result};
use crate::gauge::{default_center, to_diagonal_gauge};
use crate::metrics::{convex_kl, counts_to_distribution, measurement_filter, total_variation, Counts, Distribution};
use crate::mps::{self, extract_isometries, mps_from_isometries, Isometry, Mps, Tensor3};
use crate::numerics::RealMatrix;
use crate::simulator::{readout_confusion, run_sequential_shots, NoiseModel};
use crate::training::{train, TrainConfig, TrainStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub p: Vec<f64>,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec::from_counts(&[8, 18, 5]).expect("valid counts")
    }
}

impl BenchmarkSpec {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let s = BenchmarkSpec { p };
        s.validate()?;
        Ok(s)
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidParameter("counts sum to zero".into()));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.len() < 2 {
            return Err(Error::InvalidParameter("need at least two sites".into()));
        }
        if self.p.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("probabilities must be positive".into()));
        }
        let sum: f64 = self.p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {sum}")));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.p.len()
    }

    /// `θ_j` with `sin θ_j = √(p_j / Σ_{i≤j} p_i)`.
    pub fn angles(&self) -> Vec<f64> {
        let mut cum = 0.0;
        self.p
            .iter()
            .map(|&pj| {
                cum += pj;
                (pj / cum).sqrt().clamp(0.0, 1.0).asin()
            })
            .collect()
    }

    pub fn distribution(&self) -> Distribution {
        let n = self.n_sites();
        let map: BTreeMap<String, f64> = self
            .p
            .iter()
            .enumerate()
            .map(|(i, &v)| (BitVector::one_hot(n, i).to_string(), v))
            .collect();
        Distribution::from_map(map).expect("validated spec")
    }
}

/// Bond index 1 marks that the excitation lies to the left.
pub fn exact_mps(spec: &BenchmarkSpec) -> Result<Mps> {
    spec.validate()?;
    let n = spec.n_sites();
    let tensors = (0..n)
        .map(|j| {
            let (l, r) = (if j == 0 { 1 } else { 2 }, if j == n - 1 { 1 } else { 2 });
            let mut t = Tensor3::zeros(l, r);
            let s = spec.p[j].sqrt();
            if j == 0 {
                t.set(0, 0, 0, 1.0);
                t.set(0, 1, r - 1, s);
            } else if j == n - 1 {
                t.set(0, 1, 0, s);
                t.set(1, 0, 0, 1.0);
            } else {
                t.set(0, 0, 0, 1.0);
                t.set(0, 1, 1, s);
                t.set(1, 0, 1, 1.0);
            }
            t
        })
        .collect();
    Mps::new(tensors)
}

pub fn exact_isometries(spec: &BenchmarkSpec) -> Result<Vec<Isometry>> {
    spec.validate()?;
    let n = spec.n_sites();
    let theta = spec.angles();
    (0..n)
        .map(|j| {
            let (s, c) = theta[j].sin_cos();
            let mut m = RealMatrix::zeros(4, 4);
            if j == n - 1 {
                m[(1, 0)] = s;
                m[(2, 0)] = c;
                Isometry::new(j, 2, 1, 2, m)
            } else {
                m[(0, 0)] = 1.0;
                m[(1, 2)] = s;
                m[(2, 2)] = c;
                Isometry::new(j, 2, 2, if j == 0 { 1 } else { 2 }, m)
            }
        })
        .collect()
}

/// Block rotation `S(θ, θ)` on `(ancilla, data)`, basis index `2a + q`.
pub fn unitary_completion(theta: f64) -> RealMatrix {
    let s = s_matrix(theta, theta);
    RealMatrix::from_rows(&s.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).expect("4x4")
}

pub fn unitary_completion_last(theta: f64) -> RealMatrix {
    let (s, c) = theta.sin_cos();
    let cols = [[0.0, s, c, 0.0], [0.0, c, -s, 0.0], [c, 0.0, 0.0, s], [-s, 0.0, 0.0, c]];
    let mut m = RealMatrix::zeros(4, 4);
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Reference circuits indexed by site; qubit 0 is the data qubit and qubit 1
/// the ancilla.
pub fn hand_compiled_circuits(spec: &BenchmarkSpec) -> Result<Vec<Circuit>> {
    spec.validate()?;
    let n = spec.n_sites();
    let theta = spec.angles();
    let (q, a) = (0, 1);
    let cx = Gate::Cnot { control: q, target: a };
    let half = std::f64::consts::FRAC_PI_2;
    (0..n)
        .map(|j| {
            let t = theta[j];
            let gates = if j == n - 1 {
                vec![
                    Gate::Ry { q, theta: 2.0 * t },
                    Gate::X { q },
                    cx,
                    Gate::X { q },
                ]
            } else {
                // the leading CNOT acts trivially on the defined inputs
                vec![
                    Gate::Ry { q, theta: t },
                    cx,
                    Gate::Rz { q, theta: half },
                    Gate::Rz { q: a, theta: half },
                    cx,
                    Gate::Ry { q, theta: t },
                    cx,
                    Gate::Rz { q, theta: -half },
                    Gate::Rz { q: a, theta: -half },
                ]
            };
            Circuit::from_gates(2, gates)
        })
        .collect()
}

/// Exchanges the roles of the ancilla states on every internal bond.
pub fn swap_bond_basis(isos: &[Isometry]) -> Result<Vec<Isometry>> {
    let n = isos.len();
    isos.iter()
        .enumerate()
        .map(|(j, iso)| {
            let mut t = iso.to_tensor();
            if j > 0 {
                t = t.absorb_left(&swap_matrix(t.left_dim()))?;
            }
            if j + 1 < n {
                t = t.absorb_right(&swap_matrix(t.right_dim()))?;
            }
            Isometry::from_tensor(iso.site, iso.n_qubits, &t)
        })
        .collect()
}

fn swap_matrix(d: usize) -> RealMatrix {
    let mut m = RealMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, d - 1 - i)] = 1.0;
    }
    m
}

pub fn swapped_gauge_isometries(spec: &BenchmarkSpec) -> Result<Vec<Isometry>> {
    swap_bond_basis(&exact_isometries(spec)?)
}

pub fn swapped_gauge_mps(spec: &BenchmarkSpec) -> Result<Mps> {
    mps_from_isometries(&swapped_gauge_isometries(spec)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub train: TrainConfig,
    pub compile: CompileConfig,
    pub noise: NoiseModel,
    pub shots: u64,
    pub seed: u64,
    /// Integer weights defining the target distribution.
    pub counts: Vec<u64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            train: TrainConfig {
                learning_rate: 1e-2,
                chi_max: 2,
                max_sweeps: 500,
                convergence_tol: 1e-12,
                seed: 1,
                ..TrainConfig::default()
            },
            compile: CompileConfig::default(),
            noise: NoiseModel::ideal(),
            shots: 1 << 13,
            seed: 0,
            counts: vec![8, 18, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetric {
    pub a: String,
    pub b: String,
    pub convex_kl: f64,
    pub total_variation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub p: Vec<f64>,
    pub train_nll: Option<f64>,
    pub train_status: Option<TrainStatus>,
    pub compile: Vec<CompileReportEntry>,
    pub auto_cnots: Option<usize>,
    pub hand_cnots: usize,
    pub hand_costs: Vec<f64>,
    /// Keyed by `analytic`, `classical`, `auto`, `hand` and the
    /// readout-filtered `auto_filtered`, `hand_filtered`.
    pub distributions: BTreeMap<String, Distribution>,
    pub pairs: Vec<PairMetric>,
    pub errors: Vec<String>,
}

impl BenchmarkReport {
    pub fn pair(&self, a: &str, b: &str) -> Option<&PairMetric> {
        self.pairs.iter().find(|m| m.a == a && m.b == b)
    }

    /// One row per outcome: ideal, classical, raw and filtered columns.
    pub fn to_csv(&self) -> String {
        let cols = ["analytic", "classical", "auto", "auto_filtered", "hand", "hand_filtered"];
        let mut labels: Vec<&str> = self.distributions.values().flat_map(|d| d.labels()).collect();
        labels.sort_unstable();
        labels.dedup();
        let mut s = String::from("label");
        for c in cols {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for l in labels {
            s.push_str(l);
            for c in cols {
                let v = self.distributions.get(c).map(|d| d.get(l));
                let _ = write!(s, ",{}", v.map(|v| v.to_string()).unwrap_or_default());
            }
            s.push('\n');
        }
        s
    }
}

fn sample_counts(mps: &Mps, shots: u64, seed: u64) -> Result<Counts> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Counts::new();
    for _ in 0..shots {
        c.add(mps::sample(mps, &mut rng)?.to_string(), 1);
    }
    Ok(c)
}

/// Trains, gauges, compiles and simulates the model, comparing the analytic,
/// classically sampled, auto-compiled and hand-compiled distributions. Stage
/// failures are recorded in `errors` and leave the dependent fields empty.
pub fn run_exact_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let spec = BenchmarkSpec::from_counts(&cfg.counts)?;
    cfg.noise.validate()?;
    let n = spec.n_sites();
    let hand = hand_compiled_circuits(&spec)?;
    let exact = exact_isometries(&spec)?;
    let mut report = BenchmarkReport {
        p: spec.p.clone(),
        train_nll: None,
        train_status: None,
        compile: vec![],
        auto_cnots: None,
        hand_cnots: hand.iter().map(cnot_count).sum(),
        hand_costs: hand
            .iter()
            .zip(&exact)
            .map(|(c, iso)| support_cost(c, iso, cfg.compile.support_delta))
            .collect::<Result<_>>()?,
        distributions: BTreeMap::new(),
        pairs: vec![],
        errors: vec![],
    };
    report.distributions.insert("analytic".into(), spec.distribution());

    let confusion = readout_confusion(cfg.noise.zeta, n)?;
    let simulate = |name: &str, circuits: &[Circuit], seed: u64, report: &mut BenchmarkReport| {
        match run_sequential_shots(circuits, &cfg.noise, cfg.shots, seed)
            .and_then(|c| Ok((counts_to_distribution(&c)?, measurement_filter(&c, &confusion, n)?)))
        {
            Ok((raw, filtered)) => {
                report.distributions.insert(name.into(), raw);
                report.distributions.insert(format!("{name}_filtered"), filtered.distribution);
            }
            Err(e) => report.errors.push(format!("{name} simulation: {e}")),
        }
    };
    simulate("hand", &hand, cfg.seed.wrapping_add(2), &mut report);

    let data = one_hot_dataset(&cfg.counts.iter().map(|&c| c as usize).collect::<Vec<_>>())?;
    let trained = match train(&data, &cfg.train) {
        Ok(out) => {
            report.train_nll = out.history.nll_per_sweep.last().copied();
            report.train_status = Some(out.status);
            Some(out.mps)
        }
        Err(e) => {
            report.errors.push(format!("training: {e}"));
            None
        }
    };
    if let Some(model) = trained {
        match sample_counts(&model, cfg.shots, cfg.seed).and_then(|c| counts_to_distribution(&c)) {
            Ok(d) => {
                report.distributions.insert("classical".into(), d);
            }
            Err(e) => report.errors.push(format!("classical sampling: {e}")),
        }
        let compiled = to_diagonal_gauge(&model, default_center(&model))
            .and_then(|(g, _)| extract_isometries(&g))
            .map(|isos| {
                let topo = Topology::all_to_all(isos[0].n_qubits);
                compile_model(&isos, &topo, &cfg.compile)
            });
        match compiled {
            Ok((results, summary)) => {
                let mut circuits = Vec::new();
                for r in results {
                    match r {
                        Ok(c) => {
                            report.compile.push(c.report());
                            circuits.push(c.circuit);
                        }
                        Err(e) => report.errors.push(format!("compile: {e}")),
                    }
                }
                if circuits.len() == n {
                    report.auto_cnots = Some(summary.total_cnots);
                    simulate("auto", &circuits, cfg.seed.wrapping_add(1), &mut report);
                }
            }
            Err(e) => report.errors.push(format!("gauge: {e}")),
        }
    }

    let names: Vec<String> = report.distributions.keys().cloned().collect();
    for a in &names {
        for b in &names {
            if a != b {
                let (da, db) = (&report.distributions[a], &report.distributions[b]);
                report.pairs.push(PairMetric {
                    a: a.clone(),
                    b: b.clone(),
                    convex_kl: convex_kl(da, db),
                    total_variation: total_variation(da, db),
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::circuit_matrix;

    #[test]
    fn closed_forms() {
        let spec = BenchmarkSpec::default();
        let m = exact_mps(&spec).unwrap();
        let a = mps::amplitude(&m, &BitVector::one_hot(3, 1)).unwrap();
        assert!((a - (18.0f64 / 31.0).sqrt()).abs() < 1e-12);
        assert!((a - 0.76200).abs() < 1e-5);
        assert_eq!(mps::born_prob(&m, &BitVector::zeros(3)).unwrap(), 0.0);
        let th = spec.angles();
        assert!((th[2].sin() - 0.40161).abs() < 1e-5);
        assert!((th[2].cos() - 0.91581).abs() < 1e-5);
        assert!((th[1].sin() - 0.83205).abs() < 1e-5);
        assert!((th[0].sin() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn completions() {
        let id = unitary_completion(0.0);
        assert_eq!(id, RealMatrix::identity(4));
        let swap = unitary_completion(std::f64::consts::FRAC_PI_2);
        assert!((swap[(1, 2)] - 1.0).abs() < 1e-15 && (swap[(2, 1)] + 1.0).abs() < 1e-15);
        for u in [unitary_completion(0.4), unitary_completion_last(1.1)] {
            let e = u.transpose().matmul(&u).unwrap().sub(&RealMatrix::identity(4)).unwrap();
            assert!(e.frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn hand_circuits_match() {
        let spec = BenchmarkSpec::default();
        let hand = hand_compiled_circuits(&spec).unwrap();
        let isos = exact_isometries(&spec).unwrap();
        assert_eq!(cnot_count(&hand[2]), 1);
        assert_eq!(cnot_count(&hand[1]), 3);
        for (c, iso) in hand.iter().zip(&isos) {
            assert!(support_cost(c, iso, 1e-10).unwrap() < 1e-20);
            let u = circuit_matrix(c).unwrap();
            for col in iso.defined_columns() {
                for r in 0..4 {
                    assert!((u.get(r, col).re - iso.matrix[(r, col)]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn swap_involution() {
        let spec = BenchmarkSpec::default();
        let isos = exact_isometries(&spec).unwrap();
        let back = swap_bond_basis(&swapped_gauge_isometries(&spec).unwrap()).unwrap();
        for (b, i) in back.iter().zip(&isos) {
            assert!(b.matrix.sub(&i.matrix).unwrap().frobenius_norm() < 1e-15, "{b:?} {i:?}");
        }
        let sw = swapped_gauge_isometries(&spec).unwrap();
        let s = s_matrix(-spec.angles()[1], spec.angles()[1]);
        for col in [0, 2] {
            for r in 0..4 {
                assert!((sw[1].matrix[(r, col)] - s[r][col]).abs() < 1e-12);
            }
        }
    }
}
