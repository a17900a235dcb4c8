//! Statevector and density-matrix execution of sequential-preparation
//! circuits with depolarizing gate noise and asymmetric readout noise.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{apply_gate, expand_motifs, Circuit, Gate};
use crate::error::{Error, Result};
use crate::metrics::{Counts, Distribution};
use crate::mps::Isometry;
use crate::numerics::RealMatrix;

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Average error of each CNOT.
    pub xi2: f64,
    /// Average error of each single-qubit gate.
    pub xi1: f64,
    /// Readout parameter: `P(1|0) = ζ`, `P(0|1) = 2ζ`.
    pub zeta: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl NoiseModel {
    pub fn ideal() -> Self {
        NoiseModel {
            xi2: 0.0,
            xi1: 0.0,
            zeta: 0.0,
        }
    }

    /// `xi1 = xi2 · 10⁻²`.
    pub fn new(xi2: f64, zeta: f64) -> Result<Self> {
        let m = NoiseModel {
            xi2,
            xi1: xi2 * 1e-2,
            zeta,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        depolarizing_params(self.xi1, 1)?;
        depolarizing_params(self.xi2, 2)?;
        if !(0.0..=0.5).contains(&self.zeta) {
            return Err(Error::InvalidParameter(format!("zeta {} outside [0, 0.5]", self.zeta)));
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.xi1 == 0.0 && self.xi2 == 0.0 && self.zeta == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Depolarizing {
    pub p: f64,
    pub identity_weight: f64,
    /// Weight of each of the `4^n − 1` non-identity Pauli strings.
    pub pauli_weight: f64,
}

/// `p = 2^n ξ / (2^n − 1)`. Requires `ξ ≤ 2^n / (2^n + 1)`, where the
/// identity weight reaches the fully depolarizing value.
pub fn depolarizing_params(xi: f64, n_q: usize) -> Result<Depolarizing> {
    if !(n_q == 1 || n_q == 2) {
        return Err(Error::InvalidParameter(format!("depolarizing on {n_q} qubits")));
    }
    let d = (1usize << n_q) as f64;
    let bound = d / (d + 1.0);
    if !(0.0..=bound).contains(&xi) {
        return Err(Error::InvalidParameter(format!(
            "{n_q}-qubit error {xi} outside [0, {bound}]"
        )));
    }
    let p = d * xi / (d - 1.0);
    let d2 = d * d;
    Ok(Depolarizing {
        p,
        identity_weight: 1.0 - (d2 - 1.0) * p / d2,
        pauli_weight: p / d2,
    })
}

/// Per-qubit `[[1−ζ, 2ζ], [ζ, 1−2ζ]]` (column = true state), Kronecker
/// product with qubit 0 as the least significant index bit.
pub fn readout_confusion(zeta: f64, n_qubits: usize) -> Result<RealMatrix> {
    if !(0.0..=0.5).contains(&zeta) {
        return Err(Error::InvalidParameter(format!("zeta {zeta} outside [0, 0.5]")));
    }
    let single = [[1.0 - zeta, 2.0 * zeta], [zeta, 1.0 - 2.0 * zeta]];
    let dim = 1usize << n_qubits;
    let mut a = RealMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            a[(r, c)] = (0..n_qubits)
                .map(|q| single[r >> q & 1][c >> q & 1])
                .product();
        }
    }
    Ok(a)
}

fn apply_pauli(state: &mut [Complex64], q: usize, k: usize) {
    let bit = 1 << q;
    match k {
        1 => {
            for i in 0..state.len() {
                if i & bit == 0 {
                    state.swap(i, i | bit);
                }
            }
        }
        2 => {
            let im = Complex64::new(0.0, 1.0);
            for i in 0..state.len() {
                if i & bit == 0 {
                    let (a, b) = (state[i], state[i | bit]);
                    state[i] = -im * b;
                    state[i | bit] = im * a;
                }
            }
        }
        3 => {
            for (i, v) in state.iter_mut().enumerate() {
                if i & bit != 0 {
                    *v = -*v;
                }
            }
        }
        _ => {}
    }
}

/// Applies Pauli string `code` (base-4 digit per qubit, 0 = identity).
fn apply_pauli_string(state: &mut [Complex64], qubits: &[usize], code: usize) {
    for (t, &q) in qubits.iter().enumerate() {
        apply_pauli(state, q, code >> (2 * t) & 3);
    }
}

fn gate_noise(g: &Gate, noise: &NoiseModel) -> Option<(Vec<usize>, Depolarizing)> {
    let qs = g.qubits();
    let xi = if qs.len() == 1 { noise.xi1 } else { noise.xi2 };
    let d = depolarizing_params(xi, qs.len()).ok()?;
    (d.p > 0.0).then_some((qs, d))
}

fn prepare(circuits: &[Circuit]) -> Result<(usize, Vec<Circuit>)> {
    let n = circuits
        .first()
        .ok_or_else(|| Error::InvalidInput("no site circuits".into()))?
        .n_qubits;
    if circuits.iter().any(|c| c.n_qubits != n) {
        return Err(Error::InvalidInput("site circuits must share the register size".into()));
    }
    let expanded = circuits
        .iter()
        .map(|c| if c.has_motifs() { expand_motifs(c) } else { Ok(c.clone()) })
        .collect::<Result<Vec<_>>>()?;
    if expanded.iter().flat_map(|c| &c.gates).any(|g| g.qubits().len() > 2) {
        return Err(Error::InvalidInput("gates act on at most two qubits after expansion".into()));
    }
    Ok((n, expanded))
}

fn run_trajectory<R: Rng>(state: &mut [Complex64], c: &Circuit, noise: &NoiseModel, rng: &mut R) {
    for g in &c.gates {
        apply_gate(state, g);
        if let Some((qs, d)) = gate_noise(g, noise) {
            if rng.random::<f64>() < d.p {
                let code = rng.random_range(0..1usize << (2 * qs.len()));
                apply_pauli_string(state, &qs, code);
            }
        }
    }
}

fn readout<R: Rng>(truth: u8, zeta: f64, rng: &mut R) -> u8 {
    let flip = if truth == 0 { zeta } else { 2.0 * zeta };
    if flip > 0.0 && rng.random::<f64>() < flip {
        1 - truth
    } else {
        truth
    }
}

/// Projectively measures qubit 0 and resets it to `|0⟩`; returns the true
/// outcome.
fn measure_and_reset<R: Rng>(state: &mut [Complex64], rng: &mut R) -> u8 {
    let p1: f64 = state.iter().skip(1).step_by(2).map(|v| v.norm_sqr()).sum();
    let p0: f64 = state.iter().step_by(2).map(|v| v.norm_sqr()).sum();
    let b = u8::from(rng.random::<f64>() * (p0 + p1) < p1);
    let norm = if b == 1 { p1 } else { p0 }.sqrt();
    for i in (0..state.len()).step_by(2) {
        let v = state[i + b as usize] / norm;
        state[i] = v;
        state[i + 1] = C0;
    }
    b
}

fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

fn run_shots<F>(shots: u64, f: F) -> Counts
where
    F: Fn(u64) -> String + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..shots)
            .into_par_iter()
            .fold(Counts::new, |mut c, s| {
                c.add(f(s), 1);
                c
            })
            .reduce(Counts::new, Counts::merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut c = Counts::new();
        for s in 0..shots {
            c.add(f(s), 1);
        }
        c
    }
}

/// Samples the sequential model: `circuits[j]` prepares site `j`, executed
/// from the last site down to 0 with qubit 0 as the data qubit. Character
/// `j` of each bitstring is the recorded outcome of site `j`.
pub fn run_sequential_shots(circuits: &[Circuit], noise: &NoiseModel, shots: u64, seed: u64) -> Result<Counts> {
    noise.validate()?;
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be ≥ 1".into()));
    }
    let (n, circuits) = prepare(circuits)?;
    let big_n = circuits.len();
    Ok(run_shots(shots, |shot| {
        let mut rng = shot_rng(seed, shot);
        let mut state = vec![C0; 1 << n];
        state[0] = Complex64::new(1.0, 0.0);
        let mut bits = vec!['0'; big_n];
        for j in (0..big_n).rev() {
            run_trajectory(&mut state, &circuits[j], noise, &mut rng);
            let truth = measure_and_reset(&mut state, &mut rng);
            bits[j] = if readout(truth, noise.zeta, &mut rng) == 1 { '1' } else { '0' };
        }
        bits.into_iter().collect()
    }))
}

/// Row-major complex density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zero_state(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        let mut data = vec![C0; dim * dim];
        data[0] = Complex64::new(1.0, 0.0);
        DensityMatrix { dim, data }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    /// `ρ → V ρ V†` for a state-vector map `v`.
    fn conjugate_by<F: Fn(&mut [Complex64])>(&mut self, v: F) {
        let d = self.dim;
        let mut col = vec![C0; d];
        for c in 0..d {
            for r in 0..d {
                col[r] = self.data[r * d + c];
            }
            v(&mut col);
            for r in 0..d {
                self.data[r * d + c] = col[r];
            }
        }
        // (ρ V†)[r, :] = conj(V conj(ρ[r, :]))
        for r in 0..d {
            let row = &mut self.data[r * d..(r + 1) * d];
            row.iter_mut().for_each(|x| *x = x.conj());
            v(row);
            row.iter_mut().for_each(|x| *x = x.conj());
        }
    }

    pub fn apply_gate(&mut self, g: &Gate) {
        self.conjugate_by(|s| apply_gate(s, g));
    }

    pub fn depolarize(&mut self, qubits: &[usize], d: &Depolarizing) {
        let terms = 1usize << (2 * qubits.len());
        let mut acc: Vec<Complex64> = self.data.iter().map(|x| x * d.identity_weight).collect();
        for code in 1..terms {
            let mut t = self.clone();
            t.conjugate_by(|s| apply_pauli_string(s, qubits, code));
            for (a, x) in acc.iter_mut().zip(&t.data) {
                *a += x * d.pauli_weight;
            }
        }
        self.data = acc;
    }

    /// Unnormalized post-measurement state of qubit 0 with outcome `b`,
    /// reset to `|0⟩`.
    fn project_reset(&self, b: usize) -> DensityMatrix {
        let d = self.dim;
        let mut data = vec![C0; d * d];
        for r in (0..d).step_by(2) {
            for c in (0..d).step_by(2) {
                data[r * d + c] = self.data[(r | b) * d + (c | b)];
            }
        }
        DensityMatrix { dim: d, data }
    }

    fn axpy(&mut self, w: f64, other: &DensityMatrix) {
        for (a, x) in self.data.iter_mut().zip(&other.data) {
            *a += x * w;
        }
    }
}

pub const EXACT_MAX_SITES: usize = 12;
pub const EXACT_MAX_QUBITS: usize = 6;

/// Exact distribution of recorded bitstrings by density-matrix evolution,
/// branching on every measurement with the readout confusion folded in.
pub fn run_sequential_exact(circuits: &[Circuit], noise: &NoiseModel) -> Result<Distribution> {
    noise.validate()?;
    let (n, circuits) = prepare(circuits)?;
    let big_n = circuits.len();
    if big_n > EXACT_MAX_SITES || n > EXACT_MAX_QUBITS {
        return Err(Error::TooLarge(format!(
            "exact mode is limited to {EXACT_MAX_SITES} sites and {EXACT_MAX_QUBITS} qubits"
        )));
    }
    // branches keyed by the recorded outcomes of sites N−1, N−2, …
    let mut branches: Vec<(Vec<u8>, DensityMatrix)> = vec![(vec![], DensityMatrix::zero_state(n))];
    let conf = [[1.0 - noise.zeta, 2.0 * noise.zeta], [noise.zeta, 1.0 - 2.0 * noise.zeta]];
    for j in (0..big_n).rev() {
        let mut next: Vec<(Vec<u8>, DensityMatrix)> = Vec::with_capacity(branches.len() * 2);
        for (prefix, mut rho) in branches {
            for g in &circuits[j].gates {
                rho.apply_gate(g);
                if let Some((qs, d)) = gate_noise(g, noise) {
                    rho.depolarize(&qs, &d);
                }
            }
            let post = [rho.project_reset(0), rho.project_reset(1)];
            for (r, row) in conf.iter().enumerate() {
                let mut acc = DensityMatrix {
                    dim: rho.dim,
                    data: vec![C0; rho.data.len()],
                };
                let mut any = false;
                for (b, p) in post.iter().enumerate() {
                    if row[b] > 0.0 && p.trace() > 1e-300 {
                        acc.axpy(row[b], p);
                        any = true;
                    }
                }
                if any && acc.trace() > 1e-300 {
                    let mut key = prefix.clone();
                    key.push(r as u8);
                    next.push((key, acc));
                }
            }
        }
        branches = next;
    }
    let mut probs = BTreeMap::new();
    for (key, rho) in branches {
        // key[0] is site N−1
        let label: String = key.iter().rev().map(|b| if *b == 1 { '1' } else { '0' }).collect();
        *probs.entry(label).or_insert(0.0) += rho.trace();
    }
    let total: f64 = probs.values().sum();
    probs.values_mut().for_each(|p| *p /= total);
    Distribution::from_map(probs)
}

/// Exact noiseless distribution from applying the isometry matrices
/// directly, bypassing compilation.
pub fn isometry_distribution(isos: &[Isometry]) -> Result<Distribution> {
    let n = isos
        .first()
        .ok_or_else(|| Error::InvalidInput("no isometries".into()))?
        .n_qubits;
    if isos.iter().any(|i| i.n_qubits != n) {
        return Err(Error::InvalidInput("isometries must share the register size".into()));
    }
    let big_n = isos.len();
    if big_n > 24 {
        return Err(Error::TooLarge(format!("{big_n} sites")));
    }
    let dim = 1usize << n;
    let mut branches: Vec<(usize, Vec<f64>)> = vec![(0, {
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        v
    })];
    for j in (0..big_n).rev() {
        let m = &isos[j].matrix;
        let mut next = Vec::with_capacity(branches.len() * 2);
        for (bits, psi) in branches {
            let out: Vec<f64> = (0..dim)
                .map(|r| (0..dim).step_by(2).map(|c| m[(r, c)] * psi[c]).sum())
                .collect();
            for b in 0..2 {
                let mut v = vec![0.0; dim];
                for i in (0..dim).step_by(2) {
                    v[i] = out[i | b];
                }
                if v.iter().any(|x| *x != 0.0) {
                    next.push((bits | b << j, v));
                }
            }
        }
        branches = next;
    }
    let mut p = vec![0.0; 1 << big_n];
    for (bits, v) in branches {
        p[bits] += v.iter().map(|x| x * x).sum::<f64>();
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Distribution::from_dense(big_n, &p)
}

/// Physical placement for register mode: the data qubit of each site and the
/// shared ancilla qubits (site-circuit qubit `k ≥ 1` maps to `ancilla[k−1]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitMap {
    pub data: Vec<usize>,
    pub ancilla: Vec<usize>,
}

impl QubitMap {
    /// Sites on qubits `0..N`, ancillas after them.
    pub fn contiguous(n_sites: usize, n_ancilla: usize) -> Self {
        QubitMap {
            data: (0..n_sites).collect(),
            ancilla: (n_sites..n_sites + n_ancilla).collect(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.data.len() + self.ancilla.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_qubits();
        let mut seen = vec![false; n];
        for &q in self.data.iter().chain(&self.ancilla) {
            if q >= n || std::mem::replace(&mut seen[q], true) {
                return Err(Error::InvalidParameter(format!("qubit map collision or gap at {q}")));
            }
        }
        Ok(())
    }

    fn remap(&self, site: usize, g: &Gate) -> Gate {
        let m = |q: usize| if q == 0 { self.data[site] } else { self.ancilla[q - 1] };
        match *g {
            Gate::Ry { q, theta } => Gate::Ry { q: m(q), theta },
            Gate::Rz { q, theta } => Gate::Rz { q: m(q), theta },
            Gate::X { q } => Gate::X { q: m(q) },
            Gate::Cnot { control, target } => Gate::Cnot {
                control: m(control),
                target: m(target),
            },
            Gate::S { q1, q2, theta, theta_p } => Gate::S {
                q1: m(q1),
                q2: m(q2),
                theta,
                theta_p,
            },
            Gate::F { c, q1, q2, theta, theta_p } => Gate::F {
                c: m(c),
                q1: m(q1),
                q2: m(q2),
                theta,
                theta_p,
            },
        }
    }
}

pub const REGISTER_MAX_QUBITS: usize = 14;

/// Static-register execution: every site circuit acts on its own data qubit
/// and the shared ancillas, followed by one terminal measurement of all
/// qubits. Character `i` of each bitstring is physical qubit `i`.
pub fn run_register_mode(
    circuits: &[Circuit],
    map: &QubitMap,
    noise: &NoiseModel,
    shots: u64,
    seed: u64,
) -> Result<Counts> {
    noise.validate()?;
    map.validate()?;
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be ≥ 1".into()));
    }
    let (n, circuits) = prepare(circuits)?;
    if map.data.len() != circuits.len() || map.ancilla.len() + 1 != n {
        return Err(Error::InvalidParameter(format!(
            "map has {} sites and {} ancillas for {} circuits of {n} qubits",
            map.data.len(),
            map.ancilla.len(),
            circuits.len()
        )));
    }
    let total = map.n_qubits();
    if total > REGISTER_MAX_QUBITS {
        return Err(Error::TooLarge(format!("{total} register qubits")));
    }
    let mut gates = Vec::new();
    for j in (0..circuits.len()).rev() {
        gates.extend(circuits[j].gates.iter().map(|g| map.remap(j, g)));
    }
    let full = Circuit::from_gates(total, gates)?;
    let noiseless_gates = noise.xi1 == 0.0 && noise.xi2 == 0.0;
    let fixed = noiseless_gates.then(|| {
        let mut s = vec![C0; 1 << total];
        s[0] = Complex64::new(1.0, 0.0);
        run_trajectory(&mut s, &full, noise, &mut shot_rng(seed, 0));
        cumulative(&s)
    });
    Ok(run_shots(shots, |shot| {
        let mut rng = shot_rng(seed, shot);
        let cdf = match &fixed {
            Some(c) => std::borrow::Cow::Borrowed(c),
            None => {
                let mut s = vec![C0; 1 << total];
                s[0] = Complex64::new(1.0, 0.0);
                run_trajectory(&mut s, &full, noise, &mut rng);
                std::borrow::Cow::Owned(cumulative(&s))
            }
        };
        let u = rng.random::<f64>() * cdf.last().copied().unwrap_or(1.0);
        let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        (0..total)
            .map(|q| {
                let b = readout((idx >> q & 1) as u8, noise.zeta, &mut rng);
                if b == 1 { '1' } else { '0' }
            })
            .collect()
    }))
}

fn cumulative(s: &[Complex64]) -> Vec<f64> {
    s.iter()
        .scan(0.0, |acc, v| {
            *acc += v.norm_sqr();
            Some(*acc)
        })
        .collect()
}

/// Keeps shots whose ancilla bits are all 0.
pub fn postselect_ancilla_zero(counts: &Counts, ancilla: &[usize]) -> Result<Counts> {
    let mut out = Counts::new();
    for (k, v) in counts.iter() {
        let b = k.as_bytes();
        if ancilla.iter().any(|&q| q >= b.len()) {
            return Err(Error::Index(format!("ancilla qubit out of range for {k}")));
        }
        if ancilla.iter().all(|&q| b[q] == b'0') {
            out.add(k, v);
        }
    }
    if out.total() == 0 {
        return Err(Error::Degenerate("post-selection dropped every shot".into()));
    }
    Ok(out)
}

/// Re-labels register-mode counts by site (character `j` = site `j`).
pub fn register_to_site_counts(counts: &Counts, map: &QubitMap) -> Counts {
    let mut out = Counts::new();
    for (k, v) in counts.iter() {
        let b = k.as_bytes();
        let label: String = map.data.iter().map(|&q| b[q] as char).collect();
        out.add(label, v);
    }
    out
}

/// Short FNV-1a hash of a circuit's JSON form, for run manifests.
pub fn circuit_hash(c: &Circuit) -> String {
    let text = serde_json::to_string(c).unwrap_or_default();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub noise: NoiseModel,
    pub shots: u64,
    pub seed: u64,
    pub circuit_hashes: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depolarizing_values() {
        assert_eq!(depolarizing_params(0.0, 1).unwrap().p, 0.0);
        assert!((depolarizing_params(0.015, 1).unwrap().p - 0.03).abs() < 1e-15);
        let d = depolarizing_params(0.01, 2).unwrap();
        assert!((d.p - 0.04 / 3.0).abs() < 1e-15);
        assert!((d.identity_weight + 15.0 * d.pauli_weight - 1.0).abs() < 1e-15);
        assert!(depolarizing_params(0.9, 2).is_err());
        assert!(depolarizing_params(-0.1, 1).is_err());
    }

    #[test]
    fn confusion_values() {
        let a = readout_confusion(0.05, 1).unwrap();
        assert_eq!(a.as_slice(), &[0.95, 0.10, 0.05, 0.90]);
        assert_eq!(readout_confusion(0.0, 2).unwrap(), RealMatrix::identity(4));
        let a = readout_confusion(0.2, 3).unwrap();
        for c in 0..8 {
            assert!(((0..8).map(|r| a[(r, c)]).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_circuits() {
        let cs = vec![Circuit::new(2); 3];
        let c = run_sequential_shots(&cs, &NoiseModel::ideal(), 50, 1).unwrap();
        assert_eq!(c.get("000"), 50);
        let d = run_sequential_exact(&cs, &NoiseModel::ideal()).unwrap();
        assert!((d.get("000") - 1.0).abs() < 1e-12);
        let map = QubitMap::contiguous(3, 1);
        let r = run_register_mode(&cs, &map, &NoiseModel::ideal(), 20, 0).unwrap();
        assert_eq!(r.get("0000"), 20);
    }

    #[test]
    fn deterministic_x() {
        let mut c = Circuit::new(1);
        c.push(Gate::X { q: 0 }).unwrap();
        let cs = vec![c, Circuit::new(1)];
        let counts = run_sequential_shots(&cs, &NoiseModel::ideal(), 10, 3).unwrap();
        assert_eq!(counts.get("10"), 10);
    }

    #[test]
    fn map_collisions() {
        let bad = QubitMap {
            data: vec![0, 0],
            ancilla: vec![2],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn postselection() {
        let mut c = Counts::new();
        c.add("01", 5);
        c.add("00", 5);
        assert_eq!(postselect_ancilla_zero(&c, &[1]).unwrap().total(), 5);
        assert_eq!(postselect_ancilla_zero(&c, &[0]).unwrap(), c);
        let mut ones = Counts::new();
        ones.add("11", 2);
        assert!(postselect_ancilla_zero(&ones, &[1]).is_err());
    }
}
