//! Gate-level circuit IR, motif expansion, simplification, coupling
//! topologies and OpenQASM 2 text.
//!
//! Basis states are indexed with qubit 0 as the least significant bit.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mps::Isometry;

/// Largest register for which dense circuit matrices are built.
pub const MAX_MATRIX_QUBITS: usize = 12;
const TEMPLATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "lowercase")]
pub enum Gate {
    Ry { q: usize, theta: f64 },
    Rz { q: usize, theta: f64 },
    X { q: usize },
    Cnot { control: usize, target: usize },
    /// Two-qubit rotation acting on the local basis `|b(q1) b(q2)⟩`.
    S { q1: usize, q2: usize, theta: f64, theta_p: f64 },
    /// `S(q1, q2)` controlled on qubit `c`.
    F { c: usize, q1: usize, q2: usize, theta: f64, theta_p: f64 },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Ry { q, .. } | Gate::Rz { q, .. } | Gate::X { q } => vec![q],
            Gate::Cnot { control, target } => vec![control, target],
            Gate::S { q1, q2, .. } => vec![q1, q2],
            Gate::F { c, q1, q2, .. } => vec![c, q1, q2],
        }
    }

    pub fn cnot_cost(&self) -> usize {
        match self {
            Gate::Cnot { .. } => 1,
            Gate::S { .. } => 2,
            Gate::F { .. } => 8,
            _ => 0,
        }
    }

    pub fn is_entangling(&self) -> bool {
        self.qubits().len() > 1
    }

    pub fn angles(&self) -> Vec<f64> {
        match *self {
            Gate::Ry { theta, .. } | Gate::Rz { theta, .. } => vec![theta],
            Gate::S { theta, theta_p, .. } | Gate::F { theta, theta_p, .. } => vec![theta, theta_p],
            _ => vec![],
        }
    }

    /// Same gate with its angles replaced, in `angles()` order.
    pub fn with_angles(&self, a: &[f64]) -> Gate {
        match *self {
            Gate::Ry { q, .. } => Gate::Ry { q, theta: a[0] },
            Gate::Rz { q, .. } => Gate::Rz { q, theta: a[0] },
            Gate::S { q1, q2, .. } => Gate::S {
                q1,
                q2,
                theta: a[0],
                theta_p: a[1],
            },
            Gate::F { c, q1, q2, .. } => Gate::F {
                c,
                q1,
                q2,
                theta: a[0],
                theta_p: a[1],
            },
            g => g,
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let qs = self.qubits();
        if let Some(q) = qs.iter().find(|&&q| q >= n_qubits) {
            return Err(Error::Index(format!("qubit {q} in {n_qubits}-qubit circuit")));
        }
        let distinct: BTreeSet<_> = qs.iter().collect();
        if distinct.len() != qs.len() {
            return Err(Error::InvalidInput(format!("repeated qubit in {self:?}")));
        }
        if self.angles().iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite angle in {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            gates: Vec::new(),
        }
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        for g in &gates {
            g.validate(n_qubits)?;
        }
        Ok(Circuit { n_qubits, gates })
    }

    pub fn push(&mut self, g: Gate) -> Result<()> {
        g.validate(self.n_qubits)?;
        self.gates.push(g);
        Ok(())
    }

    pub fn has_motifs(&self) -> bool {
        self.gates
            .iter()
            .any(|g| matches!(g, Gate::S { .. } | Gate::F { .. }))
    }

    pub fn is_real(&self) -> bool {
        !self.gates.iter().any(|g| matches!(g, Gate::Rz { .. }))
    }
}

/// Entangling-gate cost with motifs weighted by their CNOT expansions.
pub fn cnot_count(c: &Circuit) -> usize {
    c.gates.iter().map(Gate::cnot_cost).sum()
}

fn ry_cs(theta: f64) -> (f64, f64) {
    ((theta / 2.0).cos(), (theta / 2.0).sin())
}

/// The 4×4 `S(θ,θ′)` in the local basis `(00, 01, 10, 11)`.
pub fn s_matrix(theta: f64, theta_p: f64) -> [[f64; 4]; 4] {
    let (cm, sm) = (((theta - theta_p) / 2.0).cos(), ((theta - theta_p) / 2.0).sin());
    let (cp, sp) = (((theta + theta_p) / 2.0).cos(), ((theta + theta_p) / 2.0).sin());
    [
        [cm, 0.0, 0.0, sm],
        [0.0, cp, sp, 0.0],
        [0.0, -sp, cp, 0.0],
        [-sm, 0.0, 0.0, cm],
    ]
}

fn apply_pair<T>(state: &mut [T], q: usize, m: [[f64; 2]; 2])
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let bit = 1 << q;
    for i in 0..state.len() {
        if i & bit == 0 {
            let (a, b) = (state[i], state[i | bit]);
            state[i] = a * m[0][0] + b * m[0][1];
            state[i | bit] = a * m[1][0] + b * m[1][1];
        }
    }
}

fn apply_s<T>(state: &mut [T], q1: usize, q2: usize, m: &[[f64; 4]; 4], control: Option<usize>)
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let (b1, b2) = (1 << q1, 1 << q2);
    let cmask = control.map(|c| 1 << c).unwrap_or(0);
    for i in 0..state.len() {
        if i & (b1 | b2) != 0 || i & cmask != cmask {
            continue;
        }
        let idx = [i, i | b2, i | b1, i | b1 | b2];
        let v = idx.map(|k| state[k]);
        for (r, &k) in idx.iter().enumerate() {
            let row = m[r];
            state[k] = v[0] * row[0] + v[1] * row[1] + v[2] * row[2] + v[3] * row[3];
        }
    }
}

fn apply_common<T>(state: &mut [T], g: &Gate) -> bool
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    match *g {
        Gate::Ry { q, theta } => {
            let (c, s) = ry_cs(theta);
            apply_pair(state, q, [[c, -s], [s, c]]);
        }
        Gate::X { q } => {
            let bit = 1 << q;
            for i in 0..state.len() {
                if i & bit == 0 {
                    state.swap(i, i | bit);
                }
            }
        }
        Gate::Cnot { control, target } => {
            let (cb, tb) = (1 << control, 1 << target);
            for i in 0..state.len() {
                if i & cb != 0 && i & tb == 0 {
                    state.swap(i, i | tb);
                }
            }
        }
        Gate::S { q1, q2, theta, theta_p } => {
            apply_s(state, q1, q2, &s_matrix(theta, theta_p), None)
        }
        Gate::F { c, q1, q2, theta, theta_p } => {
            apply_s(state, q1, q2, &s_matrix(theta, theta_p), Some(c))
        }
        Gate::Rz { .. } => return false,
    }
    true
}

/// Applies a real gate in place; `Rz` is rejected.
pub fn apply_gate_real(state: &mut [f64], g: &Gate) -> Result<()> {
    if apply_common(state, g) {
        Ok(())
    } else {
        Err(Error::InvalidInput("Rz has no real representation".into()))
    }
}

pub fn apply_gate(state: &mut [Complex64], g: &Gate) {
    if let Gate::Rz { q, theta } = *g {
        let (lo, hi) = (
            Complex64::from_polar(1.0, -theta / 2.0),
            Complex64::from_polar(1.0, theta / 2.0),
        );
        let bit = 1 << q;
        for (i, v) in state.iter_mut().enumerate() {
            *v *= if i & bit == 0 { lo } else { hi };
        }
    } else {
        apply_common(state, g);
    }
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        ComplexMatrix { dim, data }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.dim).map(|r| self.get(r, c)).collect()
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of any entry from a real value.
    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }
}

/// Full matrix of a single gate on `n_qubits`.
pub fn gate_matrix(g: &Gate, n_qubits: usize) -> Result<ComplexMatrix> {
    circuit_matrix(&Circuit::from_gates(n_qubits, vec![*g])?)
}

/// Ordered product of the gate matrices (later gates on the left).
pub fn circuit_matrix(c: &Circuit) -> Result<ComplexMatrix> {
    if c.n_qubits > MAX_MATRIX_QUBITS {
        return Err(Error::TooLarge(format!(
            "{} qubits exceeds the dense-matrix cap of {MAX_MATRIX_QUBITS}",
            c.n_qubits
        )));
    }
    let dim = 1usize << c.n_qubits;
    let mut out = ComplexMatrix::identity(dim);
    for col in 0..dim {
        let mut state = vec![Complex64::new(0.0, 0.0); dim];
        state[col] = Complex64::new(1.0, 0.0);
        for g in &c.gates {
            apply_gate(&mut state, g);
        }
        for (r, v) in state.into_iter().enumerate() {
            out.data[r * dim + col] = v;
        }
    }
    Ok(out)
}

/// Images of the basis states `cols` under a circuit of real gates.
pub fn real_columns(c: &Circuit, cols: &[usize]) -> Result<Vec<Vec<f64>>> {
    let dim = 1usize << c.n_qubits;
    cols.iter()
        .map(|&col| {
            let mut state = vec![0.0; dim];
            state[col] = 1.0;
            for g in &c.gates {
                apply_gate_real(&mut state, g)?;
            }
            Ok(state)
        })
        .collect()
}

/// `Σ |U_{rc} − L_{rc}|²` over the isometry's defined columns.
pub fn isometry_cost(c: &Circuit, iso: &Isometry) -> Result<f64> {
    if c.n_qubits != iso.n_qubits {
        return Err(Error::Shape(format!(
            "{}-qubit circuit for {}-qubit isometry",
            c.n_qubits, iso.n_qubits
        )));
    }
    let dim = iso.dim();
    let mut cost = 0.0;
    for col in iso.defined_columns() {
        let mut state = vec![Complex64::new(0.0, 0.0); dim];
        state[col] = Complex64::new(1.0, 0.0);
        for g in &c.gates {
            apply_gate(&mut state, g);
        }
        for (r, v) in state.iter().enumerate() {
            cost += (v - iso.matrix[(r, col)]).norm_sqr();
        }
    }
    Ok(cost)
}

/// Two-CNOT realization of `S(θ,θ′)`.
fn s_template(q1: usize, q2: usize, theta: f64, theta_p: f64) -> [Gate; 6] {
    use std::f64::consts::FRAC_PI_2;
    [
        Gate::Ry { q: q1, theta: FRAC_PI_2 },
        Gate::Cnot { control: q1, target: q2 },
        Gate::Ry { q: q1, theta: -theta },
        Gate::Ry { q: q2, theta: -theta_p },
        Gate::Cnot { control: q1, target: q2 },
        Gate::Ry { q: q1, theta: -FRAC_PI_2 },
    ]
}

fn template_residual(theta: f64, theta_p: f64) -> Result<f64> {
    let expanded = Circuit::from_gates(2, s_template(1, 0, theta, theta_p).to_vec())?;
    let m = circuit_matrix(&expanded)?;
    let s = s_matrix(theta, theta_p);
    let mut worst: f64 = 0.0;
    for (r, row) in s.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            worst = worst.max((m.get(r, c) - v).norm());
        }
    }
    Ok(worst)
}

/// Rewrites `S` and `F` into `{Ry, CNOT}` (2 and 8 CNOTs respectively).
pub fn expand_motifs(c: &Circuit) -> Result<Circuit> {
    let mut gates = Vec::with_capacity(c.gates.len());
    let push_s = |gates: &mut Vec<Gate>, q1, q2, t: f64, tp: f64| -> Result<()> {
        let residual = template_residual(t, tp)?;
        if residual > TEMPLATE_TOL {
            return Err(Error::ExpansionFailed(residual));
        }
        gates.extend_from_slice(&s_template(q1, q2, t, tp));
        Ok(())
    };
    for g in &c.gates {
        match *g {
            Gate::S { q1, q2, theta, theta_p } => push_s(&mut gates, q1, q2, theta, theta_p)?,
            Gate::F { c: ctl, q1, q2, theta, theta_p } => {
                push_s(&mut gates, q1, q2, theta / 2.0, theta_p / 2.0)?;
                gates.push(Gate::Cnot { control: ctl, target: q1 });
                gates.push(Gate::Cnot { control: ctl, target: q2 });
                push_s(&mut gates, q1, q2, -theta / 2.0, -theta_p / 2.0)?;
                gates.push(Gate::Cnot { control: ctl, target: q1 });
                gates.push(Gate::Cnot { control: ctl, target: q2 });
            }
            other => gates.push(other),
        }
    }
    Circuit::from_gates(c.n_qubits, gates)
}

/// Maps an angle into `(−2π, 2π]`, which leaves `Ry`/`Rz` matrices unchanged.
pub fn canonical_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(4.0 * PI);
    if t > 2.0 * PI {
        t -= 4.0 * PI;
    }
    t
}

/// Isometry and tolerance against which simplification removals are checked.
#[derive(Debug, Clone, Copy)]
pub struct CostGuard<'a> {
    pub target: &'a Isometry,
    pub eps: f64,
}

/// Index of the last gate in `gates` that touches qubit `q`.
fn last_on(gates: &[Gate], q: usize) -> Option<usize> {
    gates.iter().rposition(|g| g.qubits().contains(&q))
}

/// One pass of exact rewrites: merge rotations, cancel CNOT/X pairs.
fn merge_pass(c: &Circuit) -> Vec<Gate> {
    let mut out: Vec<Gate> = Vec::with_capacity(c.gates.len());
    for g in &c.gates {
        match *g {
            Gate::Ry { q, theta } | Gate::Rz { q, theta } => {
                let is_ry = matches!(g, Gate::Ry { .. });
                if let Some(k) = last_on(&out, q) {
                    let merged = match out[k] {
                        Gate::Ry { theta: t0, .. } if is_ry => Some(Gate::Ry {
                            q,
                            theta: canonical_angle(t0 + theta),
                        }),
                        Gate::Rz { theta: t0, .. } if !is_ry => Some(Gate::Rz {
                            q,
                            theta: canonical_angle(t0 + theta),
                        }),
                        _ => None,
                    };
                    if let Some(m) = merged {
                        out[k] = m;
                        continue;
                    }
                }
                out.push(*g);
            }
            Gate::X { q } => {
                if let Some(k) = last_on(&out, q) {
                    if out[k] == *g {
                        out.remove(k);
                        continue;
                    }
                }
                out.push(*g);
            }
            Gate::Cnot { control, target } => {
                let (kc, kt) = (last_on(&out, control), last_on(&out, target));
                if let (Some(a), Some(b)) = (kc, kt) {
                    if a == b && out[a] == *g {
                        out.remove(a);
                        continue;
                    }
                }
                out.push(*g);
            }
            _ => out.push(*g),
        }
    }
    out
}

/// Merges adjacent same-axis rotations, cancels adjacent identical CNOT and
/// X pairs, and drops rotations with `|θ| < angle_tol`. With a guard, a
/// removal survives only if it raises the cost by less than `0.1·ε`.
pub fn simplify(c: &Circuit, angle_tol: f64, guard: Option<CostGuard<'_>>) -> Result<Circuit> {
    let mut cur = c.clone();
    loop {
        let merged = Circuit {
            n_qubits: cur.n_qubits,
            gates: merge_pass(&cur),
        };
        let mut gates = merged.gates.clone();
        let mut base = match guard {
            Some(gd) => Some(isometry_cost(&merged, gd.target)?),
            None => None,
        };
        let mut i = 0;
        while i < gates.len() {
            let small = match gates[i] {
                Gate::Ry { theta, .. } | Gate::Rz { theta, .. } => theta.abs() < angle_tol,
                _ => false,
            };
            if small {
                let mut trial = gates.clone();
                trial.remove(i);
                let accept = match (guard, base) {
                    (Some(gd), Some(b)) => {
                        let tc = Circuit {
                            n_qubits: cur.n_qubits,
                            gates: trial.clone(),
                        };
                        let cost = isometry_cost(&tc, gd.target)?;
                        if cost - b < 0.1 * gd.eps {
                            base = Some(cost);
                            true
                        } else {
                            false
                        }
                    }
                    _ => true,
                };
                if accept {
                    gates = trial;
                    continue;
                }
            }
            i += 1;
        }
        let next = Circuit {
            n_qubits: cur.n_qubits,
            gates,
        };
        if next == cur {
            return Ok(next);
        }
        cur = next;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub n_qubits: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct TopologyFile {
    n_qubits: usize,
    edges: Vec<[usize; 2]>,
}

impl Topology {
    pub fn new(n_qubits: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop on qubit {a}")));
            }
            if a >= n_qubits || b >= n_qubits {
                return Err(Error::Index(format!("edge ({a},{b}) on {n_qubits} qubits")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Topology {
            n_qubits,
            edges: set,
        })
    }

    pub fn line(n: usize) -> Self {
        let e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Topology::new(n, &e).expect("valid line")
    }

    pub fn all_to_all(n: usize) -> Self {
        let e: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Topology::new(n, &e).expect("valid clique")
    }

    /// Presets: `line-N`, `all-to-all-N`, `star-5` (hub 2), `t-5`.
    pub fn preset(name: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown topology preset {name:?}"));
        if let Some(n) = name.strip_prefix("line-") {
            return Ok(Topology::line(n.parse().map_err(|_| bad())?));
        }
        if let Some(n) = name.strip_prefix("all-to-all-") {
            return Ok(Topology::all_to_all(n.parse().map_err(|_| bad())?));
        }
        match name {
            "star-5" => Topology::new(5, &[(0, 2), (1, 2), (2, 3), (2, 4)]),
            "t-5" => Topology::new(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]),
            _ => Err(bad()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TopologyFile = serde_json::from_str(text)?;
        let e: Vec<_> = f.edges.iter().map(|e| (e[0], e[1])).collect();
        Topology::new(f.n_qubits, &e)
    }

    pub fn to_json(&self) -> String {
        let f = TopologyFile {
            n_qubits: self.n_qubits,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
        };
        serde_json::to_string_pretty(&f).expect("serializable")
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Triples `(c, q1, q2)` where all three pairs are coupled.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let n = self.n_qubits;
        let mut out = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    if self.has_edge(a, b) && self.has_edge(b, c) && self.has_edge(a, c) {
                        out.push([a, b, c]);
                    }
                }
            }
        }
        out
    }

    /// The first `n` qubits with the edges among them.
    pub fn restrict(&self, n: usize) -> Topology {
        let e: Vec<_> = self.edges().filter(|&(a, b)| a < n && b < n).collect();
        Topology::new(n, &e).expect("subset of a valid topology")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub gate_index: usize,
    pub qubits: (usize, usize),
}

/// Entangling gates that use an uncoupled pair.
pub fn validate_topology(c: &Circuit, t: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, g) in c.gates.iter().enumerate() {
        let pairs = match *g {
            Gate::Cnot { control, target } => vec![(control, target)],
            Gate::S { q1, q2, .. } => vec![(q1, q2)],
            Gate::F { c, q1, q2, .. } => vec![(c, q1), (c, q2), (q1, q2)],
            _ => vec![],
        };
        for (a, b) in pairs {
            if !t.has_edge(a, b) {
                out.push(Violation {
                    gate_index: i,
                    qubits: (a, b),
                });
            }
        }
    }
    out
}

/// 17 significant digits in positional notation.
fn format_angle(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (16 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn export_qasm(c: &Circuit) -> Result<String> {
    let mut out = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    writeln!(out, "qreg q[{}];", c.n_qubits).expect("string write");
    for g in &c.gates {
        let line = match *g {
            Gate::Ry { q, theta } => format!("ry({}) q[{q}];", format_angle(theta)),
            Gate::Rz { q, theta } => format!("rz({}) q[{q}];", format_angle(theta)),
            Gate::X { q } => format!("x q[{q}];"),
            Gate::Cnot { control, target } => format!("cx q[{control}],q[{target}];"),
            _ => {
                return Err(Error::Precondition(
                    "expand motifs before exporting OpenQASM".into(),
                ))
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Parses the subset written by [`export_qasm`] (plus blank lines, `//`
/// comments and `creg`/`measure`/`barrier` statements, which are skipped).
pub fn parse_qasm(text: &str) -> Result<Circuit> {
    let mut n_qubits = None;
    let mut gates = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let start = offset;
        offset += raw.len();
        let line = raw.split("//").next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            offset: start,
            msg: format!("{msg}: {line:?}"),
        };
        let stmt = line.strip_suffix(';').ok_or_else(|| err("missing ';'"))?.trim();
        let (head, args) = stmt.split_once(|c: char| c.is_whitespace()).unwrap_or((stmt, ""));
        let qubit = |s: &str| -> Result<usize> {
            s.trim()
                .strip_prefix("q[")
                .and_then(|r| r.strip_suffix(']'))
                .and_then(|i| i.parse().ok())
                .ok_or_else(|| err("bad qubit reference"))
        };
        if head.starts_with("OPENQASM") || head == "include" || head == "creg" || head == "barrier" || head == "measure" {
            continue;
        }
        if head == "qreg" {
            n_qubits = Some(qubit(args)?);
            continue;
        }
        let gate = if let Some(rest) = head.strip_prefix("ry(").or_else(|| head.strip_prefix("rz(")) {
            let theta: f64 = rest
                .strip_suffix(')')
                .and_then(|a| a.parse().ok())
                .ok_or_else(|| err("bad angle"))?;
            let q = qubit(args)?;
            if head.starts_with("ry") {
                Gate::Ry { q, theta }
            } else {
                Gate::Rz { q, theta }
            }
        } else {
            match head {
                "x" => Gate::X { q: qubit(args)? },
                "cx" => {
                    let (a, b) = args.split_once(',').ok_or_else(|| err("cx needs two qubits"))?;
                    Gate::Cnot {
                        control: qubit(a)?,
                        target: qubit(b)?,
                    }
                }
                _ => return Err(err("unsupported statement")),
            }
        };
        gates.push(gate);
    }
    let n = n_qubits.ok_or(Error::Parse {
        offset: 0,
        msg: "missing qreg declaration".into(),
    })?;
    Circuit::from_gates(n, gates)
}
