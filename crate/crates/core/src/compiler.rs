//! Greedy beam search over entangling-gate placements with BFGS-optimized
//! rotation angles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circuit::{self, expand_motifs, simplify, CostGuard, Circuit, Gate, Topology};
use crate::error::{Error, Result};
use crate::mps::Isometry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompileConfig {
    /// Acceptance threshold on the support-restricted cost.
    pub eps: f64,
    pub support_delta: f64,
    /// Beam width per search level; the last entry repeats.
    pub beam_schedule: Vec<usize>,
    pub s_penalty: f64,
    pub f_penalty: f64,
    pub restarts: usize,
    /// Search depth limit in entangling elements (CNOT, S or F).
    pub max_entanglers: usize,
    pub seed: u64,
    /// Allow zero-parameter X gates as search elements.
    pub allow_x: bool,
    pub use_s: bool,
    pub use_f: bool,
    /// Rotations below this magnitude are candidates for removal.
    pub simplify_angle_tol: f64,
    pub bfgs_max_iter: usize,
}

impl Default for CompileConfig {
    fn default() -> Self {
        CompileConfig {
            eps: 5e-4,
            support_delta: 1e-10,
            beam_schedule: vec![4, 2],
            s_penalty: 0.2,
            f_penalty: 0.6,
            restarts: 8,
            max_entanglers: 24,
            seed: 0,
            allow_x: false,
            use_s: true,
            use_f: true,
            simplify_angle_tol: 1e-2,
            bfgs_max_iter: 400,
        }
    }
}

impl CompileConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps {} must be positive", self.eps)));
        }
        if self.beam_schedule.is_empty() || self.beam_schedule.contains(&0) {
            return Err(Error::InvalidParameter("beam widths must be ≥ 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("need at least one optimization run".into()));
        }
        Ok(())
    }

    fn beam(&self, level: usize) -> usize {
        *self
            .beam_schedule
            .get(level)
            .or(self.beam_schedule.last())
            .expect("validated nonempty")
    }
}

/// Structural element of a candidate circuit; angles live in the parameter
/// vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Elem {
    Ry(usize),
    X(usize),
    Cnot(usize, usize),
    S(usize, usize),
    F(usize, usize, usize),
}

impl Elem {
    pub fn n_params(&self) -> usize {
        match self {
            Elem::Ry(_) => 1,
            Elem::S(..) | Elem::F(..) => 2,
            _ => 0,
        }
    }

    fn qubits(&self) -> Vec<usize> {
        match *self {
            Elem::Ry(q) | Elem::X(q) => vec![q],
            Elem::Cnot(a, b) | Elem::S(a, b) => vec![a, b],
            Elem::F(c, a, b) => vec![c, a, b],
        }
    }

    fn gate(&self, p: &[f64]) -> Gate {
        match *self {
            Elem::Ry(q) => Gate::Ry { q, theta: p[0] },
            Elem::X(q) => Gate::X { q },
            Elem::Cnot(control, target) => Gate::Cnot { control, target },
            Elem::S(q1, q2) => Gate::S {
                q1,
                q2,
                theta: p[0],
                theta_p: p[1],
            },
            Elem::F(c, q1, q2) => Gate::F {
                c,
                q1,
                q2,
                theta: p[0],
                theta_p: p[1],
            },
        }
    }

    fn cnots(&self) -> usize {
        self.gate(&[0.0, 0.0]).cnot_cost()
    }

    fn code(&self) -> [u64; 4] {
        match *self {
            Elem::Ry(q) => [0, q as u64, 0, 0],
            Elem::X(q) => [1, q as u64, 0, 0],
            Elem::Cnot(a, b) => [2, a as u64, b as u64, 0],
            Elem::S(a, b) => [3, a as u64, b as u64, 0],
            Elem::F(c, a, b) => [4, c as u64, a as u64, b as u64],
        }
    }
}

/// Gate structure with its angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub structure: Vec<Elem>,
    pub params: Vec<f64>,
    pub cost: f64,
    /// Number of entangling elements.
    pub entanglers: usize,
    /// CNOT count after motif expansion.
    pub cnots: usize,
}

impl SearchNode {
    pub fn circuit(&self, n_qubits: usize) -> Result<Circuit> {
        build_circuit(&self.structure, &self.params, n_qubits)
    }
}

pub fn build_circuit(structure: &[Elem], params: &[f64], n_qubits: usize) -> Result<Circuit> {
    let mut gates = Vec::with_capacity(structure.len());
    let mut k = 0;
    for e in structure {
        let np = e.n_params();
        gates.push(e.gate(&params[k..k + np]));
        k += np;
    }
    Circuit::from_gates(n_qubits, gates)
}

/// Entries `(row, col)` of defined columns with `|L| > delta`, grouped by
/// column.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    pub n_qubits: usize,
    pub columns: Vec<(usize, Vec<(usize, f64)>)>,
}

impl Support {
    pub fn len(&self) -> usize {
        self.columns.iter().map(|c| c.1.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<(usize, usize)> {
        self.columns
            .iter()
            .flat_map(|(c, rows)| rows.iter().map(move |(r, _)| (*r, *c)))
            .collect()
    }
}

pub fn support_set(iso: &Isometry, delta: f64) -> Result<Support> {
    let columns: Vec<_> = iso
        .defined_columns()
        .into_iter()
        .map(|c| {
            let rows: Vec<(usize, f64)> = (0..iso.dim())
                .filter(|&r| iso.matrix[(r, c)].abs() > delta)
                .map(|r| (r, iso.matrix[(r, c)]))
                .collect();
            (c, rows)
        })
        .filter(|(_, rows)| !rows.is_empty())
        .collect();
    if columns.is_empty() {
        return Err(Error::InvalidIsometry(format!(
            "no entry of site {} exceeds {delta:e}",
            iso.site
        )));
    }
    Ok(Support {
        n_qubits: iso.n_qubits,
        columns,
    })
}

/// `Σ_S |U_{ij} − L_{ij}|²` for a dense (possibly complex) matrix.
pub fn cost(u: &circuit::ComplexMatrix, support: &Support) -> f64 {
    support
        .columns
        .iter()
        .flat_map(|(c, rows)| rows.iter().map(move |&(r, v)| (u.get(r, *c) - v).norm_sqr()))
        .sum()
}

fn inverse(g: &Gate) -> Gate {
    match *g {
        Gate::Ry { q, theta } => Gate::Ry { q, theta: -theta },
        Gate::Rz { q, theta } => Gate::Rz { q, theta: -theta },
        Gate::S { q1, q2, theta, theta_p } => Gate::S {
            q1,
            q2,
            theta: -theta,
            theta_p: -theta_p,
        },
        Gate::F { c, q1, q2, theta, theta_p } => Gate::F {
            c,
            q1,
            q2,
            theta: -theta,
            theta_p: -theta_p,
        },
        other => other,
    }
}

/// `⟨λ, ∂G φ⟩` for each angle of gate `g`.
fn gate_derivatives(g: &Gate, lam: &[f64], phi: &[f64]) -> [f64; 2] {
    match *g {
        Gate::Ry { q, theta } => {
            let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            let bit = 1 << q;
            let mut d = 0.0;
            for i in 0..phi.len() {
                if i & bit == 0 {
                    let (p0, p1) = (phi[i], phi[i | bit]);
                    d += lam[i] * 0.5 * (-s * p0 - c * p1) + lam[i | bit] * 0.5 * (c * p0 - s * p1);
                }
            }
            [d, 0.0]
        }
        Gate::S { q1, q2, theta, theta_p } => s_derivatives(q1, q2, None, theta, theta_p, lam, phi),
        Gate::F { c, q1, q2, theta, theta_p } => {
            s_derivatives(q1, q2, Some(c), theta, theta_p, lam, phi)
        }
        _ => [0.0, 0.0],
    }
}

fn s_derivatives(
    q1: usize,
    q2: usize,
    control: Option<usize>,
    theta: f64,
    theta_p: f64,
    lam: &[f64],
    phi: &[f64],
) -> [f64; 2] {
    let (a, b) = ((theta - theta_p) / 2.0, (theta + theta_p) / 2.0);
    let (ca, sa, cb, sb) = (a.cos(), a.sin(), b.cos(), b.sin());
    let (b1, b2) = (1 << q1, 1 << q2);
    let cmask = control.map(|c| 1 << c).unwrap_or(0);
    let (mut da, mut db) = (0.0, 0.0);
    for i in 0..phi.len() {
        if i & (b1 | b2) != 0 || i & cmask != cmask {
            continue;
        }
        let (i0, i1, i2, i3) = (i, i | b2, i | b1, i | b1 | b2);
        da += lam[i0] * (-sa * phi[i0] + ca * phi[i3]) + lam[i3] * (-ca * phi[i0] - sa * phi[i3]);
        db += lam[i1] * (-sb * phi[i1] + cb * phi[i2]) + lam[i2] * (-cb * phi[i1] - sb * phi[i2]);
    }
    // θ = a + b, θ′ = b − a
    [0.5 * (da + db), 0.5 * (db - da)]
}

/// Cost and its gradient by one forward and one adjoint backward pass per
/// support column.
pub fn cost_and_grad(
    structure: &[Elem],
    params: &[f64],
    support: &Support,
) -> Result<(f64, Vec<f64>)> {
    let c = build_circuit(structure, params, support.n_qubits)?;
    let dim = 1usize << support.n_qubits;
    let mut total = 0.0;
    let mut grad = vec![0.0; params.len()];
    // parameter offset of each gate
    let offsets: Vec<usize> = structure
        .iter()
        .scan(0, |k, e| {
            let o = *k;
            *k += e.n_params();
            Some(o)
        })
        .collect();
    for (col, rows) in &support.columns {
        let mut psi = vec![0.0; dim];
        psi[*col] = 1.0;
        for g in &c.gates {
            circuit::apply_gate_real(&mut psi, g)?;
        }
        let mut lam = vec![0.0; dim];
        for &(r, v) in rows {
            let d = psi[r] - v;
            total += d * d;
            lam[r] = 2.0 * d;
        }
        for (k, g) in c.gates.iter().enumerate().rev() {
            let inv = inverse(g);
            circuit::apply_gate_real(&mut psi, &inv)?;
            let np = structure[k].n_params();
            if np > 0 {
                let d = gate_derivatives(g, &lam, &psi);
                for (t, dv) in d.iter().enumerate().take(np) {
                    grad[offsets[k] + t] += dv;
                }
            }
            circuit::apply_gate_real(&mut lam, &inv)?;
        }
    }
    Ok((total, grad))
}

/// Quasi-Newton minimization with Armijo backtracking. Stops when the value
/// drops below `f_target`, the gradient vanishes or progress stalls.
pub fn bfgs<F>(f: F, x0: &[f64], max_iter: usize, f_target: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    bfgs_with_abort(f, x0, max_iter, f_target, f64::INFINITY)
}

/// [`bfgs`] that also gives up once a run is still above `abort` after
/// `ABORT_AFTER` iterations.
pub fn bfgs_with_abort<F>(f: F, x0: &[f64], max_iter: usize, f_target: f64, abort: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    if n == 0 || !fx.is_finite() {
        return (x, fx);
    }
    let mut h = vec![0.0; n * n];
    let reset = |h: &mut Vec<f64>, scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = scale;
        }
    };
    reset(&mut h, 1.0);
    let mut trace = Vec::with_capacity(max_iter);
    for it in 0..max_iter {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if fx < f_target || gnorm < 1e-12 {
            break;
        }
        if it >= ABORT_AFTER && fx > abort {
            break;
        }
        trace.push(fx);
        if it >= STALL_WINDOW && trace[it - STALL_WINDOW] - fx < STALL_REL * fx {
            break;
        }
        let mut p: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            reset(&mut h, 1.0);
            p = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            let (fnew, gnew) = f(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let stalled = (fx - fnew).abs() <= 1e-16 * fx.abs().max(1e-300) && alpha < 1e-10;
        x = xn;
        fx = fnew;
        g = gnew;
        if stalled {
            break;
        }
        if sy > 1e-300 {
            let yy: f64 = y.iter().map(|v| v * v).sum();
            let first = h.iter().enumerate().all(|(k, v)| {
                if k % (n + 1) == 0 {
                    *v == 1.0
                } else {
                    *v == 0.0
                }
            });
            if first {
                reset(&mut h, sy / yy);
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
    }
    (x, fx)
}

const ABORT_AFTER: usize = 40;
const STALL_WINDOW: usize = 30;
const STALL_REL: f64 = 1e-4;

fn structure_seed(structure: &[Elem], seed: u64) -> u64 {
    // FNV-1a over the element codes
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for e in structure {
        for v in e.code() {
            h ^= v;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Best of `cfg.restarts` BFGS runs: the warm start (if any) and Gaussian
/// starts with σ = 0.3.
pub fn optimize_params(
    structure: &[Elem],
    warm: Option<&[f64]>,
    support: &Support,
    cfg: &CompileConfig,
) -> Result<(Vec<f64>, f64)> {
    let np: usize = structure.iter().map(Elem::n_params).sum();
    let f = |x: &[f64]| match cost_and_grad(structure, x, support) {
        Ok(v) => v,
        Err(_) => (f64::INFINITY, vec![0.0; x.len()]),
    };
    if np == 0 {
        let (c, _) = cost_and_grad(structure, &[], support)?;
        return Ok((vec![], c));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(structure_seed(structure, cfg.seed));
    let normal = Normal::new(0.0, 0.3).expect("valid sigma");
    let target = (cfg.eps * 1e-8).max(1e-15);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for run in 0..cfg.restarts {
        let x0: Vec<f64> = match (run, warm) {
            (0, Some(w)) => w.iter().copied().chain(std::iter::repeat(0.0)).take(np).collect(),
            _ => (0..np).map(|_| normal.sample(&mut rng)).collect(),
        };
        // random starts that trail the best run by a wide margin are dropped early
        let abort = best.as_ref().map_or(f64::INFINITY, |b| 4.0 * b.1 + cfg.eps);
        let (x, c) = bfgs_with_abort(f, &x0, cfg.bfgs_max_iter, target, abort);
        if c.is_finite() && best.as_ref().is_none_or(|b| c < b.1) {
            best = Some((x, c));
        }
        if best.as_ref().is_some_and(|b| b.1 < target) {
            break;
        }
    }
    best.ok_or(Error::InvalidIsometry("all optimization runs diverged".into()))
}

/// Child structures of `structure`: one new entangling element plus a fresh
/// `Ry` on each qubit it touches.
pub fn expand_children(structure: &[Elem], topology: &Topology, cfg: &CompileConfig) -> Vec<Vec<Elem>> {
    let mut new: Vec<Elem> = Vec::new();
    for (a, b) in topology.edges() {
        new.push(Elem::Cnot(a, b));
        new.push(Elem::Cnot(b, a));
    }
    if cfg.use_s {
        for (a, b) in topology.edges() {
            new.push(Elem::S(a, b));
            new.push(Elem::S(b, a));
        }
    }
    if cfg.use_f {
        for [x, y, z] in topology.triangles() {
            for (c, q1, q2) in [(x, y, z), (x, z, y), (y, x, z), (y, z, x), (z, x, y), (z, y, x)] {
                new.push(Elem::F(c, q1, q2));
            }
        }
    }
    let mut out: Vec<Vec<Elem>> = new
        .into_iter()
        .map(|e| {
            let mut s = structure.to_vec();
            s.push(e);
            s.extend(e.qubits().into_iter().map(Elem::Ry));
            s
        })
        .collect();
    if cfg.allow_x {
        for q in 0..topology.n_qubits {
            let mut s = structure.to_vec();
            s.push(Elem::X(q));
            out.push(s);
        }
    }
    out
}

fn penalty(e: &Elem, cfg: &CompileConfig) -> f64 {
    match e {
        Elem::S(..) => cfg.s_penalty,
        Elem::F(..) => cfg.f_penalty,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileResult {
    pub site: usize,
    /// Motif-level circuit found by the search.
    pub raw: Circuit,
    /// Expanded and simplified `{Ry, CNOT, X}` circuit.
    pub circuit: Circuit,
    pub cost: f64,
    pub cnots: usize,
    pub depth: usize,
    pub converged: bool,
    /// Lowest node cost at each search level.
    pub level_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileReportEntry {
    pub site: usize,
    pub cost: f64,
    pub cnots: usize,
    pub depth: usize,
    pub converged: bool,
}

impl CompileResult {
    pub fn report(&self) -> CompileReportEntry {
        CompileReportEntry {
            site: self.site,
            cost: self.cost,
            cnots: self.cnots,
            depth: self.depth,
            converged: self.converged,
        }
    }
}

fn optimize_all(
    items: Vec<(Vec<Elem>, Vec<f64>)>,
    support: &Support,
    cfg: &CompileConfig,
) -> Result<Vec<SearchNode>> {
    let run = |(s, warm): (Vec<Elem>, Vec<f64>)| -> Result<SearchNode> {
        let (params, cost) = optimize_params(&s, Some(&warm), support, cfg)?;
        let cnots = s.iter().map(Elem::cnots).sum();
        let entanglers = s.iter().filter(|e| e.cnots() > 0).count();
        Ok(SearchNode {
            structure: s,
            params,
            cost,
            entanglers,
            cnots,
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(run).collect()
    }
}

/// Summary of one finished search level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelInfo {
    pub level: usize,
    pub nodes: usize,
    pub best_cost: f64,
    pub best_cnots: usize,
}

/// Searches for a circuit whose support cost is below `cfg.eps`.
pub fn compile_isometry(iso: &Isometry, topology: &Topology, cfg: &CompileConfig) -> Result<CompileResult> {
    compile_isometry_with_progress(iso, topology, cfg, &mut |_| {})
}

pub fn compile_isometry_with_progress(
    iso: &Isometry,
    topology: &Topology,
    cfg: &CompileConfig,
    progress: &mut dyn FnMut(&LevelInfo),
) -> Result<CompileResult> {
    cfg.validate()?;
    let n = iso.n_qubits;
    if topology.n_qubits < n {
        return Err(Error::InvalidParameter(format!(
            "{}-qubit topology for a {n}-qubit isometry",
            topology.n_qubits
        )));
    }
    let topology = topology.restrict(n);
    let support = support_set(iso, cfg.support_delta)?;
    let root_structure: Vec<Elem> = (0..n).map(Elem::Ry).collect();
    let root = optimize_all(vec![(root_structure, vec![0.0; n])], &support, cfg)?.remove(0);

    let mut best = root.clone();
    let mut level_costs = vec![root.cost];
    let mut accepted = (root.cost < cfg.eps).then(|| root.clone());
    let mut queue = vec![root];
    let mut level = 0;
    while accepted.is_none() && !queue.is_empty() {
        let items: Vec<(Vec<Elem>, Vec<f64>)> = queue
            .iter()
            .flat_map(|node| {
                expand_children(&node.structure, &topology, cfg)
                    .into_iter()
                    .map(|s| (s, node.params.clone()))
            })
            .filter(|(s, _)| s.iter().filter(|e| e.cnots() > 0).count() <= cfg.max_entanglers)
            .collect();
        if items.is_empty() {
            break;
        }
        let children = optimize_all(items, &support, cfg)?;
        level += 1;
        let lb = children
            .iter()
            .min_by(|a, b| a.cost.total_cmp(&b.cost))
            .expect("nonempty level");
        level_costs.push(lb.cost);
        progress(&LevelInfo {
            level,
            nodes: children.len(),
            best_cost: lb.cost,
            best_cnots: lb.cnots,
        });
        for c in &children {
            if c.cost < best.cost {
                best = c.clone();
            }
        }
        // acceptance ignores penalties
        accepted = children
            .iter()
            .filter(|c| c.cost < cfg.eps)
            .min_by(|a, b| a.cnots.cmp(&b.cnots).then(a.cost.total_cmp(&b.cost)))
            .cloned();
        if accepted.is_some() {
            break;
        }
        let mut ranked: Vec<(f64, SearchNode)> = children
            .into_iter()
            .map(|c| {
                let last = c
                    .structure
                    .iter()
                    .rev()
                    .find(|e| !matches!(e, Elem::Ry(_)))
                    .copied();
                (c.cost + last.map_or(0.0, |e| penalty(&e, cfg)), c)
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
        let keep = cfg.beam(level - 1);
        // the unpenalized best always survives, so level costs never rise
        let lowest = (0..ranked.len())
            .min_by(|&a, &b| ranked[a].1.cost.total_cmp(&ranked[b].1.cost))
            .expect("nonempty level");
        if lowest >= keep {
            let node = ranked.remove(lowest);
            ranked.insert(keep - 1, node);
        }
        queue = ranked.into_iter().take(keep).map(|(_, c)| c).collect();
        if level > 2 * cfg.max_entanglers + n {
            break;
        }
    }
    let converged = accepted.is_some();
    let node = accepted.unwrap_or(best);
    finish(iso, node, level, level_costs, converged, cfg)
}

fn finish(
    iso: &Isometry,
    node: SearchNode,
    depth: usize,
    level_costs: Vec<f64>,
    converged: bool,
    cfg: &CompileConfig,
) -> Result<CompileResult> {
    let raw = node.circuit(iso.n_qubits)?;
    let expanded = expand_motifs(&raw)?;
    let guard = converged.then_some(CostGuard {
        target: iso,
        eps: cfg.eps,
    });
    let mut circuit = simplify(&expanded, 0.0, None)?;
    let mut cost = support_cost(&circuit, iso, cfg.support_delta)?;
    if converged {
        // per-removal guard increments can accumulate, so keep the pruned
        // circuit only if it is still accepted
        let pruned = simplify(&expanded, cfg.simplify_angle_tol, guard)?;
        let pruned_cost = support_cost(&pruned, iso, cfg.support_delta)?;
        if pruned_cost < cfg.eps {
            circuit = pruned;
            cost = pruned_cost;
        }
    }
    Ok(CompileResult {
        site: iso.site,
        cnots: circuit::cnot_count(&circuit),
        raw,
        circuit,
        cost,
        depth,
        converged: converged && cost < cfg.eps,
        level_costs,
    })
}

/// Support-restricted cost of a finished circuit.
pub fn support_cost(c: &Circuit, iso: &Isometry, delta: f64) -> Result<f64> {
    let support = support_set(iso, delta)?;
    Ok(cost(&circuit::circuit_matrix(c)?, &support))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub total_cnots: usize,
    pub max_cost: f64,
    pub all_converged: bool,
}

/// Compiles each isometry independently. A failing site is reported as an
/// unconverged entry with infinite cost instead of aborting the batch.
pub fn compile_model(
    isos: &[Isometry],
    topology: &Topology,
    cfg: &CompileConfig,
) -> (Vec<Result<CompileResult>>, ModelSummary) {
    let results: Vec<Result<CompileResult>> = isos
        .iter()
        .map(|iso| compile_isometry(iso, topology, cfg))
        .collect();
    let mut summary = ModelSummary {
        total_cnots: 0,
        max_cost: 0.0,
        all_converged: true,
    };
    for r in &results {
        match r {
            Ok(c) => {
                summary.total_cnots += c.cnots;
                summary.max_cost = summary.max_cost.max(c.cost);
                summary.all_converged &= c.converged;
            }
            Err(_) => {
                summary.max_cost = f64::INFINITY;
                summary.all_converged = false;
            }
        }
    }
    (results, summary)
}
