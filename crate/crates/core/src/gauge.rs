//! Diagonal gauge: ancilla-basis permutations and sign choices that make
//! every preparation isometry as close to diagonal as possible without
//! changing the state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mps::{self, CanonicalForm, Isometry, Mps, Tensor3};
use crate::numerics::{polar_left, polar_right, RealMatrix};

/// Two `|U|` entries closer than this are treated as tied.
pub const DEGENERACY_TOL: f64 = 1e-6;
/// Entries at or below this magnitude are ignored when choosing signs.
pub const SIGN_THRESHOLD: f64 = 1e-3;
/// Cap on the number of enumerated candidate permutations.
pub const MAX_CANDIDATES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Permute the right bond (`M = U·P`).
    Right,
    /// Permute the left bond (`M = P·U`).
    Left,
}

/// Which bond of a site was touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignFlip {
    pub site: usize,
    pub side: Side,
    pub index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaugeReport {
    pub center: usize,
    /// `permutations[i]` maps old to new indices on the bond permuted at
    /// site `i`; `None` at the center.
    pub permutations: Vec<Option<Vec<usize>>>,
    pub ambiguity_counts: Vec<usize>,
    pub sign_flips: Vec<SignFlip>,
}

/// `M_{αβ} = Σ_j (A^j_{αβ})²`.
pub fn overlap_matrix(a: &Tensor3) -> RealMatrix {
    let mut m = RealMatrix::zeros(a.left_dim(), a.right_dim());
    for al in 0..a.left_dim() {
        for b in 0..a.right_dim() {
            m[(al, b)] = (0..2).map(|j| a.get(al, j, b).powi(2)).sum();
        }
    }
    m
}

/// Outcome of the polar step: the candidate bijections consistent with the
/// argmax rule (one when unambiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarChoice {
    pub candidates: Vec<Vec<usize>>,
    pub ambiguous: bool,
}

/// Square score matrix `score[target][source]`: `|U|` for the permuted
/// index, padded with zeros to a square.
fn score_matrix(m: &RealMatrix, side: Side) -> Result<Vec<Vec<f64>>> {
    match side {
        Side::Right => {
            let (u, _) = polar_left(m)?;
            let n = m.cols();
            Ok((0..n)
                .map(|a| {
                    (0..n)
                        .map(|b| if a < u.rows() { u[(a, b)].abs() } else { 0.0 })
                        .collect()
                })
                .collect())
        }
        Side::Left => {
            let (_, u) = polar_right(m)?;
            let n = m.rows();
            Ok((0..n)
                .map(|b| {
                    (0..n)
                        .map(|a| if b < u.cols() { u[(a, b)].abs() } else { 0.0 })
                        .collect()
                })
                .collect())
        }
    }
}

fn enumerate_bijections(allowed: &[Vec<usize>], cap: usize) -> Vec<Vec<usize>> {
    fn go(
        i: usize,
        allowed: &[Vec<usize>],
        used: &mut [bool],
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        cap: usize,
    ) -> bool {
        if i == allowed.len() {
            out.push(cur.clone());
            return out.len() <= cap;
        }
        for &t in &allowed[i] {
            if !used[t] {
                used[t] = true;
                cur.push(t);
                let ok = go(i + 1, allowed, used, cur, out, cap);
                cur.pop();
                used[t] = false;
                if !ok {
                    return false;
                }
            }
        }
        true
    }
    let mut out = Vec::new();
    let mut used = vec![false; allowed.len()];
    go(0, allowed, &mut used, &mut Vec::new(), &mut out, cap);
    out
}

/// Greedy assignment by descending score.
fn greedy_bijection(score: &[Vec<f64>]) -> Vec<usize> {
    let n = score.len();
    let mut entries: Vec<(usize, usize)> = (0..n).flat_map(|t| (0..n).map(move |s| (t, s))).collect();
    entries.sort_by(|x, y| score[y.0][y.1].total_cmp(&score[x.0][x.1]).then(x.cmp(y)));
    let mut perm = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (t, s) in entries {
        if perm[s] == usize::MAX && !taken[t] {
            perm[s] = t;
            taken[t] = true;
        }
    }
    perm
}

/// Permutation of the right (or left) bond sending each index to the
/// position of its largest polar-factor entry.
pub fn polar_permutation(m: &RealMatrix, side: Side) -> Result<PolarChoice> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("overlap matrix is not finite".into()));
    }
    let score = score_matrix(m, side)?;
    let n = score.len();
    // allowed[source] = targets within tolerance of the column maximum
    let mut allowed: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            let best = (0..n).map(|t| score[t][s]).fold(0.0, f64::max);
            (0..n)
                .filter(|&t| score[t][s] >= best - DEGENERACY_TOL)
                .collect()
        })
        .collect();
    let mut ambiguous = allowed.iter().any(|a| a.len() > 1);
    let mut candidates = enumerate_bijections(&allowed, MAX_CANDIDATES);
    if candidates.is_empty() {
        // colliding argmaxes: free the sources that compete for a target
        ambiguous = true;
        let mut hits = vec![0usize; n];
        for a in &allowed {
            for &t in a {
                hits[t] += 1;
            }
        }
        for a in allowed.iter_mut() {
            if a.iter().any(|&t| hits[t] > 1) {
                *a = (0..n).collect();
            }
        }
        candidates = enumerate_bijections(&allowed, MAX_CANDIDATES);
    }
    if candidates.is_empty() || candidates.len() > MAX_CANDIDATES {
        candidates = vec![greedy_bijection(&score)];
    }
    Ok(PolarChoice {
        candidates,
        ambiguous,
    })
}

/// Squared number of differing bits between register states `r` and `c`.
pub fn hamming_sq_distance(r: usize, c: usize) -> f64 {
    let d = (r ^ c).count_ones() as f64;
    d * d
}

/// `Σ |L_{rc}|·D(r,c)` over the defined columns.
pub fn diagonality_cost(iso: &Isometry) -> f64 {
    let mut cost = 0.0;
    for c in iso.defined_columns() {
        for r in 0..iso.dim() {
            let v = iso.matrix[(r, c)];
            if v != 0.0 {
                cost += v.abs() * hamming_sq_distance(r, c);
            }
        }
    }
    cost
}

fn permute_right(t: &Tensor3, perm: &[usize]) -> Tensor3 {
    let mut out = Tensor3::zeros(t.left_dim(), t.right_dim());
    for a in 0..t.left_dim() {
        for j in 0..2 {
            for (b, &nb) in perm.iter().enumerate() {
                out.set(a, j, nb, t.get(a, j, b));
            }
        }
    }
    out
}

fn permute_left(t: &Tensor3, perm: &[usize]) -> Tensor3 {
    let mut out = Tensor3::zeros(t.left_dim(), t.right_dim());
    for (a, &na) in perm.iter().enumerate() {
        for j in 0..2 {
            for b in 0..t.right_dim() {
                out.set(na, j, b, t.get(a, j, b));
            }
        }
    }
    out
}

/// Candidate with the lowest diagonality cost for the tensor after it is
/// permuted on `side`; ties go to the lexicographically smallest.
fn best_candidate(
    t: &Tensor3,
    side: Side,
    site: usize,
    n_qubits: usize,
    candidates: &[Vec<usize>],
) -> Result<Vec<usize>> {
    let isos = candidates
        .iter()
        .map(|p| {
            let pt = match side {
                Side::Right => permute_right(t, p),
                Side::Left => permute_left(t, p),
            };
            Isometry::from_tensor(site, n_qubits, &pt)
        })
        .collect::<Result<Vec<_>>>()?;
    resolve_ambiguity(&isos, candidates)
}

/// Picks the candidate whose permuted isometry `isos[i]` is most diagonal.
pub fn resolve_ambiguity(isos: &[Isometry], candidates: &[Vec<usize>]) -> Result<Vec<usize>> {
    if candidates.is_empty() || isos.len() != candidates.len() {
        return Err(Error::InvalidParameter("no candidate permutations".into()));
    }
    let mut best: Option<(f64, &Vec<usize>)> = None;
    for (iso, cand) in isos.iter().zip(candidates) {
        let cost = diagonality_cost(iso);
        best = match best {
            Some((bc, bp)) if bc < cost || (bc == cost && bp <= cand) => Some((bc, bp)),
            _ => Some((cost, cand)),
        };
    }
    Ok(best.expect("nonempty").1.clone())
}

fn flip_right(t: &mut Tensor3, b: usize) {
    for a in 0..t.left_dim() {
        for j in 0..2 {
            t.set(a, j, b, -t.get(a, j, b));
        }
    }
}

fn flip_left(t: &mut Tensor3, a: usize) {
    for j in 0..2 {
        for b in 0..t.right_dim() {
            t.set(a, j, b, -t.get(a, j, b));
        }
    }
}

/// Sign of the significant entry nearest the diagonal among `(row, col, v)`.
fn nearest_diagonal_sign(entries: impl Iterator<Item = (usize, usize, f64)>) -> f64 {
    entries
        .filter(|e| e.2.abs() > SIGN_THRESHOLD)
        .min_by_key(|e| (e.0.abs_diff(e.1), e.0, e.1))
        .map(|e| e.2.signum())
        .unwrap_or(1.0)
}

/// Makes the near-diagonal entry of each column (`Side::Right`) or row
/// pair (`Side::Left`) of site `i`'s isometry positive, pushing each flip
/// into the neighbour.
fn fix_site_signs(tensors: &mut [Tensor3], i: usize, side: Side, report: &mut GaugeReport) {
    let t = &tensors[i];
    match side {
        Side::Right => {
            for b in 0..t.right_dim() {
                let t = &tensors[i];
                let sign = nearest_diagonal_sign((0..t.left_dim()).flat_map(|a| {
                    (0..2).map(move |j| (2 * a + j, 2 * b, t.get(a, j, b)))
                }));
                if sign < 0.0 {
                    flip_right(&mut tensors[i], b);
                    flip_left(&mut tensors[i + 1], b);
                    report.sign_flips.push(SignFlip {
                        site: i,
                        side,
                        index: b,
                    });
                }
            }
        }
        Side::Left => {
            for a in 0..t.left_dim() {
                let t = &tensors[i];
                let sign = nearest_diagonal_sign((0..2).flat_map(|j| {
                    (0..t.right_dim()).map(move |b| (2 * a + j, 2 * b, t.get(a, j, b)))
                }));
                if sign < 0.0 {
                    flip_left(&mut tensors[i], a);
                    flip_right(&mut tensors[i - 1], a);
                    report.sign_flips.push(SignFlip {
                        site: i,
                        side,
                        index: a,
                    });
                }
            }
        }
    }
}

fn significant(v: f64) -> bool {
    v.abs() > SIGN_THRESHOLD
}

/// Bond signs `(s_left, s_right)` making `s_a·t_b·A[a,j,b] ≥ 0` on every
/// significant entry where a consistent assignment exists. Right-bond
/// flips are preferred so that left bonds stay fixed when possible.
fn center_signs(t: &Tensor3) -> (Vec<f64>, Vec<f64>) {
    let (l, r) = (t.left_dim(), t.right_dim());
    // bipartite graph: nodes 0..l are left indices, l..l+r right indices
    let mut sign: Vec<Option<f64>> = vec![None; l + r];
    let edge_sign = |a: usize, b: usize| -> Option<f64> {
        let vals: Vec<f64> = (0..2).map(|j| t.get(a, j, b)).filter(|v| significant(*v)).collect();
        if vals.is_empty() {
            None
        } else if vals.iter().all(|v| *v > 0.0) {
            Some(1.0)
        } else if vals.iter().all(|v| *v < 0.0) {
            Some(-1.0)
        } else {
            // mixed within one entry pair; cannot be fixed by bond signs
            None
        }
    };
    for root in 0..l + r {
        if sign[root].is_some() {
            continue;
        }
        sign[root] = Some(1.0);
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let su = sign[u].expect("visited");
            let neighbours: Vec<(usize, f64)> = if u < l {
                (0..r).filter_map(|b| edge_sign(u, b).map(|e| (l + b, e))).collect()
            } else {
                (0..l).filter_map(|a| edge_sign(a, u - l).map(|e| (a, e))).collect()
            };
            for (v, e) in neighbours {
                if sign[v].is_none() {
                    sign[v] = Some(su * e);
                    queue.push_back(v);
                }
            }
        }
    }
    let s: Vec<f64> = sign.into_iter().map(|x| x.unwrap_or(1.0)).collect();
    (s[..l].to_vec(), s[l..].to_vec())
}

fn all_nonnegative(t: &Tensor3) -> bool {
    t.data().iter().all(|v| !significant(*v) || *v > 0.0)
}

/// Flips column `b` of site `i` and, while the site stays sign-fixable by
/// row flips alone, keeps pushing the flip further left.
fn push_flip_left(tensors: &mut [Tensor3], i: usize, b: usize) {
    let clean = all_nonnegative(&tensors[i]);
    flip_right(&mut tensors[i], b);
    if !clean {
        return;
    }
    let t = &tensors[i];
    let rows: Vec<usize> = (0..t.left_dim())
        .filter(|&a| (0..2).any(|j| significant(t.get(a, j, b))))
        .collect();
    let isolated = rows.iter().all(|&a| {
        (0..t.right_dim()).all(|c| c == b || (0..2).all(|j| !significant(t.get(a, j, c))))
    });
    if isolated {
        for &a in &rows {
            flip_left(&mut tensors[i], a);
            if i > 0 {
                push_flip_left(tensors, i - 1, a);
            }
        }
    }
}

/// Mirror of [`push_flip_left`] towards the right end.
fn push_flip_right(tensors: &mut [Tensor3], i: usize, a: usize) {
    let clean = all_nonnegative(&tensors[i]);
    flip_left(&mut tensors[i], a);
    if !clean {
        return;
    }
    let t = &tensors[i];
    let cols: Vec<usize> = (0..t.right_dim())
        .filter(|&b| (0..2).any(|j| significant(t.get(a, j, b))))
        .collect();
    let isolated = cols.iter().all(|&b| {
        (0..t.left_dim()).all(|r| r == a || (0..2).all(|j| !significant(t.get(r, j, b))))
    });
    if isolated {
        for &b in &cols {
            flip_right(&mut tensors[i], b);
            if i + 1 < tensors.len() {
                push_flip_right(tensors, i + 1, b);
            }
        }
    }
}

/// Sign fixing on the outer sites followed by making the center tensor
/// nonnegative where possible.
pub fn fix_signs(mps: &Mps, k: usize) -> Result<(Mps, Vec<SignFlip>)> {
    let n = mps.len();
    if k >= n {
        return Err(Error::Index(format!("center {k} outside 0..{n}")));
    }
    let mut tensors = mps.tensors().to_vec();
    let mut report = GaugeReport::default();
    for i in 0..k {
        fix_site_signs(&mut tensors, i, Side::Right, &mut report);
    }
    for i in (k + 1..n).rev() {
        fix_site_signs(&mut tensors, i, Side::Left, &mut report);
    }
    fix_center(&mut tensors, k, &mut report);
    let out = Mps::new(tensors)?;
    Ok((relabel(out, mps.canonical_form())?, report.sign_flips))
}

fn fix_center(tensors: &mut [Tensor3], k: usize, report: &mut GaugeReport) {
    let (sl, sr) = center_signs(&tensors[k]);
    for (b, s) in sr.iter().enumerate() {
        if *s < 0.0 {
            flip_right(&mut tensors[k], b);
            if k + 1 < tensors.len() {
                push_flip_right(tensors, k + 1, b);
            }
            report.sign_flips.push(SignFlip {
                site: k,
                side: Side::Right,
                index: b,
            });
        }
    }
    for (a, s) in sl.iter().enumerate() {
        if *s < 0.0 {
            flip_left(&mut tensors[k], a);
            if k > 0 {
                push_flip_left(tensors, k - 1, a);
            }
            report.sign_flips.push(SignFlip {
                site: k,
                side: Side::Left,
                index: a,
            });
        }
    }
}

fn relabel(m: Mps, form: CanonicalForm) -> Result<Mps> {
    // bond permutations and sign flips are orthogonal, so the canonical
    // form survives; re-running a sweep would undo the gauge
    Mps::with_form(m.into_tensors(), form, None)
}

/// Diagonal gauge with diagonality center `k`.
pub fn to_diagonal_gauge(mps: &Mps, k: usize) -> Result<(Mps, GaugeReport)> {
    if mps.canonical_form() != CanonicalForm::Left {
        return Err(Error::Precondition("diagonal gauge needs a left-canonical MPS".into()));
    }
    let n = mps.len();
    if k >= n {
        return Err(Error::Index(format!("center {k} outside 0..{n}")));
    }
    let n_qubits = mps::register_width(mps.max_bond());
    let mut tensors = mps.tensors().to_vec();
    let mut report = GaugeReport {
        center: k,
        permutations: vec![None; n],
        ambiguity_counts: vec![0; n],
        sign_flips: Vec::new(),
    };
    for i in 0..k {
        let choice = polar_permutation(&overlap_matrix(&tensors[i]), Side::Right)?;
        let perm = best_candidate(&tensors[i], Side::Right, i, n_qubits, &choice.candidates)?;
        tensors[i] = permute_right(&tensors[i], &perm);
        tensors[i + 1] = permute_left(&tensors[i + 1], &perm);
        report.ambiguity_counts[i] = if choice.ambiguous { choice.candidates.len() } else { 0 };
        report.permutations[i] = Some(perm);
        fix_site_signs(&mut tensors, i, Side::Right, &mut report);
    }
    for i in (k + 1..n).rev() {
        let choice = polar_permutation(&overlap_matrix(&tensors[i]), Side::Left)?;
        let perm = best_candidate(&tensors[i], Side::Left, i, n_qubits, &choice.candidates)?;
        tensors[i] = permute_left(&tensors[i], &perm);
        tensors[i - 1] = permute_right(&tensors[i - 1], &perm);
        report.ambiguity_counts[i] = if choice.ambiguous { choice.candidates.len() } else { 0 };
        report.permutations[i] = Some(perm);
        fix_site_signs(&mut tensors, i, Side::Left, &mut report);
    }
    fix_center(&mut tensors, k, &mut report);
    let out = relabel(Mps::new(tensors)?, CanonicalForm::Left)?;
    Ok((out, report))
}

/// Default diagonality center: the site with the widest bonds, leftmost
/// on ties.
pub fn default_center(mps: &Mps) -> usize {
    (0..mps.len())
        .max_by_key(|&i| {
            let t = mps.tensor(i);
            (t.left_dim() * t.right_dim(), std::cmp::Reverse(i))
        })
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_cases() {
        let mut t = Tensor3::zeros(2, 2);
        t.set(0, 0, 0, 1.0);
        t.set(1, 0, 1, 1.0);
        assert_eq!(overlap_matrix(&t), RealMatrix::identity(2));
        let m = overlap_matrix(&mps::random_mps(4, 3, 1).unwrap().tensor(1).clone());
        assert!(m.as_slice().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn polar_cases() {
        let d = RealMatrix::diag(&[2.0, 0.5, 1.0]);
        let c = polar_permutation(&d, Side::Right).unwrap();
        assert_eq!(c.candidates, vec![vec![0, 1, 2]]);
        assert!(!c.ambiguous);
        let anti = RealMatrix::from_rows(&[vec![0.0, 0.0, 1.0], vec![0.0, 2.0, 0.0], vec![3.0, 0.0, 0.0]])
            .unwrap();
        for side in [Side::Right, Side::Left] {
            let c = polar_permutation(&anti, side).unwrap();
            assert_eq!(c.candidates, vec![vec![2, 1, 0]]);
        }
        // 45° rotation block in the polar factor
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let rot = RealMatrix::from_rows(&[vec![s, -s], vec![s, s]]).unwrap();
        let c = polar_permutation(&rot, Side::Right).unwrap();
        assert!(c.ambiguous);
        assert_eq!(c.candidates, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn hamming() {
        assert_eq!(hamming_sq_distance(0, 0), 0.0);
        assert_eq!(hamming_sq_distance(0, 3), 4.0);
        assert_eq!(hamming_sq_distance(0, 7), 9.0);
    }

    #[test]
    fn ambiguity_resolution() {
        let iso = Isometry::new(0, 2, 2, 2, RealMatrix::identity(4)).unwrap();
        let single = vec![vec![1, 0]];
        assert_eq!(resolve_ambiguity(&[iso.clone()], &single).unwrap(), vec![1, 0]);
        let mut t = Tensor3::zeros(2, 2);
        t.set(0, 0, 0, 1.0);
        t.set(1, 0, 1, 1.0);
        let cands = vec![vec![0, 1], vec![1, 0]];
        assert_eq!(best_candidate(&t, Side::Right, 0, 2, &cands).unwrap(), vec![0, 1]);
        assert!(resolve_ambiguity(&[], &[]).is_err());
    }
}
