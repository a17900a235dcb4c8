//! Dense real linear algebra used by the tensor-network code.
//!
//! [`RealMatrix`] is a plain row-major matrix. Decompositions are computed by
//! `nalgebra` and post-processed into a deterministic form: singular values
//! sorted descending, QR with a nonnegative `R` diagonal.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(RealMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &RealMatrix) -> Result<RealMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn sub(&self, other: &RealMatrix) -> Result<RealMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape("dimension mismatch in subtraction".into()));
        }
        Ok(RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest absolute entry of `selfᵀ·self − I`.
    pub fn orthonormal_columns_residual(&self) -> f64 {
        let g = self.transpose().matmul(self).expect("square gram");
        let mut worst = 0.0f64;
        for i in 0..g.rows {
            for j in 0..g.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out[(r, c)] = m[(r, c)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RealMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = self.row(r).iter().map(|x| format!("{x:9.5}")).collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

/// Thin singular value decomposition `M = U·diag(S)·Vt`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: RealMatrix,
    pub s: Vec<f64>,
    pub vt: RealMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> RealMatrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (c, s) in self.s.iter().enumerate() {
                us[(r, c)] *= s;
            }
        }
        us.matmul(&self.vt).expect("consistent svd shapes")
    }
}

fn check_finite(m: &RealMatrix) -> Result<()> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    Ok(())
}

pub fn svd(m: &RealMatrix) -> Result<Svd> {
    check_finite(m)?;
    // nalgebra's 2×2 kernel loses ~1e-6 on nearly rank-one input
    if m.cols() <= 2 && m.rows() >= m.cols() {
        return Ok(svd_narrow(m));
    }
    if m.rows() <= 2 {
        let t = svd_narrow(&m.transpose());
        return Ok(Svd {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        });
    }
    let dec = m.to_nalgebra().svd(true, true);
    let u = dec.u.expect("u requested");
    let vt = dec.v_t.expect("v_t requested");
    let k = dec.singular_values.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        dec.singular_values[b]
            .partial_cmp(&dec.singular_values[a])
            .expect("finite singular values")
            .then(a.cmp(&b))
    });

    let mut out_u = RealMatrix::zeros(m.rows(), k);
    let mut out_vt = RealMatrix::zeros(k, m.cols());
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        s.push(dec.singular_values[src].max(0.0));
        for r in 0..m.rows() {
            out_u[(r, dst)] = u[(r, src)];
        }
        for c in 0..m.cols() {
            out_vt[(dst, c)] = vt[(src, c)];
        }
    }
    Ok(Svd {
        u: out_u,
        s,
        vt: out_vt,
    })
}

/// One-sided Jacobi SVD for `rows ≥ cols`, `cols ≤ 2`.
fn svd_narrow(m: &RealMatrix) -> Svd {
    let (rows, k) = (m.rows(), m.cols());
    let mut a = m.clone();
    let mut v = RealMatrix::identity(k);
    if k == 2 {
        for _ in 0..4 {
            let (mut al, mut be, mut ga) = (0.0, 0.0, 0.0);
            for r in 0..rows {
                al += a[(r, 0)] * a[(r, 0)];
                be += a[(r, 1)] * a[(r, 1)];
                ga += a[(r, 0)] * a[(r, 1)];
            }
            if ga.abs() <= f64::EPSILON * (al * be).sqrt() || ga == 0.0 {
                break;
            }
            let zeta = (be - al) / (2.0 * ga);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            for r in 0..rows {
                let (x, y) = (a[(r, 0)], a[(r, 1)]);
                a[(r, 0)] = c * x - s * y;
                a[(r, 1)] = s * x + c * y;
            }
            for r in 0..2 {
                let (x, y) = (v[(r, 0)], v[(r, 1)]);
                v[(r, 0)] = c * x - s * y;
                v[(r, 1)] = s * x + c * y;
            }
        }
    }
    let norms: Vec<f64> = (0..k)
        .map(|c| (0..rows).map(|r| a[(r, c)] * a[(r, c)]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    let mut u = RealMatrix::zeros(rows, k);
    let mut vt = RealMatrix::zeros(k, k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        s.push(norms[src]);
        for c in 0..k {
            vt[(dst, c)] = v[(c, src)];
        }
        if norms[src] > 0.0 {
            for r in 0..rows {
                u[(r, dst)] = a[(r, src)] / norms[src];
            }
        } else {
            complete_column(&mut u, dst);
        }
    }
    Svd { u, s, vt }
}

/// Fills column `c` with a unit vector orthogonal to columns `0..c`.
fn complete_column(u: &mut RealMatrix, c: usize) {
    let rows = u.rows();
    let mut best = (0.0, vec![0.0; rows]);
    for e in 0..rows {
        let mut x = vec![0.0; rows];
        x[e] = 1.0;
        for p in 0..c {
            let d: f64 = (0..rows).map(|r| u[(r, p)] * x[r]).sum();
            for r in 0..rows {
                x[r] -= d * u[(r, p)];
            }
        }
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > best.0 {
            best = (n, x);
        }
    }
    for r in 0..rows {
        u[(r, c)] = best.1[r] / best.0;
    }
}

/// Thin QR decomposition with nonnegative `R` diagonal. Requires `rows ≥ cols`.
pub fn qr(m: &RealMatrix) -> Result<(RealMatrix, RealMatrix)> {
    check_finite(m)?;
    if m.rows() < m.cols() {
        return Err(Error::Shape(format!(
            "qr needs rows >= cols, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let dec = m.to_nalgebra().qr();
    let mut q = RealMatrix::from_nalgebra(&dec.q());
    let mut r = RealMatrix::from_nalgebra(&dec.r());
    for k in 0..r.rows() {
        if r[(k, k)] < 0.0 {
            for c in 0..r.cols() {
                r[(k, c)] = -r[(k, c)];
            }
            for row in 0..q.rows() {
                q[(row, k)] = -q[(row, k)];
            }
        }
    }
    Ok((q, r))
}

/// Left polar decomposition `M = U·P` computed from the SVD.
pub fn polar_left(m: &RealMatrix) -> Result<(RealMatrix, RealMatrix)> {
    let Svd { u: w, s, vt } = svd(m)?;
    let u = w.matmul(&vt)?;
    let v = vt.transpose();
    let mut vs = v.clone();
    for r in 0..vs.rows() {
        for (c, sv) in s.iter().enumerate() {
            vs[(r, c)] *= sv;
        }
    }
    let p = vs.matmul(&vt)?;
    Ok((u, p))
}

/// Right polar decomposition `M = P·U`.
pub fn polar_right(m: &RealMatrix) -> Result<(RealMatrix, RealMatrix)> {
    let (ut, pt) = polar_left(&m.transpose())?;
    Ok((pt.transpose(), ut.transpose()))
}

#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: RealMatrix,
    pub s: Vec<f64>,
    pub vt: RealMatrix,
    pub discarded_weight: f64,
}

/// Number of singular values to keep under the relative-weight cutoff
/// `Σ_{μ>χ} S_μ² / Σ_μ S_μ² < eps`, capped at `chi_max`.
pub fn truncation_rank(s: &[f64], chi_max: usize, eps: f64) -> (usize, f64) {
    let cap = chi_max.max(1).min(s.len());
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return (1, 0.0);
    }
    // tail[k] = Σ_{μ≥k} S_μ²
    let mut tail = vec![0.0; s.len() + 1];
    for k in (0..s.len()).rev() {
        tail[k] = tail[k + 1] + s[k] * s[k];
    }
    for chi in 1..=cap {
        let discarded = tail[chi] / total;
        let ok = if eps > 0.0 { discarded < eps } else { tail[chi] == 0.0 };
        if ok {
            return (chi, discarded);
        }
    }
    (cap, tail[cap] / total)
}

pub fn truncated_svd(m: &RealMatrix, chi_max: usize, eps: f64) -> Result<TruncatedSvd> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("eps = {eps} outside [0,1)")));
    }
    let full = svd(m)?;
    let (keep, discarded_weight) = truncation_rank(&full.s, chi_max, eps);
    let mut u = RealMatrix::zeros(m.rows(), keep);
    let mut vt = RealMatrix::zeros(keep, m.cols());
    for r in 0..m.rows() {
        for c in 0..keep {
            u[(r, c)] = full.u[(r, c)];
        }
    }
    for r in 0..keep {
        for c in 0..m.cols() {
            vt[(r, c)] = full.vt[(r, c)];
        }
    }
    Ok(TruncatedSvd {
        u,
        s: full.s[..keep].to_vec(),
        vt,
        discarded_weight,
    })
}

/// Moore–Penrose pseudo-inverse, dropping singular values below `rcond·S_max`.
/// Also returns the 2-norm condition number of `m`.
pub fn pseudo_inverse(m: &RealMatrix, rcond: f64) -> Result<(RealMatrix, f64)> {
    let Svd { u, s, vt } = svd(m)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let smin = s.last().copied().unwrap_or(0.0);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let mut vs = vt.transpose();
    for r in 0..vs.rows() {
        for (c, &sv) in s.iter().enumerate() {
            vs[(r, c)] = if sv > rcond * smax { vs[(r, c)] / sv } else { 0.0 };
        }
    }
    Ok((vs.matmul(&u.transpose())?, cond))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> RealMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        RealMatrix::from_vec(rows, cols, data).unwrap()
    }

    fn rel_err(a: &RealMatrix, b: &RealMatrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let d = svd(&RealMatrix::identity(2)).unwrap();
        assert_eq!(d.s, vec![1.0, 1.0]);
        assert!(rel_err(&d.reconstruct(), &RealMatrix::identity(2)) < 1e-15);

        let d = svd(&RealMatrix::diag(&[3.0, 0.0])).unwrap();
        assert!((d.s[0] - 3.0).abs() < 1e-15 && d.s[1].abs() < 1e-15);
    }

    #[test]
    fn svd_nearly_rank_one_narrow() {
        for e in [0.0, 1e-12, 1e-9, 1e-6] {
            for m in [
                RealMatrix::from_vec(2, 2, vec![0.3, -0.7, 0.51 + e, -1.19 - 2.0 * e]).unwrap(),
                RealMatrix::from_vec(2, 3, vec![0.3, -0.7, 0.1, 0.51 + e, -1.19, 0.17]).unwrap(),
                RealMatrix::from_vec(4, 2, vec![1.0, 2.0, 2.0, 4.0 + e, 0.0, 0.0, -1.0, -2.0]).unwrap(),
            ] {
                let d = svd(&m).unwrap();
                assert!(d.reconstruct().sub(&m).unwrap().frobenius_norm() < 1e-14);
                assert!(d.u.orthonormal_columns_residual() < 1e-14);
                assert!(d.vt.transpose().orthonormal_columns_residual() < 1e-14);
                assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn svd_random_reconstructs() {
        for (r, c, seed) in [(4, 3, 1), (3, 4, 2), (64, 64, 3), (17, 5, 4), (5, 40, 5)] {
            let m = random(r, c, seed);
            let d = svd(&m).unwrap();
            assert!(rel_err(&d.reconstruct(), &m) < 1e-12, "{r}x{c}");
            assert!(d.u.orthonormal_columns_residual() < 1e-12);
            assert!(d.vt.transpose().orthonormal_columns_residual() < 1e-12);
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_rejects_nan() {
        let m = RealMatrix::from_vec(1, 2, vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(svd(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn qr_cases() {
        let p0 = 8.0f64 / 31.0;
        let a = RealMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, p0.sqrt()]]).unwrap();
        let (q, r) = qr(&a).unwrap();
        assert!(rel_err(&q, &RealMatrix::identity(2)) < 1e-15);
        assert!((r[(1, 1)] - 0.50800).abs() < 1e-5);
        assert_eq!(r[(1, 0)], 0.0);

        let (q, r) = qr(&RealMatrix::identity(3)).unwrap();
        assert!(rel_err(&q, &RealMatrix::identity(3)) < 1e-15);
        assert!(rel_err(&r, &RealMatrix::identity(3)) < 1e-15);

        let col = RealMatrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let (q, r) = qr(&col).unwrap();
        assert!((q[(1, 0)] - 1.0).abs() < 1e-15 && q[(0, 0)].abs() < 1e-15);
        assert!((r[(0, 0)] - 1.0).abs() < 1e-15);

        assert!(matches!(qr(&random(2, 3, 0)), Err(Error::Shape(_))));
    }

    #[test]
    fn qr_random_and_deterministic() {
        for (rws, c, seed) in [(6, 3, 7), (64, 64, 8), (9, 9, 9)] {
            let m = random(rws, c, seed);
            let (q, r) = qr(&m).unwrap();
            assert!(rel_err(&q.matmul(&r).unwrap(), &m) < 1e-12);
            assert!(q.orthonormal_columns_residual() < 1e-12);
            for i in 0..r.rows() {
                assert!(r[(i, i)] >= 0.0);
                for j in 0..i.min(r.cols()) {
                    assert_eq!(r[(i, j)], 0.0);
                }
            }
            let (q2, r2) = qr(&m).unwrap();
            assert_eq!(q, q2);
            assert_eq!(r, r2);
        }
    }

    #[test]
    fn polar_cases() {
        let c = 0.6f64;
        let s = 0.8f64;
        let rot = RealMatrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
        let (u, p) = polar_left(&rot).unwrap();
        assert!(rel_err(&u, &rot) < 1e-14);
        assert!(rel_err(&p, &RealMatrix::identity(2)) < 1e-14);

        let d = RealMatrix::diag(&[2.0, 3.0]);
        let (u, p) = polar_left(&d).unwrap();
        assert!(rel_err(&u, &RealMatrix::identity(2)) < 1e-14);
        assert!(rel_err(&p, &d) < 1e-14);

        let m = random(3, 3, 11);
        let (u, p) = polar_left(&m).unwrap();
        assert!(rel_err(&u.matmul(&p).unwrap(), &m) < 1e-12);
        assert!(u.orthonormal_columns_residual() < 1e-12);
        // P symmetric PSD: eigenvalues via its own SVD and symmetry
        assert!(rel_err(&p, &p.transpose()) < 1e-12);
        let (_, pp) = polar_left(&p).unwrap();
        assert!(rel_err(&pp, &p) < 1e-10);
    }

    #[test]
    fn polar_right_reconstructs() {
        let m = random(2, 4, 12);
        let (p, u) = polar_right(&m).unwrap();
        assert!(rel_err(&p.matmul(&u).unwrap(), &m) < 1e-12);
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(truncation_rank(&[1.0, 0.0], 2, 1e-12), (1, 0.0));
        let s = [0.99f64.sqrt(), 0.01f64.sqrt()];
        let (k, w) = truncation_rank(&s, 2, 0.02);
        assert_eq!(k, 1);
        assert!((w - 0.01).abs() < 1e-15);

        let m = random(5, 4, 13);
        let t = truncated_svd(&m, 10, 0.0).unwrap();
        assert_eq!(t.s.len(), 4);
        assert!(t.discarded_weight <= 1e-14);

        assert!(matches!(truncated_svd(&m, 2, 1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(truncated_svd(&m, 2, -0.1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn truncated_weight_is_tail_sum() {
        let m = random(8, 6, 14);
        let full = svd(&m).unwrap();
        let t = truncated_svd(&m, 3, 0.0).unwrap();
        let total: f64 = full.s.iter().map(|x| x * x).sum();
        let tail: f64 = full.s[3..].iter().map(|x| x * x).sum();
        assert!((t.discarded_weight - tail / total).abs() < 1e-14);
    }

    #[test]
    fn pseudo_inverse_of_invertible() {
        let m = random(4, 4, 15);
        let (pi, cond) = pseudo_inverse(&m, 1e-14).unwrap();
        assert!(cond.is_finite());
        let prod = m.matmul(&pi).unwrap();
        assert!(rel_err(&prod, &RealMatrix::identity(4)) < 1e-10);
    }
}
