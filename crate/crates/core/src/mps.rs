//! Real open-boundary matrix product states used as Born machines.
//!
//! Site `i` carries bit `x_i`. Sequential preparation and sampling visit
//! sites from `N-1` down to `0`, so bits are emitted in reverse storage order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BitVector, Dataset};
use crate::error::{Error, Result};
use crate::numerics::{qr, svd, truncated_svd, RealMatrix};

/// Residual tolerance for the left-orthogonality condition.
pub const CANONICAL_TOL: f64 = 1e-10;
const DEGENERATE_NORM: f64 = 1e-300;

/// Rank-3 tensor of shape `(left, 2, right)`, row-major.
///
/// The same buffer reads as a `(2·left) × right` matrix with row `2a+j`
/// and as a `left × (2·right)` matrix with column `j·right+b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    left: usize,
    right: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(left: usize, right: usize) -> Self {
        Tensor3 {
            left,
            right,
            data: vec![0.0; left * 2 * right],
        }
    }

    pub fn from_vec(left: usize, right: usize, data: Vec<f64>) -> Result<Self> {
        if left == 0 || right == 0 || data.len() != left * 2 * right {
            return Err(Error::Shape(format!(
                "tensor ({left},2,{right}) cannot hold {} entries",
                data.len()
            )));
        }
        Ok(Tensor3 { left, right, data })
    }

    pub fn left_dim(&self) -> usize {
        self.left
    }

    pub fn right_dim(&self) -> usize {
        self.right
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, a: usize, j: usize, b: usize) -> f64 {
        self.data[(a * 2 + j) * self.right + b]
    }

    #[inline]
    pub fn set(&mut self, a: usize, j: usize, b: usize, v: f64) {
        self.data[(a * 2 + j) * self.right + b] = v;
    }

    /// `(2·left) × right` view with row index `2a+j`.
    pub fn left_matrix(&self) -> RealMatrix {
        RealMatrix::from_vec(2 * self.left, self.right, self.data.clone()).expect("shape")
    }

    /// `left × (2·right)` view with column index `j·right+b`.
    pub fn right_matrix(&self) -> RealMatrix {
        RealMatrix::from_vec(self.left, 2 * self.right, self.data.clone()).expect("shape")
    }

    pub fn from_left_matrix(m: RealMatrix) -> Self {
        let (rows, cols) = (m.rows(), m.cols());
        Tensor3 {
            left: rows / 2,
            right: cols,
            data: m.into_vec(),
        }
    }

    pub fn from_right_matrix(m: RealMatrix) -> Self {
        let (rows, cols) = (m.rows(), m.cols());
        Tensor3 {
            left: rows,
            right: cols / 2,
            data: m.into_vec(),
        }
    }

    /// Physical slice `A^j` as a `left × right` matrix.
    pub fn slice(&self, j: usize) -> RealMatrix {
        let mut m = RealMatrix::zeros(self.left, self.right);
        for a in 0..self.left {
            for b in 0..self.right {
                m[(a, b)] = self.get(a, j, b);
            }
        }
        m
    }

    /// `‖Σ_j A^{jT} A^j − I‖_F`.
    pub fn left_orthogonality_residual(&self) -> f64 {
        self.left_matrix().orthonormal_columns_residual()
    }

    /// `‖Σ_j A^j A^{jT} − I‖_F`.
    pub fn right_orthogonality_residual(&self) -> f64 {
        self.right_matrix().transpose().orthonormal_columns_residual()
    }

    /// Contracts `m` (`left' × left`) into the left bond.
    pub fn absorb_left(&self, m: &RealMatrix) -> Result<Tensor3> {
        Ok(Tensor3::from_right_matrix(m.matmul(&self.right_matrix())?))
    }

    /// Contracts `m` (`right × right'`) into the right bond.
    pub fn absorb_right(&self, m: &RealMatrix) -> Result<Tensor3> {
        let lm = self.left_matrix().matmul(m)?;
        Ok(Tensor3::from_left_matrix(lm))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CanonicalForm {
    None,
    Left,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mps {
    tensors: Vec<Tensor3>,
    center: Option<usize>,
    canonical: CanonicalForm,
}

impl Mps {
    /// Validates boundary and chained bond dimensions.
    pub fn new(tensors: Vec<Tensor3>) -> Result<Self> {
        Self::with_form(tensors, CanonicalForm::None, None)
    }

    pub(crate) fn with_form(
        tensors: Vec<Tensor3>,
        canonical: CanonicalForm,
        center: Option<usize>,
    ) -> Result<Self> {
        let n = tensors.len();
        if n == 0 {
            return Err(Error::InvalidInput("MPS needs at least one site".into()));
        }
        if tensors[0].left != 1 || tensors[n - 1].right != 1 {
            return Err(Error::Shape("boundary bond dimensions must be 1".into()));
        }
        for i in 1..n {
            if tensors[i - 1].right != tensors[i].left {
                return Err(Error::Shape(format!(
                    "bond {} mismatch: {} vs {}",
                    i - 1,
                    tensors[i - 1].right,
                    tensors[i].left
                )));
            }
        }
        if let Some(t) = tensors.iter().find(|t| t.data.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry in ({},2,{}) tensor",
                t.left, t.right
            )));
        }
        Ok(Mps {
            tensors,
            center,
            canonical,
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[Tensor3] {
        &self.tensors
    }

    pub fn tensor(&self, i: usize) -> &Tensor3 {
        &self.tensors[i]
    }

    pub fn into_tensors(self) -> Vec<Tensor3> {
        self.tensors
    }

    pub fn canonical_form(&self) -> CanonicalForm {
        self.canonical
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    /// Bond dimensions `χ_0 … χ_{N-2}` between neighbouring sites.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.len() - 1]
            .iter()
            .map(|t| t.right)
            .collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn is_left_canonical(&self, tol: f64) -> bool {
        self.tensors
            .iter()
            .all(|t| t.left_orthogonality_residual() < tol)
    }

    /// Human-readable summary written next to the binary file.
    pub fn manifest(&self) -> MpsManifest {
        MpsManifest {
            format_version: FORMAT_VERSION,
            n_sites: self.len(),
            bond_dims: self.bond_dims(),
            canonical: self.canonical,
            center: self.center,
        }
    }
}

/// Random tensors with entries uniform in (−1, 1), then left-canonicalized.
pub fn random_mps(n: usize, chi: usize, seed: u64) -> Result<Mps> {
    if n == 0 || chi == 0 {
        return Err(Error::InvalidParameter(format!(
            "random_mps needs N ≥ 1 and chi ≥ 1, got N={n}, chi={chi}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bond = |i: usize| -> usize {
        // bond to the right of site i
        if i + 1 >= n {
            return 1;
        }
        let pow = |e: usize| 1usize.checked_shl(e as u32).unwrap_or(usize::MAX);
        chi.min(pow(i + 1)).min(pow(n - i - 1))
    };
    let tensors = (0..n)
        .map(|i| {
            let (l, r) = (if i == 0 { 1 } else { bond(i - 1) }, bond(i));
            let data = (0..l * 2 * r).map(|_| rng.random_range(-1.0..1.0)).collect();
            Tensor3 {
                left: l,
                right: r,
                data,
            }
        })
        .collect();
    left_canonicalize(&Mps::new(tensors)?)
}

/// Splits a `(2l) × r` matrix into a left-orthogonal factor and the carry.
fn left_orthogonalize(m: &RealMatrix) -> Result<(RealMatrix, RealMatrix)> {
    if m.rows() >= m.cols() {
        qr(m)
    } else {
        let s = svd(m)?;
        let k = s.s.len();
        let mut carry = s.vt.clone();
        for r in 0..k {
            for c in 0..carry.cols() {
                carry[(r, c)] *= s.s[r];
            }
        }
        Ok((s.u, carry))
    }
}

/// Left-to-right orthogonalization sweep, normalized to unit norm so every
/// site (including the last) is an isometry.
pub fn left_canonicalize(mps: &Mps) -> Result<Mps> {
    let n = mps.len();
    let mut tensors = Vec::with_capacity(n);
    let mut carry = RealMatrix::identity(1);
    for (i, t) in mps.tensors.iter().enumerate() {
        let t = t.absorb_left(&carry)?;
        let (q, c) = left_orthogonalize(&t.left_matrix())?;
        carry = c;
        let mut t = Tensor3::from_left_matrix(q);
        if i == n - 1 {
            let norm = carry[(0, 0)];
            if norm.abs() < DEGENERATE_NORM {
                return Err(Error::Degenerate("MPS has zero norm".into()));
            }
            // keep the overall sign of the state
            if norm < 0.0 {
                t.data.iter_mut().for_each(|v| *v = -*v);
            }
        }
        tensors.push(t);
    }
    Mps::with_form(tensors, CanonicalForm::Left, None)
}

/// Left-orthogonal to the left of `k`, right-orthogonal to the right, unit norm.
pub fn mixed_canonicalize(mps: &Mps, k: usize) -> Result<Mps> {
    let n = mps.len();
    if k >= n {
        return Err(Error::Index(format!("center {k} outside 0..{n}")));
    }
    let left = left_canonicalize(mps)?;
    let mut tensors = left.tensors;
    for i in (k + 1..n).rev() {
        // right-orthogonalize site i via QR of its transpose
        let (q, r) = left_orthogonalize(&tensors[i].right_matrix().transpose())?;
        tensors[i] = Tensor3::from_right_matrix(q.transpose());
        tensors[i - 1] = tensors[i - 1].absorb_right(&r.transpose())?;
    }
    Mps::with_form(tensors, CanonicalForm::Mixed, Some(k))
}

/// `⟨Φ(x)|ψ⟩`, the product of the selected slices.
pub fn amplitude(mps: &Mps, x: &BitVector) -> Result<f64> {
    if x.len() != mps.len() {
        return Err(Error::Shape(format!(
            "bit string of length {} for {} sites",
            x.len(),
            mps.len()
        )));
    }
    let mut v = vec![1.0];
    for (t, &j) in mps.tensors.iter().zip(x.bits()) {
        let j = j as usize;
        let mut w = vec![0.0; t.right];
        for (a, va) in v.iter().enumerate() {
            if *va == 0.0 {
                continue;
            }
            for (b, wb) in w.iter_mut().enumerate() {
                *wb += va * t.get(a, j, b);
            }
        }
        v = w;
    }
    Ok(v[0])
}

/// `Z = ⟨ψ|ψ⟩` by full transfer-matrix contraction.
pub fn norm_sq(mps: &Mps) -> f64 {
    let mut e = RealMatrix::identity(1);
    for t in &mps.tensors {
        let mut next = RealMatrix::zeros(t.right, t.right);
        for j in 0..2 {
            let s = t.slice(j);
            let es = e.matmul(&s).expect("bond chain");
            let term = s.transpose().matmul(&es).expect("bond chain");
            for (d, v) in next.as_mut_slice().iter_mut().zip(term.as_slice()) {
                *d += v;
            }
        }
        e = next;
    }
    e[(0, 0)]
}

fn checked_norm(mps: &Mps) -> Result<f64> {
    let z = norm_sq(mps);
    if z < DEGENERATE_NORM {
        return Err(Error::Degenerate(format!("normalization Z = {z:e}")));
    }
    Ok(z)
}

/// Born probability `amplitude² / Z`.
pub fn born_prob(mps: &Mps, x: &BitVector) -> Result<f64> {
    let z = checked_norm(mps)?;
    let a = amplitude(mps, x)?;
    Ok(a * a / z)
}

/// Mean negative log-likelihood in nats; `+∞` when any sample has zero
/// probability.
pub fn nll(mps: &Mps, data: &Dataset) -> Result<f64> {
    let z = checked_norm(mps)?;
    let mut total = 0.0;
    for x in data.samples() {
        let a = amplitude(mps, x)?;
        let p = a * a / z;
        if p <= 0.0 {
            return Ok(f64::INFINITY);
        }
        total -= p.ln();
    }
    Ok(total / data.len() as f64)
}

/// Full probability table over all `2^N` outcomes, indexed by
/// [`BitVector::to_index`].
pub fn probability_table(mps: &Mps) -> Result<Vec<f64>> {
    let n = mps.len();
    if n > 24 {
        return Err(Error::TooLarge(format!("2^{n} outcomes")));
    }
    let z = checked_norm(mps)?;
    (0..1usize << n)
        .map(|i| amplitude(mps, &BitVector::from_index(i, n)).map(|a| a * a / z))
        .collect()
}

/// Per-bond discarded weight from a compression run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompressionLog {
    /// `(sweep, bond, discarded_weight)` for every local truncation.
    pub truncations: Vec<(usize, usize, f64)>,
}

impl CompressionLog {
    pub fn max_discarded(&self) -> f64 {
        self.truncations
            .iter()
            .map(|t| t.2)
            .fold(0.0, f64::max)
    }
}

pub fn compress(mps: &Mps, chi_max: usize, eps: f64) -> Result<Mps> {
    compress_with_log(mps, chi_max, eps).map(|(m, _)| m)
}

/// Left sweep (lossless), then a truncating right-to-left sweep and a
/// truncating left-to-right sweep. The result is left-canonical.
pub fn compress_with_log(mps: &Mps, chi_max: usize, eps: f64) -> Result<(Mps, CompressionLog)> {
    if chi_max == 0 {
        return Err(Error::InvalidParameter("chi_max must be ≥ 1".into()));
    }
    let mut tensors = left_canonicalize(mps)?.tensors;
    let n = tensors.len();
    let mut log = CompressionLog::default();

    for i in (1..n).rev() {
        let t = truncated_svd(&tensors[i].right_matrix(), chi_max, eps)?;
        log.truncations.push((1, i - 1, t.discarded_weight));
        tensors[i] = Tensor3::from_right_matrix(t.vt);
        let us = scale_columns(&t.u, &t.s);
        tensors[i - 1] = tensors[i - 1].absorb_right(&us)?;
    }
    for i in 0..n.saturating_sub(1) {
        let t = truncated_svd(&tensors[i].left_matrix(), chi_max, eps)?;
        log.truncations.push((2, i, t.discarded_weight));
        tensors[i] = Tensor3::from_left_matrix(t.u);
        let sv = scale_rows(&t.vt, &t.s);
        tensors[i + 1] = tensors[i + 1].absorb_left(&sv)?;
    }
    let out = left_canonicalize(&Mps::new(tensors)?)?;
    Ok((out, log))
}

fn scale_columns(m: &RealMatrix, s: &[f64]) -> RealMatrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        for (c, sv) in s.iter().enumerate() {
            out[(r, c)] *= sv;
        }
    }
    out
}

fn scale_rows(m: &RealMatrix, s: &[f64]) -> RealMatrix {
    let mut out = m.clone();
    for (r, sv) in s.iter().enumerate() {
        for c in 0..out.cols() {
            out[(r, c)] *= sv;
        }
    }
    out
}

/// Draws one bit string by the sequential scheme: sites `N-1 … 0`, each bit
/// sampled from its marginal given the ancilla state, then projected.
pub fn sample<R: Rng + ?Sized>(mps: &Mps, rng: &mut R) -> Result<BitVector> {
    if mps.canonical != CanonicalForm::Left {
        return Err(Error::Precondition("sampling needs a left-canonical MPS".into()));
    }
    let n = mps.len();
    let mut bits = vec![0u8; n];
    let mut v = vec![1.0];
    for i in (0..n).rev() {
        let t = &mps.tensors[i];
        let branch = |j: usize| -> Vec<f64> {
            (0..t.left)
                .map(|a| (0..t.right).map(|b| t.get(a, j, b) * v[b]).sum())
                .collect()
        };
        let (w0, w1) = (branch(0), branch(1));
        let p0: f64 = w0.iter().map(|x| x * x).sum();
        let p1: f64 = w1.iter().map(|x| x * x).sum();
        let j = usize::from(rng.random::<f64>() * (p0 + p1) >= p0);
        let (w, p) = if j == 0 { (w0, p0) } else { (w1, p1) };
        let norm = p.sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
        bits[i] = j as u8;
    }
    BitVector::new(bits)
}

/// One sequential-preparation step embedded in a `2^n × 2^n` matrix.
///
/// Only columns `2α` for `α < chi_in` are defined; the rest are zero until
/// completed to a unitary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    pub site: usize,
    pub n_qubits: usize,
    pub chi_in: usize,
    pub chi_out: usize,
    pub matrix: RealMatrix,
}

impl Isometry {
    pub fn new(
        site: usize,
        n_qubits: usize,
        chi_in: usize,
        chi_out: usize,
        matrix: RealMatrix,
    ) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if matrix.rows() != dim || matrix.cols() != dim {
            return Err(Error::Shape(format!(
                "{n_qubits}-qubit isometry needs a {dim}x{dim} matrix"
            )));
        }
        if 2 * chi_in > dim || 2 * chi_out > dim {
            return Err(Error::Shape(format!(
                "bond dims ({chi_in},{chi_out}) exceed {} ancilla states",
                dim / 2
            )));
        }
        Ok(Isometry {
            site,
            n_qubits,
            chi_in,
            chi_out,
            matrix,
        })
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn defined_columns(&self) -> Vec<usize> {
        (0..self.chi_in).map(|a| 2 * a).collect()
    }

    /// The `2^n × chi_in` block of defined columns.
    pub fn defined_block(&self) -> RealMatrix {
        let cols = self.defined_columns();
        let mut m = RealMatrix::zeros(self.dim(), cols.len());
        for r in 0..self.dim() {
            for (k, &c) in cols.iter().enumerate() {
                m[(r, k)] = self.matrix[(r, c)];
            }
        }
        m
    }

    pub fn orthonormality_residual(&self) -> f64 {
        self.defined_block().orthonormal_columns_residual()
    }

    /// Rebuilds the site tensor `L^{j}_{βα} = matrix[2β+j][2α]`.
    pub fn to_tensor(&self) -> Tensor3 {
        let mut t = Tensor3::zeros(self.chi_out, self.chi_in);
        for beta in 0..self.chi_out {
            for j in 0..2 {
                for alpha in 0..self.chi_in {
                    t.set(beta, j, alpha, self.matrix[(2 * beta + j, 2 * alpha)]);
                }
            }
        }
        t
    }

    pub fn from_tensor(site: usize, n_qubits: usize, t: &Tensor3) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if 2 * t.left > dim || 2 * t.right > dim {
            return Err(Error::Shape(format!(
                "({},2,{}) tensor does not fit on {n_qubits} qubits",
                t.left, t.right
            )));
        }
        let mut m = RealMatrix::zeros(dim, dim);
        for beta in 0..t.left {
            for j in 0..2 {
                for alpha in 0..t.right {
                    m[(2 * beta + j, 2 * alpha)] = t.get(beta, j, alpha);
                }
            }
        }
        Isometry::new(site, n_qubits, t.right, t.left, m)
    }
}

/// `1 + ⌈log₂ max(χ, 2)⌉`.
pub fn register_width(max_bond: usize) -> usize {
    let chi = max_bond.max(2);
    1 + (usize::BITS - (chi - 1).leading_zeros()) as usize
}

/// Sequential-preparation isometries for every site, all on one register.
pub fn extract_isometries(mps: &Mps) -> Result<Vec<Isometry>> {
    if mps.canonical != CanonicalForm::Left {
        return Err(Error::Precondition(
            "isometry extraction needs a left-canonical MPS".into(),
        ));
    }
    let n_qubits = register_width(mps.max_bond());
    mps.tensors
        .iter()
        .enumerate()
        .map(|(i, t)| Isometry::from_tensor(i, n_qubits, t))
        .collect()
}

/// Reassembles an MPS from per-site isometries.
pub fn mps_from_isometries(isos: &[Isometry]) -> Result<Mps> {
    let tensors = isos.iter().map(Isometry::to_tensor).collect();
    let mps = Mps::new(tensors)?;
    let form = if mps.is_left_canonical(1e-8) {
        CanonicalForm::Left
    } else {
        CanonicalForm::None
    };
    Mps::with_form(mps.tensors, form, None)
}

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TNQAMPS\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpsManifest {
    pub format_version: u32,
    pub n_sites: usize,
    pub bond_dims: Vec<usize>,
    pub canonical: CanonicalForm,
    pub center: Option<usize>,
}

/// Binary layout (little-endian): magic, version u32, N u64, form u8,
/// center i64 (−1 for none), then per tensor three u64 dims and the f64 data.
pub fn to_bytes(mps: &Mps) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(mps.len() as u64).to_le_bytes());
    out.push(match mps.canonical {
        CanonicalForm::None => 0,
        CanonicalForm::Left => 1,
        CanonicalForm::Mixed => 2,
    });
    let center = mps.center.map(|c| c as i64).unwrap_or(-1);
    out.extend_from_slice(&center.to_le_bytes());
    for t in &mps.tensors {
        for d in [t.left, 2, t.right] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or(Error::Parse {
            offset: self.pos,
            msg: "unexpected end of MPS file".into(),
        })?;
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Mps> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: "not an MPS file".into(),
        });
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Parse {
            offset: 8,
            msg: format!("unsupported version {version}"),
        });
    }
    let n = r.u64()? as usize;
    let form_offset = r.pos;
    let canonical = match r.take(1)?[0] {
        0 => CanonicalForm::None,
        1 => CanonicalForm::Left,
        2 => CanonicalForm::Mixed,
        other => {
            return Err(Error::Parse {
                offset: form_offset,
                msg: format!("bad canonical flag {other}"),
            })
        }
    };
    let center = i64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let center = (center >= 0).then_some(center as usize);
    let mut tensors = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let shape_offset = r.pos;
        let (l, p, rt) = (r.u64()? as usize, r.u64()? as usize, r.u64()? as usize);
        if p != 2 || l == 0 || rt == 0 || l.saturating_mul(rt) > 1 << 28 {
            return Err(Error::Parse {
                offset: shape_offset,
                msg: format!("bad tensor shape ({l},{p},{rt})"),
            });
        }
        let raw = r.take(l * 2 * rt * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor3 {
            left: l,
            right: rt,
            data,
        });
    }
    Mps::with_form(tensors, canonical, center)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_amplitudes(m: &Mps) -> Vec<f64> {
        (0..1usize << m.len())
            .map(|i| amplitude(m, &BitVector::from_index(i, m.len())).unwrap())
            .collect()
    }

    fn product_state(bits: &str, chi: usize) -> Mps {
        let n = bits.len();
        let tensors = bits
            .chars()
            .enumerate()
            .map(|(i, c)| {
                let (l, r) = (if i == 0 { 1 } else { chi }, if i == n - 1 { 1 } else { chi });
                let mut t = Tensor3::zeros(l, r);
                t.set(0, (c == '1') as usize, 0, 1.0);
                t
            })
            .collect();
        Mps::new(tensors).unwrap()
    }

    #[test]
    fn single_site() {
        let m = random_mps(1, 1, 3).unwrap();
        assert!((norm_sq(&m) - 1.0).abs() < 1e-14);
        let t = Tensor3::from_vec(1, 1, vec![0.6, 0.8]).unwrap();
        let m = Mps::new(vec![t]).unwrap();
        assert_eq!(amplitude(&m, &"0".parse().unwrap()).unwrap(), 0.6);
    }

    #[test]
    fn random_is_deterministic_and_normalized() {
        assert_eq!(random_mps(6, 4, 9).unwrap(), random_mps(6, 4, 9).unwrap());
        let m = random_mps(6, 4, 9).unwrap();
        assert!((norm_sq(&m) - 1.0).abs() < 1e-12);
        assert_eq!(m.bond_dims(), vec![2, 4, 4, 4, 2]);
        let total: f64 = probability_table(&m).unwrap().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonicalization_preserves_amplitudes() {
        let m = random_mps(5, 3, 1).unwrap();
        // scramble the gauge
        let mut tensors = m.tensors.clone();
        let g = RealMatrix::from_rows(&[
            vec![2.0, 0.3, 0.0],
            vec![-0.1, 1.0, 0.5],
            vec![0.0, 0.2, 0.7],
        ])
        .unwrap();
        let ginv = crate::numerics::pseudo_inverse(&g, 1e-14).unwrap().0;
        tensors[1] = tensors[1].absorb_right(&g).unwrap();
        tensors[2] = tensors[2].absorb_left(&ginv).unwrap();
        let scrambled = Mps::new(tensors).unwrap();
        let canon = left_canonicalize(&scrambled).unwrap();
        assert!(canon.is_left_canonical(CANONICAL_TOL));
        let scale = norm_sq(&scrambled).sqrt();
        for (a, b) in all_amplitudes(&scrambled).iter().zip(all_amplitudes(&canon)) {
            assert!((a / scale - b).abs() < 1e-12);
        }
        let again = left_canonicalize(&canon).unwrap();
        for (a, b) in all_amplitudes(&canon).iter().zip(all_amplitudes(&again)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_form() {
        let m = random_mps(6, 4, 2).unwrap();
        let mixed = mixed_canonicalize(&m, 3).unwrap();
        for i in 0..3 {
            assert!(mixed.tensor(i).left_orthogonality_residual() < 1e-10);
        }
        for i in 4..6 {
            assert!(mixed.tensor(i).right_orthogonality_residual() < 1e-10);
        }
        for (a, b) in all_amplitudes(&m).iter().zip(all_amplitudes(&mixed)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_two_outcome_nll() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = Mps::new(vec![Tensor3::from_vec(1, 1, vec![s, s]).unwrap()]).unwrap();
        let ds = Dataset::from_text("0\n1\n").unwrap();
        assert!((nll(&m, &ds).unwrap() - 2f64.ln()).abs() < 1e-14);
        let m = Mps::new(vec![Tensor3::from_vec(1, 1, vec![1.0, 0.0]).unwrap()]).unwrap();
        assert_eq!(nll(&m, &ds).unwrap(), f64::INFINITY);
        let z = Mps::new(vec![Tensor3::from_vec(1, 1, vec![0.0, 0.0]).unwrap()]).unwrap();
        assert!(matches!(born_prob(&z, &"0".parse().unwrap()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn amplitude_length_mismatch() {
        let m = random_mps(3, 2, 0).unwrap();
        assert!(matches!(amplitude(&m, &"01".parse().unwrap()), Err(Error::Shape(_))));
    }

    #[test]
    fn compression() {
        let m = random_mps(7, 8, 5).unwrap();
        let c = compress(&m, usize::MAX, 0.0).unwrap();
        for (a, b) in all_amplitudes(&m).iter().zip(all_amplitudes(&c)) {
            assert!((a - b).abs() < 1e-12);
        }
        let p = product_state("1011", 4);
        assert_eq!(p.max_bond(), 4);
        let c = compress(&p, 8, 1e-12).unwrap();
        assert_eq!(c.max_bond(), 1);
        assert!(c.is_left_canonical(CANONICAL_TOL));
        let (_, log) = compress_with_log(&m, 2, 0.0).unwrap();
        assert!(log.max_discarded() > 0.0);
        let (c, _) = compress_with_log(&m, 2, 0.0).unwrap();
        assert_eq!(c.max_bond(), 2);
    }

    #[test]
    fn deterministic_sampling() {
        let m = left_canonicalize(&product_state("101", 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(sample(&m, &mut rng).unwrap().to_string(), "101");
        }
        let raw = product_state("101", 2);
        assert!(matches!(sample(&raw, &mut rng), Err(Error::Precondition(_))));
    }

    #[test]
    fn isometries_from_identity_tensor() {
        // copy tensor followed by a projector onto bond 0
        let mut t = Tensor3::zeros(2, 1);
        t.set(0, 0, 0, 1.0);
        let mut mid = Tensor3::zeros(1, 2);
        mid.set(0, 0, 0, 1.0);
        mid.set(0, 1, 1, 1.0);
        let m = left_canonicalize(&Mps::new(vec![mid, t]).unwrap()).unwrap();
        let isos = extract_isometries(&m).unwrap();
        assert_eq!(isos[0].n_qubits, 2);
        for iso in &isos {
            assert!(iso.orthonormality_residual() < 1e-8);
            for v in iso.matrix.as_slice() {
                assert!(v.abs() < 1e-12 || (v.abs() - 1.0).abs() < 1e-12);
            }
        }
        let back = mps_from_isometries(&isos).unwrap();
        assert_eq!(all_amplitudes(&back), all_amplitudes(&m));
    }

    #[test]
    fn register_widths() {
        assert_eq!(register_width(1), 2);
        assert_eq!(register_width(2), 2);
        assert_eq!(register_width(3), 3);
        assert_eq!(register_width(4), 3);
        assert_eq!(register_width(8), 4);
        assert_eq!(register_width(16), 5);
    }

    #[test]
    fn binary_roundtrip() {
        let m = mixed_canonicalize(&random_mps(5, 3, 4).unwrap(), 2).unwrap();
        let bytes = to_bytes(&m);
        assert_eq!(from_bytes(&bytes).unwrap(), m);
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Parse { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Parse { offset: 0, .. })));
        let manifest = m.manifest();
        assert_eq!(manifest.bond_dims, m.bond_dims());
        assert_eq!(manifest.center, Some(2));
    }
}
