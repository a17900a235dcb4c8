//! Sweeping gradient training of the Born machine.
//!
//! The model is kept in mixed canonical form with the orthogonality center
//! on the block being updated, so `Z = ‖Θ‖²` and the local gradient only
//! needs the per-sample left and right environments, which are cached.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mps::{self, CanonicalForm, Mps, Tensor3};
use crate::numerics::{qr, truncated_svd, RealMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub block_size: usize,
    pub max_sweeps: usize,
    pub chi_max: usize,
    /// Bond dimension of the random initial model; defaults to `chi_max`.
    pub init_chi: Option<usize>,
    pub split_eps: f64,
    pub seed: u64,
    pub convergence_tol: f64,
    /// Halve the learning rate whenever a sweep increases the NLL.
    pub halve_on_increase: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            block_size: 1,
            max_sweeps: 1000,
            chi_max: 16,
            init_chi: None,
            split_eps: 0.0,
            seed: 0,
            convergence_tol: 1e-6,
            halve_on_increase: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !matches!(self.block_size, 1 | 2) {
            return Err(Error::InvalidParameter(format!(
                "block size {} not in {{1,2}}",
                self.block_size
            )));
        }
        if !(0.0..1.0).contains(&self.split_eps) {
            return Err(Error::InvalidParameter(format!(
                "split_eps {} outside [0,1)",
                self.split_eps
            )));
        }
        if self.chi_max == 0 || self.init_chi == Some(0) {
            return Err(Error::InvalidParameter("bond dimension must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One local update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub sweep: usize,
    pub site: usize,
    pub nll: f64,
    pub max_bond: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub updates: Vec<UpdateRecord>,
    /// NLL of the initial model followed by one value per completed sweep.
    pub nll_per_sweep: Vec<f64>,
    pub bond_dims_per_sweep: Vec<Vec<usize>>,
    pub wall_time_secs: f64,
}

impl TrainHistory {
    pub fn nll_per_update(&self) -> Vec<f64> {
        self.updates.iter().map(|u| u.nll).collect()
    }

    pub fn sweeps(&self) -> usize {
        self.bond_dims_per_sweep.len()
    }

    /// CSV with columns `iteration,site,nll,max_bond`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,site,nll,max_bond\n");
        for u in &self.updates {
            out.push_str(&format!("{},{},{},{}\n", u.sweep, u.site, u.nll, u.max_bond));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Converged,
    MaxSweeps,
    /// NLL became non-finite; the returned model is the last good one.
    Diverged { updates: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Left-canonical trained model.
    pub mps: Mps,
    pub history: TrainHistory,
    pub status: TrainStatus,
}

/// Local tensor block `Θ` over `s` sites, shape `(left, 2^s, right)`.
///
/// For `s = 2` the physical index is `2·j_l + j_{l+1}`, so the buffer reads
/// directly as the `(2·left) × (2·right)` matrix that is split by SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub left: usize,
    pub right: usize,
    pub sites: usize,
    pub data: Vec<f64>,
}

impl Block {
    fn phys(&self) -> usize {
        1 << self.sites
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &Block) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn from_tensors(tensors: &[Tensor3], l: usize, s: usize) -> Result<Block> {
        match s {
            1 => Ok(Block {
                left: tensors[l].left_dim(),
                right: tensors[l].right_dim(),
                sites: 1,
                data: tensors[l].data().to_vec(),
            }),
            2 => {
                let m = tensors[l]
                    .left_matrix()
                    .matmul(&tensors[l + 1].right_matrix())?;
                Ok(Block {
                    left: tensors[l].left_dim(),
                    right: tensors[l + 1].right_dim(),
                    sites: 2,
                    data: m.into_vec(),
                })
            }
            _ => Err(Error::InvalidParameter(format!("block size {s}"))),
        }
    }

    fn as_tensor(&self) -> Tensor3 {
        Tensor3::from_vec(self.left, self.right, self.data.clone()).expect("one-site block")
    }

    fn as_matrix(&self) -> RealMatrix {
        RealMatrix::from_vec(2 * self.left, 2 * self.right, self.data.clone())
            .expect("two-site block")
    }
}

/// Ascent step `Θ + η∇` without renormalization.
pub fn update_block(theta: &Block, grad: &Block, eta: f64) -> Result<Block> {
    if theta.data.len() != grad.data.len() || theta.sites != grad.sites {
        return Err(Error::Shape("gradient and block shapes differ".into()));
    }
    let mut out = theta.clone();
    for (t, g) in out.data.iter_mut().zip(&grad.data) {
        *t += eta * g;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

/// Truncated SVD across the middle bond of a two-site block. Singular values
/// go to the site that becomes the new center. Returns the discarded weight.
pub fn split_two_site(
    theta: &Block,
    direction: Direction,
    chi_max: usize,
    eps: f64,
) -> Result<(Tensor3, Tensor3, f64)> {
    if theta.sites != 2 {
        return Err(Error::Precondition("split needs a two-site block".into()));
    }
    let t = truncated_svd(&theta.as_matrix(), chi_max, eps)?;
    let k = t.s.len();
    let (mut u, mut vt) = (t.u, t.vt);
    match direction {
        Direction::Right => {
            for r in 0..k {
                for c in 0..vt.cols() {
                    vt[(r, c)] *= t.s[r];
                }
            }
        }
        Direction::Left => {
            for r in 0..u.rows() {
                for c in 0..k {
                    u[(r, c)] *= t.s[c];
                }
            }
        }
    }
    Ok((
        Tensor3::from_left_matrix(u),
        Tensor3::from_right_matrix(vt),
        t.discarded_weight,
    ))
}

fn env_left_step(v: &[f64], t: &Tensor3, j: usize) -> Vec<f64> {
    let mut w = vec![0.0; t.right_dim()];
    for (a, va) in v.iter().enumerate() {
        if *va != 0.0 {
            for (b, wb) in w.iter_mut().enumerate() {
                *wb += va * t.get(a, j, b);
            }
        }
    }
    w
}

fn env_right_step(v: &[f64], t: &Tensor3, j: usize) -> Vec<f64> {
    (0..t.left_dim())
        .map(|a| (0..t.right_dim()).map(|b| t.get(a, j, b) * v[b]).sum())
        .collect()
}

fn block_index(bits: &[u8], l: usize, s: usize) -> usize {
    if s == 1 {
        bits[l] as usize
    } else {
        2 * bits[l] as usize + bits[l + 1] as usize
    }
}

fn block_amplitude(theta: &Block, lv: &[f64], rv: &[f64], j: usize) -> f64 {
    let p = theta.phys();
    let mut amp = 0.0;
    for (a, la) in lv.iter().enumerate() {
        if *la == 0.0 {
            continue;
        }
        let row = &theta.data[(a * p + j) * theta.right..(a * p + j + 1) * theta.right];
        amp += la * row.iter().zip(rv).map(|(x, y)| x * y).sum::<f64>();
    }
    amp
}

/// `(1/N_T) Σ_x 2E_x/amp(x) − 2Θ/‖Θ‖²` from explicit environments.
fn gradient_from_envs(
    theta: &Block,
    samples: &[&[u8]],
    lenv: &[Vec<f64>],
    renv: &[Vec<f64>],
    l: usize,
) -> Block {
    let p = theta.phys();
    let s = theta.sites;
    let mut g = Block {
        data: vec![0.0; theta.data.len()],
        ..theta.clone()
    };
    let nt = samples.len() as f64;
    for (k, bits) in samples.iter().enumerate() {
        let j = block_index(bits, l, s);
        let (lv, rv) = (&lenv[k], &renv[k]);
        let amp = block_amplitude(theta, lv, rv, j);
        let c = 2.0 / (nt * amp);
        for (a, la) in lv.iter().enumerate() {
            if *la == 0.0 {
                continue;
            }
            let base = (a * p + j) * theta.right;
            for (b, rb) in rv.iter().enumerate() {
                g.data[base + b] += c * la * rb;
            }
        }
    }
    let z = theta.norm_sq();
    for (gv, tv) in g.data.iter_mut().zip(&theta.data) {
        *gv -= 2.0 * tv / z;
    }
    g
}

/// Gradient of the mean log-likelihood with respect to the block starting
/// at site `l`. The orthogonality center must lie inside the block.
pub fn local_gradient(mps: &Mps, data: &Dataset, l: usize, s: usize) -> Result<Block> {
    let n = mps.len();
    if !matches!(s, 1 | 2) || l + s > n {
        return Err(Error::InvalidParameter(format!("block [{l}, {l}+{s}) on {n} sites")));
    }
    let centered = mps.canonical_form() == CanonicalForm::Mixed
        && mps.center().is_some_and(|c| c >= l && c < l + s);
    if !centered {
        return Err(Error::Precondition(format!(
            "orthogonality center {:?} is not in block starting at {l}",
            mps.center()
        )));
    }
    if data.feature_length() != n {
        return Err(Error::Shape(format!(
            "{}-bit data for {n} sites",
            data.feature_length()
        )));
    }
    let tensors = mps.tensors();
    let theta = Block::from_tensors(tensors, l, s)?;
    let samples: Vec<&[u8]> = data.samples().iter().map(|x| x.bits()).collect();
    let lenv: Vec<Vec<f64>> = samples
        .iter()
        .map(|bits| {
            (0..l).fold(vec![1.0], |v, i| env_left_step(&v, &tensors[i], bits[i] as usize))
        })
        .collect();
    let renv: Vec<Vec<f64>> = samples
        .iter()
        .map(|bits| {
            (l + s..n)
                .rev()
                .fold(vec![1.0], |v, i| env_right_step(&v, &tensors[i], bits[i] as usize))
        })
        .collect();
    Ok(gradient_from_envs(&theta, &samples, &lenv, &renv, l))
}

/// Mixed-canonical model with cached per-sample environments.
struct Trainer<'a> {
    tensors: Vec<Tensor3>,
    samples: Vec<&'a [u8]>,
    /// `lenv[i][k]`: product of sample `k`'s slices on sites `0..i`.
    lenv: Vec<Vec<Vec<f64>>>,
    /// `renv[i][k]`: product of sample `k`'s slices on sites `i+1..N`.
    renv: Vec<Vec<Vec<f64>>>,
    cfg: TrainConfig,
    eta: f64,
}

impl<'a> Trainer<'a> {
    fn new(mps: Mps, data: &'a Dataset, cfg: &TrainConfig) -> Result<Self> {
        let tensors = mps::mixed_canonicalize(&mps, 0)?.into_tensors();
        let n = tensors.len();
        let samples: Vec<&[u8]> = data.samples().iter().map(|x| x.bits()).collect();
        let nt = samples.len();
        let mut t = Trainer {
            tensors,
            samples,
            lenv: vec![vec![vec![1.0]; nt]; n],
            renv: vec![vec![vec![1.0]; nt]; n],
            cfg: cfg.clone(),
            eta: cfg.learning_rate,
        };
        for i in (0..n.saturating_sub(1)).rev() {
            t.refresh_right(i);
        }
        Ok(t)
    }

    fn n(&self) -> usize {
        self.tensors.len()
    }

    /// Recomputes `lenv[i+1]` from `lenv[i]` and site `i`.
    fn refresh_left(&mut self, i: usize) {
        let t = &self.tensors[i];
        let next: Vec<Vec<f64>> = self
            .samples
            .iter()
            .zip(&self.lenv[i])
            .map(|(bits, v)| env_left_step(v, t, bits[i] as usize))
            .collect();
        self.lenv[i + 1] = next;
    }

    /// Recomputes `renv[i]` from `renv[i+1]` and site `i+1`.
    fn refresh_right(&mut self, i: usize) {
        let t = &self.tensors[i + 1];
        let next: Vec<Vec<f64>> = self
            .samples
            .iter()
            .zip(&self.renv[i + 1])
            .map(|(bits, v)| env_right_step(v, t, bits[i + 1] as usize))
            .collect();
        self.renv[i] = next;
    }

    fn max_bond(&self) -> usize {
        self.tensors[..self.n() - 1]
            .iter()
            .map(Tensor3::right_dim)
            .max()
            .unwrap_or(1)
    }

    /// Gradient step on the block at `l`, renormalized; returns the new
    /// block and the model NLL after the step.
    fn step(&self, l: usize) -> Result<(Block, f64)> {
        let s = self.cfg.block_size;
        let theta = Block::from_tensors(&self.tensors, l, s)?;
        let renv = &self.renv[l + s - 1];
        let grad = gradient_from_envs(&theta, &self.samples, &self.lenv[l], renv, l);
        let mut next = update_block(&theta, &grad, self.eta)?;
        let norm = next.norm_sq().sqrt();
        next.scale(1.0 / norm);
        let nll = self
            .samples
            .iter()
            .enumerate()
            .map(|(k, bits)| {
                let a = block_amplitude(&next, &self.lenv[l][k], &renv[k], block_index(bits, l, s));
                -(a * a).ln()
            })
            .sum::<f64>()
            / self.samples.len() as f64;
        Ok((next, nll))
    }

    fn place_single(&mut self, l: usize, theta: Block, dir: Direction) -> Result<()> {
        let t = theta.as_tensor();
        match dir {
            Direction::Right if l + 1 < self.n() => {
                let (q, r) = qr(&t.left_matrix())?;
                self.tensors[l] = Tensor3::from_left_matrix(q);
                self.tensors[l + 1] = self.tensors[l + 1].absorb_left(&r)?;
                self.refresh_left(l);
            }
            Direction::Left if l > 0 => {
                let (q, r) = qr(&t.right_matrix().transpose())?;
                self.tensors[l] = Tensor3::from_right_matrix(q.transpose());
                self.tensors[l - 1] = self.tensors[l - 1].absorb_right(&r.transpose())?;
                self.refresh_right(l - 1);
            }
            _ => self.tensors[l] = t,
        }
        Ok(())
    }

    fn place_pair(&mut self, l: usize, theta: Block, dir: Direction) -> Result<()> {
        let (a, mut b, _) = split_two_site(&theta, dir, self.cfg.chi_max, self.cfg.split_eps)?;
        let mut a = a;
        // truncation loses weight; restore Z = 1 on the new center
        match dir {
            Direction::Right => {
                let nrm = b.data().iter().map(|v| v * v).sum::<f64>().sqrt();
                b = Tensor3::from_vec(b.left_dim(), b.right_dim(), b.data().iter().map(|v| v / nrm).collect())?;
            }
            Direction::Left => {
                let nrm = a.data().iter().map(|v| v * v).sum::<f64>().sqrt();
                a = Tensor3::from_vec(a.left_dim(), a.right_dim(), a.data().iter().map(|v| v / nrm).collect())?;
            }
        }
        self.tensors[l] = a;
        self.tensors[l + 1] = b;
        match dir {
            Direction::Right => self.refresh_left(l),
            Direction::Left => self.refresh_right(l),
        }
        Ok(())
    }

    /// One right pass and one left pass. Returns `false` on divergence.
    fn sweep(&mut self, sweep: usize, records: &mut Vec<UpdateRecord>) -> Result<bool> {
        let n = self.n();
        let s = self.cfg.block_size;
        let last = n - s;
        let right: Vec<usize> = (0..=last).collect();
        let left: Vec<usize> = if s == 1 {
            (0..last).rev().collect()
        } else {
            (0..=last).rev().collect()
        };
        for (pass, sites) in [(Direction::Right, right), (Direction::Left, left)] {
            for l in sites {
                let (theta, nll) = self.step(l)?;
                if !nll.is_finite() || theta.data.iter().any(|v| !v.is_finite()) {
                    return Ok(false);
                }
                // the last single-site update of the right pass hands the
                // center back to N-2 for the left pass
                let dir = if s == 1 && pass == Direction::Right && l == last {
                    Direction::Left
                } else {
                    pass
                };
                if s == 1 {
                    self.place_single(l, theta, dir)?;
                } else {
                    self.place_pair(l, theta, dir)?;
                }
                records.push(UpdateRecord {
                    sweep,
                    site: l,
                    nll,
                    max_bond: self.max_bond(),
                });
            }
        }
        Ok(true)
    }

    fn nll(&self) -> f64 {
        // center is at site 0 between sweeps
        let theta = &self.tensors[0];
        self.samples
            .iter()
            .enumerate()
            .map(|(k, bits)| {
                let a: f64 = (0..theta.right_dim())
                    .map(|b| theta.get(0, bits[0] as usize, b) * self.renv[0][k][b])
                    .sum();
                -(a * a).ln()
            })
            .sum::<f64>()
            / self.samples.len() as f64
    }

    fn to_mps(&self) -> Result<Mps> {
        mps::left_canonicalize(&Mps::new(self.tensors.clone())?)
    }
}

/// Trains from the random initial model drawn with `cfg.seed`.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let init = mps::random_mps(data.feature_length(), cfg.init_chi.unwrap_or(cfg.chi_max), cfg.seed)?;
    train_from(init, data, cfg)
}

/// Continues training `init`. Stops after `max_sweeps` or once a sweep's
/// relative NLL improvement falls below `convergence_tol`.
pub fn train_from(init: Mps, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.feature_length() != init.len() {
        return Err(Error::Shape(format!(
            "{}-bit data for {} sites",
            data.feature_length(),
            init.len()
        )));
    }
    if cfg.block_size > init.len() {
        return Err(Error::InvalidParameter(format!(
            "block size {} exceeds {} sites",
            cfg.block_size,
            init.len()
        )));
    }
    // no clock on wasm32-unknown-unknown
    let start = (!cfg!(target_arch = "wasm32")).then(Instant::now);
    let mut trainer = Trainer::new(init, data, cfg)?;
    let mut history = TrainHistory::default();
    let mut prev = trainer.nll();
    history.nll_per_sweep.push(prev);
    let mut good = trainer.tensors.clone();
    let mut status = TrainStatus::MaxSweeps;
    for sweep in 1..=cfg.max_sweeps {
        if !trainer.sweep(sweep, &mut history.updates)? {
            trainer.tensors = good;
            status = TrainStatus::Diverged {
                updates: history.updates.len(),
            };
            break;
        }
        let cur = trainer.nll();
        history.nll_per_sweep.push(cur);
        history
            .bond_dims_per_sweep
            .push(trainer.tensors[..trainer.n() - 1].iter().map(Tensor3::right_dim).collect());
        good = trainer.tensors.clone();
        let improvement = (prev - cur) / prev.abs().max(f64::MIN_POSITIVE);
        if cfg.halve_on_increase && cur > prev {
            trainer.eta *= 0.5;
        } else if improvement < cfg.convergence_tol {
            status = TrainStatus::Converged;
            break;
        }
        prev = cur;
    }
    history.wall_time_secs = start.map_or(0.0, |t| t.elapsed().as_secs_f64());
    Ok(TrainOutcome {
        mps: trainer.to_mps()?,
        history,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::one_hot_dataset;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            block_size: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            split_eps: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_step_is_identity() {
        let theta = Block {
            left: 1,
            right: 2,
            sites: 1,
            data: vec![0.1, 0.2, 0.3, 0.4],
        };
        let g = Block {
            data: vec![1.0, -1.0, 2.0, 0.5],
            ..theta.clone()
        };
        assert_eq!(update_block(&theta, &g, 0.0).unwrap(), theta);
        let zero = Block {
            data: vec![0.0; 4],
            ..theta.clone()
        };
        assert_eq!(update_block(&theta, &zero, 0.3).unwrap(), theta);
    }

    #[test]
    fn center_mismatch_rejected() {
        let m = mps::random_mps(4, 2, 0).unwrap();
        let ds = one_hot_dataset(&[1, 1, 1, 1]).unwrap();
        assert!(matches!(local_gradient(&m, &ds, 1, 1), Err(Error::Precondition(_))));
        let mixed = mps::mixed_canonicalize(&m, 2).unwrap();
        assert!(matches!(local_gradient(&mixed, &ds, 0, 1), Err(Error::Precondition(_))));
        assert!(local_gradient(&mixed, &ds, 2, 1).is_ok());
        assert!(local_gradient(&mixed, &ds, 1, 2).is_ok());
    }

    #[test]
    fn single_site_gradient_sign() {
        let t = Tensor3::from_vec(1, 1, vec![0.8, 0.6]).unwrap();
        let m = mps::mixed_canonicalize(&Mps::new(vec![t]).unwrap(), 0).unwrap();
        let ds = Dataset::from_text("1\n").unwrap();
        let g = local_gradient(&m, &ds, 0, 1).unwrap();
        let theta = Block::from_tensors(m.tensors(), 0, 1).unwrap();
        let mut next = update_block(&theta, &g, 0.1).unwrap();
        let nrm = next.norm_sq().sqrt();
        next.scale(1.0 / nrm);
        assert!(next.data[1].powi(2) > 0.36);
    }

    #[test]
    fn split_cases() {
        // product block: (1,0) ⊗ (0.6,0.8)
        let theta = Block {
            left: 1,
            right: 1,
            sites: 2,
            data: vec![0.0, 0.0, 0.6, 0.8],
        };
        let (a, b, w) = split_two_site(&theta, Direction::Right, 8, 0.0).unwrap();
        assert_eq!(a.right_dim(), 1);
        assert_eq!(w, 0.0);
        let rebuilt = Block::from_tensors(&[a, b], 0, 2).unwrap();
        for (x, y) in rebuilt.data.iter().zip(&theta.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_training_reaches_entropy() {
        let ds = one_hot_dataset(&[8, 18, 5]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            chi_max: 2,
            max_sweeps: 500,
            convergence_tol: 1e-12,
            seed: 1,
            ..Default::default()
        };
        let out = train(&ds, &cfg).unwrap();
        let final_nll = mps::nll(&out.mps, &ds).unwrap();
        assert!((final_nll - 0.95950).abs() < 1e-3, "nll {final_nll}");
        assert!(out.mps.is_left_canonical(1e-10));
        let entropy = ds.entropy();
        assert!(out.history.nll_per_update().iter().all(|&v| v >= entropy - 1e-12));
    }
}
