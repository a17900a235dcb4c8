#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnqaml::data::{BitVector, Dataset};
use tnqaml::mps::{self, Mps, Tensor3};
use tnqaml::numerics::RealMatrix;
use tnqaml::training::{local_gradient, Block};

pub fn random_dataset(n: usize, samples: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = (0..samples)
        .map(|_| BitVector::new((0..n).map(|_| rng.random_range(0..2u8)).collect()).unwrap())
        .collect();
    Dataset::new(xs).unwrap()
}

/// Model with the block at `l` replaced; a two-site block is stored as
/// `1 ⊗ Θ` so no decomposition is involved.
fn with_block(m: &Mps, l: usize, s: usize, data: &[f64]) -> Mps {
    let mut ts: Vec<Tensor3> = m.tensors().to_vec();
    let (left, right) = (ts[l].left_dim(), ts[l + s - 1].right_dim());
    if s == 1 {
        ts[l] = Tensor3::from_vec(left, right, data.to_vec()).unwrap();
    } else {
        ts[l] = Tensor3::from_left_matrix(RealMatrix::identity(2 * left));
        ts[l + 1] = Tensor3::from_right_matrix(RealMatrix::from_vec(2 * left, 2 * right, data.to_vec()).unwrap());
    }
    Mps::new(ts).unwrap()
}

/// Worst-entry relative error of the analytic block gradient against
/// five-point central differences of the mean log-likelihood.
pub fn gradient_fd_error(n: usize, chi: usize, s: usize, l: usize, seed: u64) -> f64 {
    let m = mps::mixed_canonicalize(&mps::random_mps(n, chi, seed).unwrap(), l).unwrap();
    let ds = random_dataset(n, 1 + (seed as usize % 5), seed ^ 0x9e37);
    let g = local_gradient(&m, &ds, l, s).unwrap();
    let theta = Block::from_tensors(m.tensors(), l, s).unwrap();
    let h = 1e-6;
    let ll = |d: &[f64]| -mps::nll(&with_block(&m, l, s, d), &ds).unwrap();
    let fd: Vec<f64> = (0..theta.data.len())
        .map(|i| {
            let at = |k: f64| {
                let mut p = theta.data.clone();
                p[i] += k * h;
                ll(&p)
            };
            (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * h)
        })
        .collect();
    let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-8);
    g.data
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max)
}

/// Normalized Born table.
pub fn born_table(m: &Mps) -> Vec<f64> {
    let t = mps::probability_table(m).unwrap();
    let z: f64 = t.iter().sum();
    t.into_iter().map(|v| v / z).collect()
}
