//! Acceptance checks. Runs as a plain binary and prints one PASS/FAIL line
//! per criterion; exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnqaml::benchmark::{exact_isometries, exact_mps, BenchmarkSpec};
use tnqaml::circuit::{circuit_matrix, cnot_count, expand_motifs, gate_matrix, Circuit, Gate, Topology};
use tnqaml::compiler::{compile_isometry, CompileConfig, CompileResult};
use tnqaml::data::{
    binarize, max_pool_2x2, one_hot_dataset, parse_idx, preprocess_mnist, serialize_idx_images,
    serialize_idx_labels, synthetic, Dataset, GrayImage, IdxData, DEFAULT_THRESHOLD,
};
use tnqaml::gauge::{default_center, to_diagonal_gauge};
use tnqaml::metrics::{
    bitstring, convex_kl, counts_to_distribution, jackknife, measurement_filter, total_variation, Counts,
    Distribution,
};
use tnqaml::mps::{extract_isometries, left_canonicalize, random_mps, Isometry, Mps};
use tnqaml::simulator::{readout_confusion, run_sequential_exact, run_sequential_shots, NoiseModel};
use tnqaml::training::{train, TrainConfig, TrainStatus};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn benchmark_spec() -> BenchmarkSpec {
    BenchmarkSpec::from_counts(&[8, 18, 5]).unwrap()
}

/// Closed-form isometries from the cumulative weights `P_j = Σ_{i≤j} p_i`.
fn closed_form(p: &[f64]) -> Vec<Vec<(usize, usize, f64)>> {
    let n = p.len();
    let mut cum = 0.0;
    (0..n)
        .map(|j| {
            let prev = cum;
            cum += p[j];
            let (s, c) = ((p[j] / cum).sqrt(), (prev / cum).sqrt());
            if j == n - 1 {
                vec![(1, 0, s), (2, 0, c)]
            } else {
                vec![(0, 0, 1.0), (1, 2, s), (2, 2, c)]
            }
        })
        .collect()
}

/// Largest entry deviation over defined columns, allowing a sign per column.
fn deviation_up_to_signs(iso: &Isometry, expected: &[(usize, usize, f64)]) -> f64 {
    let dim = iso.dim();
    let mut target = vec![vec![0.0; dim]; dim];
    for &(r, c, v) in expected {
        target[r][c] = v;
    }
    iso.defined_columns()
        .into_iter()
        .map(|c| {
            let dev = |sign: f64| {
                (0..dim)
                    .map(|r| (iso.matrix[(r, c)] - sign * target[r][c]).abs())
                    .fold(0.0, f64::max)
            };
            dev(1.0).min(dev(-1.0))
        })
        .fold(0.0, f64::max)
}

fn c1_closed_forms() -> Check {
    let spec = benchmark_spec();
    let t = Instant::now();
    let isos = extract_isometries(&left_canonicalize(&exact_mps(&spec).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed().as_secs_f64();
    let expected = closed_form(&spec.p);
    let dev = isos.iter().zip(&expected).map(|(i, e)| deviation_up_to_signs(i, e)).fold(0.0, f64::max);
    let built = exact_isometries(&spec).map_err(|e| e.to_string())?;
    let dev_built = built.iter().zip(&expected).map(|(i, e)| deviation_up_to_signs(i, e)).fold(0.0, f64::max);
    ensure(
        dev < 1e-10 && dev_built < 1e-10 && elapsed < 1.0,
        format!("canonicalized dev {dev:.2e}, constructor dev {dev_built:.2e}, {elapsed:.3}s"),
    )
}

fn digits() -> Dataset {
    let imgs = synthetic::digit_images(&synthetic::MNIST_FIRST_TEN_LABELS, 0);
    Dataset::new(imgs.iter().map(|i| preprocess_mnist(i, DEFAULT_THRESHOLD).unwrap()).collect()).unwrap()
}

fn digit_config(chi: usize, seed: u64, sweeps: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        block_size: 2,
        chi_max: chi,
        init_chi: Some(2),
        split_eps: 1e-10,
        max_sweeps: sweeps,
        seed,
        convergence_tol: 1e-12,
        ..Default::default()
    }
}

/// Trains the χ=8 digit model shared by criteria 2 and 7.
fn chi8_model() -> Result<(Mps, f64, TrainStatus), String> {
    let ds = digits();
    let out = train(&ds, &digit_config(8, 7, 1500)).map_err(|e| e.to_string())?;
    let nll = tnqaml::mps::nll(&out.mps, &ds).map_err(|e| e.to_string())?;
    Ok((out.mps, nll, out.status))
}

fn c2_training(chi8: &Result<(Mps, f64, TrainStatus), String>) -> Check {
    let t = Instant::now();
    let counts = [8usize, 18, 5];
    let total: usize = counts.iter().sum();
    let oracle: f64 = counts
        .iter()
        .map(|&c| c as f64 / total as f64)
        .map(|p| -p * p.ln())
        .sum();
    let ds = one_hot_dataset(&counts).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        chi_max: 2,
        max_sweeps: 500,
        convergence_tol: 1e-12,
        seed: 1,
        ..Default::default()
    };
    let out = train(&ds, &cfg).map_err(|e| e.to_string())?;
    let nll2 = tnqaml::mps::nll(&out.mps, &ds).map_err(|e| e.to_string())?;
    let ok2 = (nll2 - oracle).abs() < 1e-3 && (nll2 - 0.95950).abs() < 1e-3;

    let ds = digits();
    let floor = (ds.len() as f64).ln();
    let target = floor + 0.05;
    let mut reached = None;
    for seed in [7u64, 0, 1, 2, 3] {
        let out = train(&ds, &digit_config(16, seed, 500)).map_err(|e| e.to_string())?;
        if let Some(k) = out.history.nll_per_sweep.iter().position(|&v| v <= target) {
            reached = Some((seed, k, out.history.nll_per_sweep[k]));
            break;
        }
    }
    let (_, nll8, _) = chi8.as_ref().map_err(|e| e.clone())?;
    let ok8 = *nll8 > floor + 1e-3;
    ensure(
        ok2 && reached.is_some() && ok8,
        format!(
            "chi=2 NLL {nll2:.5} (oracle {oracle:.5}); chi=16 {}; chi=8 plateau {nll8:.4} vs ln10 {floor:.4}; {:.0}s",
            match reached {
                Some((s, k, v)) => format!("seed {s} reached {v:.4} at sweep {k}"),
                None => format!("no seed reached {target:.4}"),
            },
            t.elapsed().as_secs_f64()
        ),
    )
}

fn c3_gradients() -> Check {
    let mut worst = [0.0f64; 2];
    let mut count = [0usize; 2];
    for seed in 0..120u64 {
        let n = 2 + (seed % 4) as usize;
        let chi = 1 + (seed / 4 % 4) as usize;
        for s in [1usize, 2] {
            let l = (seed as usize * 7) % (n + 1 - s);
            worst[s - 1] = worst[s - 1].max(common::gradient_fd_error(n, chi, s, l, seed));
            count[s - 1] += 1;
        }
    }
    ensure(
        worst.iter().all(|&w| w < 1e-5),
        format!("s=1 worst {:.2e} over {}, s=2 worst {:.2e} over {}", worst[0], count[0], worst[1], count[1]),
    )
}

fn c4_gauge() -> Check {
    let (mut dp, mut resid, mut cases) = (0.0f64, 0.0f64, 0);
    for seed in 0..40u64 {
        let n = 2 + (seed % 7) as usize;
        let chi = 1 + (seed / 7 % 4) as usize;
        let m = left_canonicalize(&random_mps(n, chi, seed).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let k = (seed as usize * 5) % n;
        let (g, _) = to_diagonal_gauge(&m, k).map_err(|e| e.to_string())?;
        for (a, b) in common::born_table(&m).iter().zip(common::born_table(&g)) {
            dp = dp.max((a - b).abs());
        }
        for t in g.tensors() {
            resid = resid.max(t.left_orthogonality_residual());
        }
        cases += 1;
    }
    ensure(
        dp < 1e-10 && resid < 1e-10,
        format!("max |Δp| {dp:.2e}, canonical residual {resid:.2e} over {cases} models"),
    )
}

fn c5_motifs() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut err, mut counts_ok) = (0.0f64, true);
    for _ in 0..100 {
        let (t, tp) = (rng.random_range(-6.3..6.3), rng.random_range(-6.3..6.3));
        for (g, n, want) in [
            (Gate::S { q1: 0, q2: 1, theta: t, theta_p: tp }, 2, 2),
            (Gate::F { c: 0, q1: 1, q2: 2, theta: t, theta_p: tp }, 3, 8),
        ] {
            let c = expand_motifs(&Circuit::from_gates(n, vec![g]).unwrap()).map_err(|e| e.to_string())?;
            counts_ok &= cnot_count(&c) == want;
            err = err.max(circuit_matrix(&c).unwrap().max_abs_diff(&gate_matrix(&g, n).unwrap()));
        }
    }
    ensure(err < 1e-10 && counts_ok, format!("max matrix error {err:.2e}, CNOT counts 2/8: {counts_ok}"))
}

fn compile_benchmark() -> Result<Vec<(CompileResult, f64)>, String> {
    let topo = Topology::all_to_all(2);
    exact_isometries(&benchmark_spec())
        .map_err(|e| e.to_string())?
        .iter()
        .map(|iso| {
            let t = Instant::now();
            let r = compile_isometry(iso, &topo, &CompileConfig::default()).map_err(|e| e.to_string())?;
            Ok((r, t.elapsed().as_secs_f64()))
        })
        .collect()
}

fn c6_benchmark_compile(compiled: &Result<Vec<(CompileResult, f64)>, String>) -> Check {
    let rs = compiled.as_ref().map_err(|e| e.clone())?;
    let ok = rs.iter().all(|(r, t)| r.converged && r.cost < 5e-4 && r.cnots <= 3 && *t < 60.0);
    let parts: Vec<String> = rs
        .iter()
        .map(|(r, t)| format!("site {}: cost {:.1e}, {} CNOTs, {t:.2}s", r.site, r.cost, r.cnots))
        .collect();
    ensure(ok, parts.join("; "))
}

/// Plain CNOT search; the budget exceeds the bound so a miss reports its count.
fn c7_config() -> CompileConfig {
    CompileConfig {
        use_s: false,
        use_f: false,
        beam_schedule: vec![4, 2],
        max_entanglers: 40,
        ..Default::default()
    }
}

fn c7_chi8_compile(chi8: &Result<(Mps, f64, TrainStatus), String>) -> Check {
    let (m, _, _) = chi8.as_ref().map_err(|e| e.clone())?;
    let (g, _) = to_diagonal_gauge(m, default_center(m)).map_err(|e| e.to_string())?;
    let isos = extract_isometries(&g).map_err(|e| e.to_string())?;
    let iso = isos
        .iter()
        .find(|i| (i.chi_in.min(i.chi_out), i.chi_in.max(i.chi_out)) == (7, 8))
        .ok_or("no isometry with bond dims (7, 8)")?;
    let t = Instant::now();
    let r = compile_isometry(iso, &Topology::all_to_all(iso.n_qubits), &c7_config()).map_err(|e| e.to_string())?;
    ensure(
        r.converged && r.cnots <= 30,
        format!(
            "site {} ({}→{}): cost {:.2e}, {} CNOTs, converged {}, {:.0}s",
            iso.site,
            iso.chi_in,
            iso.chi_out,
            r.cost,
            r.cnots,
            r.converged,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn c8_fidelity(compiled: &Result<Vec<(CompileResult, f64)>, String>) -> Check {
    let rs = compiled.as_ref().map_err(|e| e.clone())?;
    let circuits: Vec<Circuit> = rs.iter().map(|(r, _)| r.circuit.clone()).collect();
    let ideal = benchmark_spec().distribution();
    let counts = run_sequential_shots(&circuits, &NoiseModel::ideal(), 1 << 13, 0).map_err(|e| e.to_string())?;
    let tv_shots = total_variation(&ideal, &counts_to_distribution(&counts).map_err(|e| e.to_string())?);
    let exact = run_sequential_exact(&circuits, &NoiseModel::ideal()).map_err(|e| e.to_string())?;
    let tv_exact = total_variation(&ideal, &exact);
    ensure(
        tv_shots < 0.05 && tv_exact < 0.03,
        format!("TV sampled {tv_shots:.4} (8192 shots), exact {tv_exact:.2e}"),
    )
}

fn random_two_qubit_circuit(rng: &mut ChaCha8Rng) -> Circuit {
    let mut gates = Vec::new();
    for _ in 0..4 {
        gates.push(Gate::Ry { q: 0, theta: rng.random_range(-3.0..3.0) });
        gates.push(Gate::Ry { q: 1, theta: rng.random_range(-3.0..3.0) });
        let c = rng.random_range(0..2);
        gates.push(Gate::Cnot { control: c, target: 1 - c });
    }
    Circuit::from_gates(2, gates).unwrap()
}

fn c9_noise() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let shots = 100_000u64;
    let mut worst_sigma = 0.0f64;
    for trial in 0..3 {
        let circuits: Vec<Circuit> = (0..3).map(|_| random_two_qubit_circuit(&mut rng)).collect();
        let noise = NoiseModel::new(0.05, 0.02).map_err(|e| e.to_string())?;
        let exact = run_sequential_exact(&circuits, &noise).map_err(|e| e.to_string())?;
        let counts = run_sequential_shots(&circuits, &noise, shots, trial).map_err(|e| e.to_string())?;
        for x in 0..8 {
            let label = bitstring(x, 3);
            let p = exact.get(&label);
            let f = counts.get(&label) as f64 / shots as f64;
            let sigma = (p * (1.0 - p) / shots as f64).sqrt().max(1e-12);
            worst_sigma = worst_sigma.max((f - p).abs() / sigma);
        }
    }

    let rs = compile_benchmark()?;
    let circuits: Vec<Circuit> = rs.iter().map(|(r, _)| r.circuit.clone()).collect();
    let ideal = benchmark_spec().distribution();
    let grid = [0.0, 0.005, 0.01, 0.02, 0.04];
    let mut exact_kl = Vec::new();
    let mut sampled = Vec::new();
    for &xi2 in &grid {
        let noise = NoiseModel::new(xi2, 0.0).map_err(|e| e.to_string())?;
        exact_kl.push(convex_kl(&ideal, &run_sequential_exact(&circuits, &noise).map_err(|e| e.to_string())?));
        let runs = (0..5u64)
            .map(|r| run_sequential_shots(&circuits, &noise, 1 << 13, 100 + r))
            .collect::<tnqaml::Result<Vec<Counts>>>()
            .map_err(|e| e.to_string())?;
        let kl = |rs: &[Counts]| {
            let pooled = rs.iter().cloned().fold(Counts::new(), Counts::merge);
            convex_kl(&ideal, &counts_to_distribution(&pooled).unwrap())
        };
        let j = jackknife(&runs, kl).map_err(|e| e.to_string())?;
        sampled.push((kl(&runs), j.variance.sqrt()));
    }
    let exact_mono = exact_kl.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let sampled_mono = sampled
        .windows(2)
        .all(|w| w[1].0 >= w[0].0 - 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
    ensure(
        worst_sigma < 3.0 && exact_mono && sampled_mono,
        format!(
            "trajectory vs Kraus worst {worst_sigma:.2}σ at 1e5 shots; KL exact {:?}; sampled {:?}",
            exact_kl.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            sampled.iter().map(|(v, e)| format!("{v:.4}±{e:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn c10_metrics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut self_kl = 0.0f64;
    for _ in 0..20 {
        let w: Vec<f64> = (0..8).map(|_| rng.random_range(0.01..1.0)).collect();
        let z: f64 = w.iter().sum();
        let p = Distribution::from_dense(3, &w.iter().map(|v| v / z).collect::<Vec<_>>()).unwrap();
        self_kl = self_kl.max(convex_kl(&p, &p).abs());
    }
    let worked = convex_kl(
        &Distribution::from_dense(1, &[0.5, 0.5]).unwrap(),
        &Distribution::from_dense(1, &[0.25, 0.75]).unwrap(),
    );

    let xs: Vec<f64> = (0..12).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let j = jackknife(&xs, mean).map_err(|e| e.to_string())?;
    let jk_err = (j.bias_corrected - mean(&xs)).abs();

    let (n, zeta, shots) = (3usize, 0.03, 1_000_000u64);
    let truth = [0.05, 0.3, 0.1, 0.05, 0.2, 0.1, 0.15, 0.05];
    let mut counts = Counts::new();
    let mut tally = vec![0u64; 8];
    for _ in 0..shots {
        let u: f64 = rng.random();
        let mut x = 0;
        let mut acc = truth[0];
        while u >= acc && x < 7 {
            x += 1;
            acc += truth[x];
        }
        let mut y = 0;
        for q in 0..n {
            let b = x >> q & 1;
            let flip = if b == 0 { zeta } else { 2.0 * zeta };
            let out = if rng.random::<f64>() < flip { 1 - b } else { b };
            y |= out << q;
        }
        tally[y] += 1;
    }
    for (y, &c) in tally.iter().enumerate() {
        counts.add(bitstring(y, n), c);
    }
    let filtered = measurement_filter(&counts, &readout_confusion(zeta, n).map_err(|e| e.to_string())?, n)
        .map_err(|e| e.to_string())?;
    let tv = total_variation(&Distribution::from_dense(n, &truth).unwrap(), &filtered.distribution);
    let raw_tv = total_variation(
        &Distribution::from_dense(n, &truth).unwrap(),
        &counts_to_distribution(&counts).map_err(|e| e.to_string())?,
    );
    ensure(
        self_kl < 1e-12 && (worked - 0.143841).abs() < 1e-6 && jk_err < 1e-12 && tv < 0.01,
        format!(
            "KL(p,p) {self_kl:.1e}; worked {worked:.6}; jackknife linear error {jk_err:.1e}; filtered TV {tv:.4} (raw {raw_tv:.4})"
        ),
    )
}

fn c11_pipeline() -> Check {
    let imgs = synthetic::digit_images(&synthetic::MNIST_FIRST_TEN_LABELS, 0);
    let mut shapes_ok = true;
    let mut bits_ok = true;
    for img in &imgs {
        let p1 = max_pool_2x2(img).map_err(|e| e.to_string())?;
        let p2 = max_pool_2x2(&p1).map_err(|e| e.to_string())?;
        shapes_ok &= (img.height, img.width, p1.height, p1.width, p2.height, p2.width) == (28, 28, 14, 14, 7, 7);
        // two 2×2 pools equal one 4×4 pool
        let direct: Vec<u8> = (0..49)
            .map(|k| {
                let (r, c) = (k / 7, k % 7);
                let m = (0..16).map(|d| img.get(4 * r + d / 4, 4 * c + d % 4)).max().unwrap();
                u8::from(m as u16 >= DEFAULT_THRESHOLD)
            })
            .collect();
        let x = preprocess_mnist(img, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
        bits_ok &= x.bits() == direct.as_slice() && binarize(&p2, DEFAULT_THRESHOLD) == x;
    }
    let bytes = serialize_idx_images(&imgs).map_err(|e| e.to_string())?;
    let header_ok = bytes[..16] == [0, 0, 8, 3, 0, 0, 0, 10, 0, 0, 0, 28, 0, 0, 0, 28];
    let img_rt = parse_idx(&bytes).map_err(|e| e.to_string())? == IdxData::Images(imgs.clone());
    let labels = synthetic::MNIST_FIRST_TEN_LABELS.to_vec();
    let lab_rt = parse_idx(&serialize_idx_labels(&labels)).map_err(|e| e.to_string())? == IdxData::Labels(labels);
    let odd = GrayImage::new(3, 5, (0..15).collect()).unwrap();
    let odd_rt = parse_idx(&serialize_idx_images(std::slice::from_ref(&odd)).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?
        == IdxData::Images(vec![odd]);
    ensure(
        shapes_ok && bits_ok && header_ok && img_rt && lab_rt && odd_rt,
        format!(
            "28x28→14x14→7x7 {shapes_ok}; 49-bit features match 4x4 pooling {bits_ok}; IDX header {header_ok}, images {img_rt}, labels {lab_rt}, 3x5 {odd_rt}"
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let chi8 = chi8_model();
    let compiled = compile_benchmark();
    let checks: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("1 closed-form isometries", Box::new(c1_closed_forms)),
        ("2 training floor", Box::new(|| c2_training(&chi8))),
        ("3 gradient correctness", Box::new(c3_gradients)),
        ("4 gauge invariance", Box::new(c4_gauge)),
        ("5 motif identities", Box::new(c5_motifs)),
        ("6 benchmark compilation", Box::new(|| c6_benchmark_compile(&compiled))),
        ("7 chi 7/8 compilation", Box::new(|| c7_chi8_compile(&chi8))),
        ("8 end-to-end fidelity", Box::new(|| c8_fidelity(&compiled))),
        ("9 noise model", Box::new(c9_noise)),
        ("10 metrics", Box::new(c10_metrics)),
        ("11 preprocessing and IDX", Box::new(c11_pipeline)),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        match check() {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.0}s",
        checks.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
