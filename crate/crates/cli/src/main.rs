//! `tnqaml`: ingest → train → gauge → compile → simulate → evaluate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use tnqaml::benchmark::{run_exact_benchmark, BenchmarkConfig};
use tnqaml::circuit::{export_qasm, parse_qasm, Circuit, Topology};
use tnqaml::compiler::{compile_isometry_with_progress, CompileConfig, CompileReportEntry};
use tnqaml::data::{self, synthetic, Dataset, IdxData};
use tnqaml::gauge::{default_center, to_diagonal_gauge};
use tnqaml::metrics::{
    convex_kl, counts_to_distribution, jackknife, measurement_filter, total_variation, Counts, Distribution,
};
use tnqaml::mps::{self, Mps};
use tnqaml::simulator::{circuit_hash, readout_confusion, run_sequential_shots, NoiseModel};
use tnqaml::training::{train, TrainConfig, TrainStatus};

const REPORT_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "tnqaml", version, about = "MPS Born machine training, compilation and simulation")]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for compilation and shot simulation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build `dataset.txt` from the configured source.
    Ingest,
    /// Train an MPS on a dataset.
    Train(InputArg),
    /// Bring a model into diagonal gauge.
    Gauge(GaugeArgs),
    /// Compile every site of a model into circuits.
    Compile(CompileArgs),
    /// Sample compiled circuits over the noise grid.
    Simulate(InputArg),
    /// Divergences of simulated counts against an ideal distribution.
    Evaluate(EvaluateArgs),
    /// Run the exactly solvable benchmark end to end.
    Benchmark,
}

#[derive(Args, Debug)]
struct InputArg {
    /// Input file or directory (defaults to the previous stage's output).
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GaugeArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    center: Option<usize>,
}

#[derive(Args, Debug)]
struct CompileArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Topology preset (`line-N`, `all-to-all-N`, `star-5`, `t-5`) or JSON file.
    #[arg(long)]
    topology: Option<String>,
    #[arg(long)]
    center: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Ideal distribution: model (`.mps`), dataset (`.txt`) or counts (`.csv`).
    #[arg(long)]
    ideal: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DatasetSource {
    Idx {
        images: PathBuf,
        #[serde(default)]
        count: Option<usize>,
        #[serde(default = "default_threshold")]
        threshold: u16,
    },
    Text {
        path: PathBuf,
    },
    OneHot {
        counts: Vec<usize>,
    },
    Synthetic {
        #[serde(default = "default_labels")]
        labels: Vec<u8>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_threshold")]
        threshold: u16,
    },
}

fn default_threshold() -> u16 {
    128
}

fn default_labels() -> Vec<u8> {
    synthetic::MNIST_FIRST_TEN_LABELS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CompressConfig {
    chi_max: Option<usize>,
    eps: f64,
}

impl Default for CompressConfig {
    fn default() -> Self {
        CompressConfig { chi_max: None, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct NoiseGrid {
    xi2: Vec<f64>,
    zeta: Vec<f64>,
}

impl Default for NoiseGrid {
    fn default() -> Self {
        NoiseGrid {
            xi2: vec![0.0],
            zeta: vec![0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PipelineConfig {
    dataset: DatasetSource,
    train: TrainConfig,
    gauge_center: Option<usize>,
    compress: CompressConfig,
    compile: CompileConfig,
    /// Preset name or JSON file; `None` means all-to-all on the register.
    topology: Option<String>,
    noise: NoiseGrid,
    shots: u64,
    runs: usize,
    seed: u64,
    out: PathBuf,
    benchmark: BenchmarkConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: DatasetSource::OneHot { counts: vec![8, 18, 5] },
            train: TrainConfig::default(),
            gauge_center: None,
            compress: CompressConfig::default(),
            compile: CompileConfig::default(),
            topology: None,
            noise: NoiseGrid::default(),
            shots: 1 << 13,
            runs: 1,
            seed: 0,
            out: PathBuf::from("out"),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Numeric(anyhow::Error),
    NotConverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::NotConverged(_) => 4,
        }
    }
}

impl From<tnqaml::Error> for Failure {
    fn from(e: tnqaml::Error) -> Self {
        use tnqaml::Error as E;
        match e {
            E::InvalidInput(_) | E::Parse { .. } | E::Io(_) | E::InvalidParameter(_) | E::Shape(_) | E::Index(_) => {
                Failure::Config(e.into())
            }
            _ => Failure::Numeric(e.into()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn load_config(cli: &Cli) -> std::result::Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))
                .map_err(config_err)?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", p.display()))
                .map_err(config_err)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.train.seed = s;
        cfg.compile.seed = s;
        cfg.benchmark.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if cfg.noise.xi2.is_empty() || cfg.noise.zeta.is_empty() {
        return Err(config_err(anyhow!("noise grid must be nonempty")));
    }
    if cfg.shots == 0 || cfg.runs == 0 {
        return Err(config_err(anyhow!("shots and runs must be ≥ 1")));
    }
    cfg.train.validate()?;
    cfg.compile.validate()?;
    Ok(cfg)
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::result::Result<(), Failure> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(config_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(config_err)?;
    tmp.write_all(bytes).map_err(config_err)?;
    tmp.persist(path)
        .map_err(|e| config_err(anyhow!("writing {}: {}", path.display(), e.error)))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(config_err)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read(path: &Path) -> std::result::Result<Vec<u8>, Failure> {
    std::fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)
}

fn read_text(path: &Path) -> std::result::Result<String, Failure> {
    String::from_utf8(read(path)?).map_err(|e| config_err(anyhow!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> std::result::Result<Mps, Failure> {
    mps::from_bytes(&read(path)?)
        .with_context(|| format!("loading model {}", path.display()))
        .map_err(config_err)
}

fn ingest(cfg: &PipelineConfig) -> Outcome {
    let ds = match &cfg.dataset {
        DatasetSource::Idx { images, count, threshold } => {
            let imgs = match data::parse_idx(&read(images)?)? {
                IdxData::Images(v) => v,
                IdxData::Labels(_) => return Err(config_err(anyhow!("{} holds labels", images.display()))),
            };
            let take = count.unwrap_or(imgs.len()).min(imgs.len());
            let samples = imgs[..take]
                .iter()
                .map(|img| data::preprocess_mnist(img, *threshold))
                .collect::<tnqaml::Result<Vec<_>>>()?;
            Dataset::new(samples)?
        }
        DatasetSource::Text { path } => Dataset::from_text(&read_text(path)?)?,
        DatasetSource::OneHot { counts } => data::one_hot_dataset(counts)?,
        DatasetSource::Synthetic { labels, seed, threshold } => {
            let samples = synthetic::digit_images(labels, *seed)
                .iter()
                .map(|img| data::preprocess_mnist(img, *threshold))
                .collect::<tnqaml::Result<Vec<_>>>()?;
            Dataset::new(samples)?
        }
    };
    write_atomic(&cfg.out.join("dataset.txt"), ds.to_text().as_bytes())?;
    let distinct = ds.empirical().len();
    write_json(
        &cfg.out.join("ingest.json"),
        &serde_json::json!({
            "format_version": REPORT_VERSION,
            "samples": ds.len(),
            "feature_length": ds.feature_length(),
            "distinct": distinct,
            "entropy": ds.entropy(),
        }),
    )?;
    eprintln!("{} samples of {} bits ({distinct} distinct)", ds.len(), ds.feature_length());
    Ok(())
}

fn cmd_train(cfg: &PipelineConfig, input: Option<PathBuf>) -> Outcome {
    let path = input.unwrap_or_else(|| cfg.out.join("dataset.txt"));
    let ds = Dataset::from_text(&read_text(&path)?)?;
    let out = train(&ds, &cfg.train)?;
    let final_nll = mps::nll(&out.mps, &ds)?;
    write_atomic(&cfg.out.join("model.mps"), &mps::to_bytes(&out.mps))?;
    write_atomic(&cfg.out.join("train_log.csv"), out.history.to_csv().as_bytes())?;
    write_json(
        &cfg.out.join("train.json"),
        &serde_json::json!({
            "format_version": REPORT_VERSION,
            "status": out.status,
            "sweeps": out.history.sweeps(),
            "final_nll": final_nll,
            "entropy": ds.entropy(),
            "bond_dims": out.mps.bond_dims(),
            "config": cfg.train,
        }),
    )?;
    eprintln!("trained {} sweeps, NLL {final_nll:.6}", out.history.sweeps());
    match out.status {
        TrainStatus::Diverged { updates } => Err(Failure::Numeric(anyhow!(
            "training diverged after {updates} updates; last good model written"
        ))),
        _ => Ok(()),
    }
}

fn cmd_gauge(cfg: &PipelineConfig, args: GaugeArgs) -> Outcome {
    let path = args.input.unwrap_or_else(|| cfg.out.join("model.mps"));
    let model = mps::left_canonicalize(&load_model(&path)?)?;
    let k = args.center.or(cfg.gauge_center).unwrap_or_else(|| default_center(&model));
    let (g, report) = to_diagonal_gauge(&model, k)?;
    write_atomic(&cfg.out.join("gauged.mps"), &mps::to_bytes(&g))?;
    write_json(&cfg.out.join("gauge.json"), &report)
}

fn resolve_topology(spec: Option<&str>, n_qubits: usize) -> std::result::Result<Topology, Failure> {
    match spec {
        None => Ok(Topology::all_to_all(n_qubits)),
        Some(s) if Path::new(s).is_file() => Ok(Topology::from_json(&read_text(Path::new(s))?)?),
        Some(s) => Ok(Topology::preset(s)?),
    }
}

#[derive(Serialize)]
struct CompileReport {
    format_version: u32,
    center: usize,
    sites: Vec<CompileReportEntry>,
    failures: BTreeMap<usize, String>,
    total_cnots: usize,
    max_cost: f64,
    all_converged: bool,
}

fn cmd_compile(cfg: &PipelineConfig, args: CompileArgs) -> Outcome {
    let path = args.input.unwrap_or_else(|| cfg.out.join("model.mps"));
    let model = load_model(&path)?;
    let chi = cfg.compress.chi_max.unwrap_or_else(|| model.max_bond());
    let cleaned = mps::left_canonicalize(&mps::compress(&model, chi, cfg.compress.eps)?)?;
    let k = args.center.or(cfg.gauge_center).unwrap_or_else(|| default_center(&cleaned));
    let (g, _) = to_diagonal_gauge(&cleaned, k)?;
    let isos = mps::extract_isometries(&g)?;
    let topo = resolve_topology(args.topology.as_deref().or(cfg.topology.as_deref()), isos[0].n_qubits)?;
    let dir = cfg.out.join("circuits");
    let mut report = CompileReport {
        format_version: REPORT_VERSION,
        center: k,
        sites: vec![],
        failures: BTreeMap::new(),
        total_cnots: 0,
        max_cost: 0.0,
        all_converged: true,
    };
    for iso in &isos {
        let mut progress = |l: &tnqaml::compiler::LevelInfo| {
            eprintln!(
                "site {}: level {} best cost {:.3e} ({} CNOTs)",
                iso.site, l.level, l.best_cost, l.best_cnots
            )
        };
        match compile_isometry_with_progress(iso, &topo, &cfg.compile, &mut progress) {
            Ok(r) => {
                write_atomic(&dir.join(format!("site_{:03}.qasm", iso.site)), export_qasm(&r.circuit)?.as_bytes())?;
                write_json(&dir.join(format!("raw_site_{:03}.json", iso.site)), &r.raw)?;
                report.total_cnots += r.cnots;
                report.max_cost = report.max_cost.max(r.cost);
                report.all_converged &= r.converged;
                report.sites.push(r.report());
            }
            Err(e) => {
                report.failures.insert(iso.site, e.to_string());
                report.all_converged = false;
            }
        }
    }
    write_json(&cfg.out.join("compile_report.json"), &report)?;
    eprintln!(
        "{} sites, {} CNOTs, max cost {:.3e}",
        report.sites.len(),
        report.total_cnots,
        report.max_cost
    );
    if !report.failures.is_empty() {
        return Err(Failure::Numeric(anyhow!("sites failed to compile: {:?}", report.failures)));
    }
    let pending: Vec<usize> = report.sites.iter().filter(|s| !s.converged).map(|s| s.site).collect();
    if pending.is_empty() {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!("sites not converged: {pending:?}")))
    }
}

fn load_circuits(dir: &Path) -> std::result::Result<Vec<Circuit>, Failure> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))
        .map_err(config_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("site_") && n.ends_with(".qasm"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(config_err(anyhow!("no site_*.qasm files in {}", dir.display())));
    }
    files
        .iter()
        .map(|f| {
            parse_qasm(&read_text(f)?)
                .with_context(|| format!("parsing {}", f.display()))
                .map_err(config_err)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Cell {
    xi2: f64,
    zeta: f64,
    files: Vec<String>,
    error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SimulateManifest {
    format_version: u32,
    shots: u64,
    runs: usize,
    seed: u64,
    n_sites: usize,
    circuit_hashes: Vec<String>,
    cells: Vec<Cell>,
}

fn cmd_simulate(cfg: &PipelineConfig, input: Option<PathBuf>) -> Outcome {
    let dir = input.unwrap_or_else(|| cfg.out.join("circuits"));
    let circuits = load_circuits(&dir)?;
    let counts_dir = cfg.out.join("counts");
    let mut cells = Vec::new();
    for &xi2 in &cfg.noise.xi2 {
        for &zeta in &cfg.noise.zeta {
            let mut cell = Cell {
                xi2,
                zeta,
                files: vec![],
                error: None,
            };
            let result = NoiseModel::new(xi2, zeta).and_then(|noise| {
                (0..cfg.runs)
                    .map(|r| run_sequential_shots(&circuits, &noise, cfg.shots, cfg.seed.wrapping_add(r as u64)))
                    .collect::<tnqaml::Result<Vec<_>>>()
            });
            match result {
                Ok(runs) => {
                    for (r, c) in runs.iter().enumerate() {
                        let name = format!("xi2_{xi2}_zeta_{zeta}_run_{r:02}.csv");
                        write_atomic(&counts_dir.join(&name), c.to_csv().as_bytes())?;
                        cell.files.push(name);
                    }
                }
                Err(e) => {
                    eprintln!("cell xi2={xi2} zeta={zeta} failed: {e}");
                    cell.error = Some(e.to_string());
                }
            }
            cells.push(cell);
        }
    }
    write_json(
        &counts_dir.join("manifest.json"),
        &SimulateManifest {
            format_version: REPORT_VERSION,
            shots: cfg.shots,
            runs: cfg.runs,
            seed: cfg.seed,
            n_sites: circuits.len(),
            circuit_hashes: circuits.iter().map(circuit_hash).collect(),
            cells,
        },
    )
}

fn load_ideal(path: &Path) -> std::result::Result<Distribution, Failure> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "mps" => {
            let m = load_model(path)?;
            let table = mps::probability_table(&m)?;
            let z: f64 = table.iter().sum();
            let p: Vec<f64> = table.iter().map(|v| v / z).collect();
            Ok(Distribution::from_dense(m.len(), &p)?)
        }
        "csv" => Ok(counts_to_distribution(&Counts::from_csv(&read_text(path)?)?)?),
        _ => {
            let ds = Dataset::from_text(&read_text(path)?)?;
            let map = ds.empirical().into_iter().map(|(b, p)| (b.to_string(), p)).collect();
            Ok(Distribution::from_map(map)?)
        }
    }
}

/// Largest site count for which the readout confusion matrix is inverted.
const FILTER_MAX_SITES: usize = 10;

#[derive(Debug, Clone, Serialize)]
struct EvalRow {
    xi2: f64,
    zeta: f64,
    kl: f64,
    kl_jackknife: Option<f64>,
    kl_stderr: Option<f64>,
    tv: f64,
    kl_filtered: Option<f64>,
}

fn pooled(runs: &[Counts]) -> Counts {
    runs.iter().cloned().fold(Counts::new(), Counts::merge)
}

fn cmd_evaluate(cfg: &PipelineConfig, args: EvaluateArgs) -> Outcome {
    let dir = args.input.unwrap_or_else(|| cfg.out.join("counts"));
    let manifest: SimulateManifest = serde_json::from_str(&read_text(&dir.join("manifest.json"))?)
        .context("parsing simulate manifest")
        .map_err(config_err)?;
    let ideal_path = args.ideal.unwrap_or_else(|| cfg.out.join("dataset.txt"));
    let ideal = load_ideal(&ideal_path)?;
    let n = manifest.n_sites;
    let mut rows = Vec::new();
    for cell in &manifest.cells {
        if cell.error.is_some() || cell.files.is_empty() {
            continue;
        }
        let runs = cell
            .files
            .iter()
            .map(|f| Ok(Counts::from_csv(&read_text(&dir.join(f))?)?))
            .collect::<std::result::Result<Vec<_>, Failure>>()?;
        let all = counts_to_distribution(&pooled(&runs))?;
        let kl_of = |rs: &[Counts]| {
            counts_to_distribution(&pooled(rs)).map_or(f64::INFINITY, |d| convex_kl(&ideal, &d))
        };
        let jk = (runs.len() >= 2).then(|| jackknife(&runs, kl_of)).transpose()?;
        let kl_filtered = if n <= FILTER_MAX_SITES {
            let f = measurement_filter(&pooled(&runs), &readout_confusion(cell.zeta, n)?, n)?;
            Some(convex_kl(&ideal, &f.distribution))
        } else {
            None
        };
        rows.push(EvalRow {
            xi2: cell.xi2,
            zeta: cell.zeta,
            kl: convex_kl(&ideal, &all),
            kl_jackknife: jk.map(|j| j.bias_corrected),
            kl_stderr: jk.map(|j| j.variance.sqrt()),
            tv: total_variation(&ideal, &all),
            kl_filtered,
        });
    }
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut csv = String::from("xi2,zeta,kl,kl_jackknife,kl_stderr,tv,kl_filtered\n");
    let mut dat = String::from("# xi2 zeta kl kl_stderr tv\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.xi2,
            r.zeta,
            r.kl,
            opt(r.kl_jackknife),
            opt(r.kl_stderr),
            r.tv,
            opt(r.kl_filtered)
        );
        let _ = writeln!(dat, "{} {} {} {} {}", r.xi2, r.zeta, r.kl, r.kl_stderr.unwrap_or(0.0), r.tv);
    }
    write_atomic(&cfg.out.join("kl_vs_noise.csv"), csv.as_bytes())?;
    write_atomic(&cfg.out.join("kl_vs_noise.dat"), dat.as_bytes())?;
    write_atomic(&cfg.out.join("kl_vs_noise.svg"), line_chart(&rows).as_bytes())?;
    for r in &rows {
        eprintln!("xi2={} zeta={}: KL {:.5} TV {:.5}", r.xi2, r.zeta, r.kl, r.tv);
    }
    Ok(())
}

/// KL against ξ2, one polyline per ζ.
fn line_chart(rows: &[EvalRow]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let finite: Vec<&EvalRow> = rows.iter().filter(|r| r.kl.is_finite()).collect();
    let xmax = finite.iter().map(|r| r.xi2).fold(0.0, f64::max).max(1e-12);
    let ymax = finite.iter().map(|r| r.kl).fold(0.0, f64::max).max(1e-12);
    let sx = |x: f64| pad + x / xmax * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - y / ymax * (h - 2.0 * pad);
    let mut by_zeta: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &finite {
        by_zeta.entry(r.zeta.to_string()).or_default().push((r.xi2, r.kl));
    }
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{pad}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/><line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{0}\" stroke=\"black\"/>",
        h - pad,
        w - pad
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">xi2 (max {xmax})</text>", w / 2.0 - 30.0, h - 15.0);
    let _ = writeln!(s, "<text x=\"5\" y=\"{}\">KL (max {ymax:.4})</text>", pad - 15.0);
    for (i, (zeta, mut pts)) in by_zeta.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = colors[i % colors.len()];
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y))).collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            path.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">zeta={zeta}</text>",
            w - pad - 80.0,
            pad + 15.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

fn cmd_benchmark(cfg: &PipelineConfig) -> Outcome {
    let report = run_exact_benchmark(&cfg.benchmark)?;
    write_json(&cfg.out.join("benchmark.json"), &report)?;
    write_atomic(&cfg.out.join("benchmark.csv"), report.to_csv().as_bytes())?;
    for p in report.pairs.iter().filter(|p| p.a == "analytic") {
        eprintln!("analytic vs {}: KL {:.5} TV {:.5}", p.b, p.convex_kl, p.total_variation);
    }
    if !report.errors.is_empty() {
        return Err(Failure::Numeric(anyhow!("benchmark stages failed: {:?}", report.errors)));
    }
    if report.compile.iter().any(|c| !c.converged) {
        return Err(Failure::NotConverged("benchmark compilation did not converge".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_config(&cli)?;
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(config_err)?;
    }
    match cli.command {
        Command::Ingest => ingest(&cfg),
        Command::Train(a) => cmd_train(&cfg, a.input),
        Command::Gauge(a) => cmd_gauge(&cfg, a),
        Command::Compile(a) => cmd_compile(&cfg, a),
        Command::Simulate(a) => cmd_simulate(&cfg, a.input),
        Command::Evaluate(a) => cmd_evaluate(&cfg, a),
        Command::Benchmark => cmd_benchmark(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("error: {e:#}"),
                Failure::Numeric(e) => eprintln!("numeric failure: {e:#}"),
                Failure::NotConverged(m) => eprintln!("not converged: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
