//! `cmi` command-line pipeline: matrix -> dataset -> checkpoint -> report.
//!
//! Every subcommand writes its artifacts plus a `manifest.json` into
//! `--out-dir`. Wall-clock figures only ever appear in the manifest, in
//! `timing.csv` and in the `mean_inference_time_s` column of evaluation
//! reports; everything else is a pure function of the flags and inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use cmi_core::attgan::ArchConfig;
use cmi_core::classical::{time_reconstruction, ClassicalMethod, SolverConfig, TimingStats};
use cmi_core::data_io::{self, build_dataset, parse_idx_images, parse_idx_labels, synth_targets, Dataset, IMAGE_SIDE};
use cmi_core::forward_model::{synthesize_h, ApertureConfig, ComplexMatrix, SceneConfig, SynthesisMode};
use cmi_core::metrics::{nmse, ssim, ClassificationReport, MetricsReport};
use cmi_core::optim::AdamConfig;
use cmi_core::trainer::{self, fit_from, init_state, log_csv, TrainConfig, TrainState};

#[derive(Debug, Parser)]
#[command(name = "cmi", version, about = "Computational microwave imaging pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a sensing matrix.
    SynthMatrix(SynthMatrixArgs),
    /// Simulate measurements for synthetic glyphs or MNIST images.
    BuildDataset(BuildDatasetArgs),
    /// Matched-filter or least-squares reconstruction of a dataset.
    ReconClassical(ReconArgs),
    /// Train the generator / discriminator pair.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Per-sample timing of least squares vs. generator inference.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 is the bit-reproducible reference mode.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Gaussian,
    Greens,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Mf,
    Ls,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthMatrixArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = Mode::Gaussian)]
    pub mode: Mode,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildDatasetArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    /// Omit for noiseless measurements.
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// IDX image file; synthetic glyphs are used when absent.
    #[arg(long, requires = "mnist_labels")]
    pub mnist_images: Option<PathBuf>,
    #[arg(long, requires = "mnist_images")]
    pub mnist_labels: Option<PathBuf>,
    /// Output file name inside the out dir.
    #[arg(long, default_value = "dataset.cmid")]
    pub name: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub ls_iters: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub ls_tol: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            max_iters: self.ls_iters as usize,
            rel_tol: self.ls_tol,
            tikhonov_alpha: 0.0,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReconArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = Solver::Ls)]
    pub solver: Solver,
    #[command(flatten)]
    pub ls: SolverArgs,
    /// Number of leading samples dumped as PGM.
    #[arg(long, default_value_t = 16)]
    pub max_images: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Total epochs; a resumed run continues until this many are done.
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: u64,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 100.0)]
    pub lambda: f64,
    /// Write a snapshot every N epochs (0 = never).
    #[arg(long, default_value_t = 0)]
    pub snapshot_every: usize,
    /// Continue from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub enc_filters: usize,
    #[arg(long, default_value_t = 64)]
    pub dec_filters: usize,
    #[arg(long, default_value_t = 128)]
    pub cls_filters: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Adds a least-squares row to the comparison sheet.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    pub ls: SolverArgs,
    #[arg(long, default_value_t = 16)]
    pub max_images: usize,
    /// Columns of the comparison sheet.
    #[arg(long, default_value_t = 8)]
    pub sheet_samples: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Iteration counts to time, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub ls_iters: Vec<usize>,
    /// Defaults to the smallest positive value so every iteration runs.
    #[arg(long, default_value_t = f64::MIN_POSITIVE)]
    pub ls_tol: f64,
    /// Samples timed per method (at least 10).
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
}

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub threads: u32,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    pub wall_time_s: f64,
}

pub const MANIFEST_NAME: &str = "manifest.json";

fn sha256_file(p: &Path) -> Result<String> {
    let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(data_io::hex(&Sha256::digest(bytes)))
}

/// Collects output paths and writes them relative to the out dir.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(PathBuf::from(name));
        p
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
    }

    fn pgm(&mut self, name: &str, px: &[f64], w: usize, h: usize) -> Result<()> {
        let p = self.path(name);
        data_io::write_pgm(&p, px, w, h)?;
        Ok(())
    }
}

fn load_matrix(p: &Path) -> Result<ComplexMatrix> {
    data_io::read_matrix(p).with_context(|| format!("loading matrix {}", p.display()))
}

fn load_dataset(p: &Path) -> Result<Dataset> {
    Dataset::read(p).with_context(|| format!("loading dataset {}", p.display()))
}

fn load_checkpoint(p: &Path) -> Result<TrainState> {
    TrainState::load(p).with_context(|| format!("loading checkpoint {}", p.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let t0 = Instant::now();
    let (name, common, config, inputs, outputs) = match &cli.command {
        Command::SynthMatrix(a) => (
            "synth-matrix",
            &a.common,
            serde_json::to_value(a)?,
            vec![],
            synth_matrix(a)?,
        ),
        Command::BuildDataset(a) => {
            let mut ins = vec![a.matrix.clone()];
            ins.extend(a.mnist_images.iter().chain(&a.mnist_labels).cloned());
            ("build-dataset", &a.common, serde_json::to_value(a)?, ins, build(a)?)
        }
        Command::ReconClassical(a) => (
            "recon-classical",
            &a.common,
            serde_json::to_value(a)?,
            vec![a.matrix.clone(), a.dataset.clone()],
            recon(a)?,
        ),
        Command::Train(a) => {
            let mut ins = vec![a.dataset.clone()];
            ins.extend(a.resume.iter().cloned());
            ("train", &a.common, serde_json::to_value(a)?, ins, train(a)?)
        }
        Command::Evaluate(a) => {
            let mut ins = vec![a.checkpoint.clone(), a.dataset.clone()];
            ins.extend(a.matrix.iter().cloned());
            ("evaluate", &a.common, serde_json::to_value(a)?, ins, evaluate(a)?)
        }
        Command::Benchmark(a) => (
            "benchmark",
            &a.common,
            serde_json::to_value(a)?,
            vec![a.matrix.clone(), a.checkpoint.clone(), a.dataset.clone()],
            benchmark(a)?,
        ),
    };
    let inputs = inputs
        .into_iter()
        .map(|p| {
            Ok(FileRecord {
                sha256: sha256_file(&p)?,
                path: p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        subcommand: name.to_string(),
        config,
        seed: common.seed,
        threads: common.threads,
        inputs,
        outputs,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: t0.elapsed().as_secs_f64(),
    };
    let p = common.out_dir.join(MANIFEST_NAME);
    fs::write(&p, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", p.display()))?;
    Ok(())
}

fn synth_matrix(a: &SynthMatrixArgs) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new(&a.common.out_dir)?;
    let aperture = ApertureConfig {
        synthesis_mode: match a.mode {
            Mode::Gaussian => SynthesisMode::Gaussian,
            Mode::Greens => SynthesisMode::Greens,
        },
        ..Default::default()
    };
    let h = synthesize_h(&SceneConfig::default(), &aperture, a.common.seed)?;
    let p = out.path("matrix.cmim");
    data_io::write_matrix(&p, &h)?;
    out.text(
        "matrix.sha256",
        &format!("{}\n", data_io::hex(&data_io::matrix_hash(&h))),
    )?;
    Ok(out.written)
}

/// Seeded uniform subsample of `k` indices out of `n`, in ascending order.
fn subsample(n: usize, k: usize, seed: u64) -> Vec<usize> {
    use rand::seq::index::sample;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v = sample(&mut rng, n, k).into_vec();
    v.sort_unstable();
    v
}

fn build(a: &BuildDatasetArgs) -> Result<Vec<PathBuf>> {
    let h = load_matrix(&a.matrix)?;
    let n = a.samples as usize;
    let (images, labels) = match (&a.mnist_images, &a.mnist_labels) {
        (Some(ip), Some(lp)) => {
            let imgs = parse_idx_images(&fs::read(ip).with_context(|| format!("reading {}", ip.display()))?)
                .with_context(|| format!("parsing {}", ip.display()))?;
            let labs = parse_idx_labels(&fs::read(lp).with_context(|| format!("reading {}", lp.display()))?)
                .with_context(|| format!("parsing {}", lp.display()))?;
            if imgs.len() != labs.len() {
                bail!("{} images but {} labels", imgs.len(), labs.len());
            }
            if n > imgs.len() {
                bail!("requested {n} samples from a file of {}", imgs.len());
            }
            let pick = subsample(imgs.len(), n, a.common.seed);
            (
                pick.iter().map(|&i| imgs[i].clone()).collect(),
                pick.iter().map(|&i| labs[i]).collect(),
            )
        }
        _ => synth_targets(n, a.common.seed)?,
    };
    let ds = build_dataset(&images, &labels, &h, a.snr_db, a.common.seed)?;
    let mut out = Outputs::new(&a.common.out_dir)?;
    let p = out.path(&a.name);
    ds.write(&p)?;
    Ok(out.written)
}

/// Scales to a unit maximum for display.
fn unit_max(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(0.0, f64::max);
    if m > 0.0 {
        v.iter().map(|x| x / m).collect()
    } else {
        v.to_vec()
    }
}

/// Least-squares scalar `a` minimizing `||a x - t||`.
fn best_scale(x: &[f64], t: &[f64]) -> f64 {
    let xx: f64 = x.iter().map(|v| v * v).sum();
    if xx == 0.0 {
        return 0.0;
    }
    x.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() / xx
}

fn recon(a: &ReconArgs) -> Result<Vec<PathBuf>> {
    let h = load_matrix(&a.matrix)?;
    let ds = load_dataset(&a.dataset)?;
    ds.check_matrix(&h)?;
    let method = match a.solver {
        Solver::Mf => ClassicalMethod::MatchedFilter,
        Solver::Ls => ClassicalMethod::LeastSquares(a.ls.config()),
    };
    let mut out = Outputs::new(&a.common.out_dir)?;
    let mut csv = String::from("index,label,nmse,nmse_scaled,ssim_scaled,iterations,residual_norm,degenerate\n");
    let mut times = Vec::with_capacity(ds.len());
    let mut recon_images = Vec::with_capacity(ds.len());
    for (i, s) in ds.samples.iter().enumerate() {
        let r = method.run(&h, &s.g)?;
        times.push(r.wall_time_s);
        let scaled: Vec<f64> = {
            let c = best_scale(&r.rho_rec, &s.rho);
            r.rho_rec.iter().map(|v| v * c).collect()
        };
        let (e, es) = match (nmse(&r.rho_rec, &s.rho), nmse(&scaled, &s.rho)) {
            (Ok(e), Ok(es)) => (e, es),
            _ => (f64::NAN, f64::NAN),
        };
        let q = ssim(
            &scaled.iter().map(|v| v.clamp(0.0, 1.0)).collect::<Vec<_>>(),
            &s.rho,
            IMAGE_SIDE,
            IMAGE_SIDE,
        )?;
        csv.push_str(&format!(
            "{i},{},{e},{es},{q},{},{},{}\n",
            s.label, r.iterations_used, r.residual_norm, r.degenerate as u8
        ));
        if i < a.max_images {
            out.pgm(
                &format!("recon_{i:05}.pgm"),
                &unit_max(&r.rho_rec),
                IMAGE_SIDE,
                IMAGE_SIDE,
            )?;
        }
        recon_images.push(r.rho_rec);
    }
    let report = trainer::score(&ds, &recon_images, None, 0.0)?;
    out.text("recon.csv", &csv)?;
    out.text(
        "summary.csv",
        &format!(
            "samples,mean_nmse,mean_ssim\n{},{},{}\n",
            report.samples, report.mean_nmse, report.mean_ssim
        ),
    )?;
    let t = TimingStats::from_durations(&times);
    out.text(
        "timing.csv",
        &format!(
            "method,mean_s,std_s,samples\n{},{},{},{}\n",
            method_name(&method),
            t.mean_s,
            t.std_s,
            t.samples
        ),
    )?;
    Ok(out.written)
}

fn method_name(m: &ClassicalMethod) -> String {
    match m {
        ClassicalMethod::MatchedFilter => "mf".into(),
        ClassicalMethod::LeastSquares(c) => format!("ls{}", c.max_iters),
    }
}

fn train(a: &TrainArgs) -> Result<Vec<PathBuf>> {
    let ds = load_dataset(&a.dataset)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size as usize,
        adam: AdamConfig {
            lr: a.lr,
            ..Default::default()
        },
        lambda: a.lambda,
        seed: a.common.seed,
        d_steps_per_g_step: 1,
        snapshot_every: a.snapshot_every,
    };
    cfg.validate()?;
    let mut state = match &a.resume {
        Some(p) => {
            let s = load_checkpoint(p)?;
            if s.arch.measurement_modes != ds.header.m {
                bail!(
                    "checkpoint expects M={}, dataset has M={}",
                    s.arch.measurement_modes,
                    ds.header.m
                );
            }
            s
        }
        None => {
            let arch = ArchConfig {
                measurement_modes: ds.header.m,
                enc_filters: a.enc_filters,
                dec_filters: a.dec_filters,
                cls_filters: a.cls_filters,
                ..Default::default()
            };
            init_state(&ds, arch, a.common.seed)?
        }
    };
    let mut out = Outputs::new(&a.common.out_dir)?;
    let snap_dir = a.common.out_dir.join("snapshots");
    let mut snaps = Vec::new();
    let log = fit_from(&mut state, &ds, &cfg, |st, _| {
        if cfg.snapshot_every > 0 && st.epoch % cfg.snapshot_every as u64 == 0 {
            fs::create_dir_all(&snap_dir).map_err(|e| cmi_core::Error::Io {
                path: snap_dir.clone(),
                source: e,
            })?;
            let name = format!("epoch_{:04}.attg", st.epoch);
            st.save(&snap_dir.join(&name))?;
            snaps.push(PathBuf::from("snapshots").join(name));
        }
        Ok(())
    })?;
    out.written.extend(snaps);
    let p = out.path("checkpoint.attg");
    state.save(&p)?;
    out.text("train_log.csv", &log_csv(&log))?;
    Ok(out.written)
}

/// Confusion counts as a heat image, rows normalized, 16 pixels per cell.
fn confusion_image(c: &ClassificationReport) -> (Vec<f64>, usize) {
    let k = c.confusion.len();
    let cell = 16;
    let side = k * cell;
    let mut px = vec![0.0; side * side];
    for (t, row) in c.confusion.iter().enumerate() {
        let total: usize = row.iter().sum();
        for (p, &v) in row.iter().enumerate() {
            let val = if total > 0 { v as f64 / total as f64 } else { 0.0 };
            for y in 0..cell {
                for x in 0..cell {
                    px[(t * cell + y) * side + p * cell + x] = val;
                }
            }
        }
    }
    (px, side)
}

/// Tiles rows of 28x28 images into one sheet with 2-pixel grey gutters.
fn tile_sheet(rows: &[Vec<Vec<f64>>]) -> (Vec<f64>, usize, usize) {
    let gap = 2;
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let w = cols * (IMAGE_SIDE + gap) + gap;
    let h = rows.len() * (IMAGE_SIDE + gap) + gap;
    let mut px = vec![0.5; w * h];
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            let (oy, ox) = (gap + r * (IMAGE_SIDE + gap), gap + c * (IMAGE_SIDE + gap));
            for y in 0..IMAGE_SIDE {
                for x in 0..IMAGE_SIDE {
                    px[(oy + y) * w + ox + x] = img[y * IMAGE_SIDE + x];
                }
            }
        }
    }
    (px, w, h)
}

fn evaluate(a: &EvaluateArgs) -> Result<Vec<PathBuf>> {
    let state = load_checkpoint(&a.checkpoint)?;
    let ds = load_dataset(&a.dataset)?;
    let (report, pred) = trainer::evaluate(&state.gen, &state.norm, &ds)?;
    let mut out = Outputs::new(&a.common.out_dir)?;
    let mut csv = String::from("index,true_label,pred_label,nmse,ssim\n");
    for (i, s) in ds.samples.iter().enumerate() {
        let e = nmse(&pred.images[i], &s.rho).unwrap_or(f64::NAN);
        let q = ssim(&pred.images[i], &s.rho, IMAGE_SIDE, IMAGE_SIDE)?;
        csv.push_str(&format!("{i},{},{},{e},{q}\n", s.label, pred.labels[i]));
        if i < a.max_images {
            out.pgm(&format!("pred_{i:05}.pgm"), &pred.images[i], IMAGE_SIDE, IMAGE_SIDE)?;
        }
    }
    out.text("predictions.csv", &csv)?;
    out.text(
        "report.csv",
        &format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row()),
    )?;
    out.text("report.txt", &report.text_table())?;
    if let Some(c) = &report.classification {
        let (px, side) = confusion_image(c);
        out.pgm("confusion.pgm", &px, side, side)?;
        if !c.absent.is_empty() {
            eprintln!(
                "classes absent from predictions and truth, left out of macro scores: {:?}",
                c.absent
            );
        }
    }

    let n = a.sheet_samples.min(ds.len());
    let mut rows = vec![
        ds.samples[..n].iter().map(|s| s.rho.clone()).collect::<Vec<_>>(),
        pred.images[..n]
            .iter()
            .map(|im| im.iter().map(|v| v.clamp(0.0, 1.0)).collect())
            .collect(),
    ];
    if let Some(mp) = &a.matrix {
        let h = load_matrix(mp)?;
        ds.check_matrix(&h)?;
        let cfg = a.ls.config();
        let mut ls_row = Vec::with_capacity(n);
        for s in &ds.samples[..n] {
            ls_row.push(unit_max(&cmi_core::classical::solve_ls(&h, &s.g, &cfg)?.rho_rec));
        }
        rows.push(ls_row);
    }
    let (px, w, h) = tile_sheet(&rows);
    out.pgm("comparison.pgm", &px, w, h)?;
    Ok(out.written)
}

fn benchmark(a: &BenchmarkArgs) -> Result<Vec<PathBuf>> {
    let h = load_matrix(&a.matrix)?;
    let ds = load_dataset(&a.dataset)?;
    ds.check_matrix(&h)?;
    let state = load_checkpoint(&a.checkpoint)?;
    if a.samples < 10 || a.samples > ds.len() {
        bail!("--samples must be between 10 and the dataset size {}", ds.len());
    }
    let gs: Vec<_> = ds.samples[..a.samples].iter().map(|s| s.g.clone()).collect();
    let mut csv = String::from("method,iterations,mean_s,std_s,samples\n");
    for &it in &a.ls_iters {
        let cfg = SolverConfig {
            max_iters: it,
            rel_tol: a.ls_tol,
            tikhonov_alpha: 0.0,
        };
        let t = time_reconstruction(&ClassicalMethod::LeastSquares(cfg), &h, &gs)?;
        csv.push_str(&format!("ls,{it},{},{},{}\n", t.mean_s, t.std_s, t.samples));
    }
    let t = time_generator(&state, &ds, a.samples)?;
    csv.push_str(&format!("generator,0,{},{},{}\n", t.mean_s, t.std_s, t.samples));
    let mut out = Outputs::new(&a.common.out_dir)?;
    out.text("timing.csv", &csv)?;
    Ok(out.written)
}

/// Single-sample generator inference timing, one untimed warm-up.
pub fn time_generator(state: &TrainState, ds: &Dataset, samples: usize) -> Result<TimingStats> {
    let mut d = Vec::with_capacity(samples);
    let (x0, _, _) = ds.batch(&[0], &state.norm)?;
    state.gen.infer(&x0)?;
    for i in 0..samples {
        let (x, _, _) = ds.batch(&[i], &state.norm)?;
        let t0 = Instant::now();
        let r = state.gen.infer(&x)?;
        std::hint::black_box(&r);
        d.push(t0.elapsed().as_secs_f64());
    }
    Ok(TimingStats::from_durations(&d))
}
