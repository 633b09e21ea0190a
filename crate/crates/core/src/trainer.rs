//! Alternating adversarial training, checkpoints and evaluation.
//!
//! Each step first updates the discriminator against the current generator
//! output, then updates the generator and the task-uncertainty scalars
//! against the discriminator. Freezing is structural: the network that is
//! not being updated enters the graph as constants.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attgan::{ArchConfig, Discriminator, Generator};
use crate::autodiff::{Graph, Var};
use crate::binio::{len_u32, put_f64s, put_u32, read_file, write_file, Reader};
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::forward_model::{fit_norm_stats, NormStats};
use crate::losses::{
    categorical_loss, discriminator_loss, generator_total, image_loss, LossBreakdown, UncertaintyParams,
};
use crate::metrics::{classification_report, nmse, ssim, MetricsReport};
use crate::optim::{adam_step, AdamConfig, AdamState, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub lambda: f64,
    pub seed: u64,
    pub d_steps_per_g_step: usize,
    /// Snapshot period in epochs; 0 disables snapshots.
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            adam: AdamConfig::default(),
            lambda: crate::losses::DEFAULT_LAMBDA,
            seed: 0,
            d_steps_per_g_step: 1,
            snapshot_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if self.batch_size == 0 || self.d_steps_per_g_step == 0 {
            return Err(Error::contract("batch size and discriminator steps must be positive"));
        }
        if !(a.lr > 0.0 && self.lambda > 0.0 && a.eps > 0.0) {
            return Err(Error::contract("learning rate, lambda and eps must be positive"));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err(Error::contract("adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Everything needed to continue a run bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub arch: ArchConfig,
    pub gen: Generator,
    pub disc: Discriminator,
    pub unc: UncertaintyParams,
    pub adam_gen: AdamState,
    pub adam_disc: AdamState,
    pub adam_unc: AdamState,
    /// Adam step counters of the generator side and of the discriminator.
    pub t_gen: u64,
    pub t_disc: u64,
    pub norm: NormStats,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: u64,
    /// Completed training steps.
    pub step: u64,
}

const DISC_SEED_SALT: u64 = 0x6469_7363_7269_6d31;

impl TrainState {
    pub fn new(arch: ArchConfig, seed: u64, norm: NormStats) -> Result<Self> {
        let gen = Generator::new(arch, seed)?;
        let disc = Discriminator::new(arch, seed ^ DISC_SEED_SALT)?;
        let unc = UncertaintyParams::default();
        Ok(TrainState {
            adam_gen: AdamState::for_store(&gen.store),
            adam_disc: AdamState::for_store(&disc.store),
            adam_unc: AdamState::for_store(&unc.store),
            arch,
            gen,
            disc,
            unc,
            t_gen: 0,
            t_disc: 0,
            norm,
            seed,
            epoch: 0,
            step: 0,
        })
    }
}

fn non_finite_error(g: &Graph, stores: &[&ParamStore], step: u64) -> Error {
    for s in stores {
        for (name, t) in s.iter() {
            if t.data().iter().any(|v| !v.is_finite()) {
                return Error::NonFinite {
                    tensor: name.to_string(),
                    step,
                };
            }
        }
    }
    let tensor = match g.first_non_finite() {
        Some((idx, op)) => format!("graph node {idx} ({op})"),
        None => "loss".to_string(),
    };
    Error::NonFinite { tensor, step }
}

fn scalar(g: &Graph, v: Var) -> f64 {
    g.value(v)[0]
}

/// One discriminator update followed by one generator update on a
/// normalized batch.
pub fn train_step(
    state: &mut TrainState,
    x: &Tensor,
    y: &Tensor,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    train_step_observed(state, x, y, labels, cfg, |_, _| {})
}

/// Point inside [`train_step_observed`] at which the observer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// After each discriminator update.
    DiscUpdated,
    /// After the generator and uncertainty update.
    GenUpdated,
}

/// [`train_step`] with a callback after every parameter update, for
/// checking that each update leaves the other network untouched.
pub fn train_step_observed<F>(
    state: &mut TrainState,
    x: &Tensor,
    y: &Tensor,
    labels: &[usize],
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<LossBreakdown>
where
    F: FnMut(Phase, &TrainState),
{
    let step = state.step + 1;
    let mut ga = Graph::new();
    let gen_vars = state.gen.store.bind(&mut ga);
    let xv = ga.constant(x);
    let out = state.gen.forward(&mut ga, &gen_vars, xv)?;
    let fake = Tensor::new(ga.shape(out.image), ga.value(out.image).to_vec())?;

    let mut l_d = 0.0;
    for _ in 0..cfg.d_steps_per_g_step {
        let mut gd = Graph::new();
        let dv = state.disc.store.bind(&mut gd);
        let (fv, rv) = (gd.constant(&fake), gd.constant(y));
        let df = state.disc.forward(&mut gd, &dv, fv)?;
        let dr = state.disc.forward(&mut gd, &dv, rv)?;
        let ld = discriminator_loss(&mut gd, df, dr)?;
        l_d = scalar(&gd, ld);
        if !l_d.is_finite() {
            return Err(non_finite_error(&gd, &[&state.disc.store], step));
        }
        gd.backward(ld)?;
        state.disc.store.zero_grad();
        state.disc.store.pull_grads(&gd, &dv);
        state.t_disc += 1;
        adam_step(&mut state.disc.store, &mut state.adam_disc, &cfg.adam, state.t_disc)?;
        observe(Phase::DiscUpdated, state);
    }

    let frozen = state.disc.store.bind_frozen(&mut ga);
    let df = state.disc.forward(&mut ga, &frozen, out.image)?;
    let target = ga.constant(y);
    let l_cat = categorical_loss(&mut ga, out.class_probs, labels)?;
    let img = image_loss(&mut ga, out.image, target, df, cfg.lambda)?;
    let uv = state.unc.store.bind(&mut ga);
    let (s1, s2) = (uv.var(state.unc.log_sigma1), uv.var(state.unc.log_sigma2));
    let l_g = generator_total(&mut ga, l_cat, img.total, s1, s2)?;
    let breakdown = LossBreakdown {
        l_d,
        l_cat: scalar(&ga, l_cat),
        l_l1: scalar(&ga, img.l1),
        l_adv: scalar(&ga, img.adv),
        l_img: scalar(&ga, img.total),
        l_g_total: scalar(&ga, l_g),
        sigma1: state.unc.sigma1(),
        sigma2: state.unc.sigma2(),
    };
    if !breakdown.is_finite() {
        return Err(non_finite_error(&ga, &[&state.gen.store, &state.unc.store], step));
    }
    ga.backward(l_g)?;
    state.gen.store.zero_grad();
    state.gen.store.pull_grads(&ga, &gen_vars);
    state.unc.store.zero_grad();
    state.unc.store.pull_grads(&ga, &uv);
    state.t_gen += 1;
    adam_step(&mut state.gen.store, &mut state.adam_gen, &cfg.adam, state.t_gen)?;
    adam_step(&mut state.unc.store, &mut state.adam_unc, &cfg.adam, state.t_gen)?;
    state.step = step;
    observe(Phase::GenUpdated, state);
    Ok(breakdown)
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub epoch: u64,
    pub losses: LossBreakdown,
}

pub const LOG_HEADER: &str = "step,epoch,l_d,l_cat,l_l1,l_adv,l_img,l_g,sigma1,sigma2";

impl LogRow {
    pub fn csv(&self) -> String {
        let l = &self.losses;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step, self.epoch, l.l_d, l.l_cat, l.l_l1, l.l_adv, l.l_img, l.l_g_total, l.sigma1, l.sigma2
        )
    }
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

/// Mean `l_cat` over the rows of one epoch (1-based).
pub fn epoch_mean_cat(rows: &[LogRow], epoch: u64) -> Option<f64> {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.epoch == epoch)
        .map(|r| r.losses.l_cat)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Normalization statistics over every measurement of `ds`.
pub fn dataset_norm_stats(ds: &Dataset) -> Result<NormStats> {
    let flat: Vec<Vec<f64>> = (0..ds.len()).map(|i| ds.measurement(i)).collect();
    fit_norm_stats(flat.iter().map(Vec::as_slice))
}

/// Sample order of one epoch, a pure function of seed and epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Fresh state for `ds`, with normalization statistics fitted on it.
pub fn init_state(ds: &Dataset, arch: ArchConfig, seed: u64) -> Result<TrainState> {
    if arch.measurement_modes != ds.header.m || arch.image_side * arch.image_side != ds.header.n {
        return Err(Error::dim(format!(
            "architecture expects M={} and {}x{} images, dataset has M={} N={}",
            arch.measurement_modes, arch.image_side, arch.image_side, ds.header.m, ds.header.n
        )));
    }
    TrainState::new(arch, seed, dataset_norm_stats(ds)?)
}

/// Trains until `cfg.epochs` epochs are complete, starting from whatever
/// `state.epoch` already records. `on_epoch` runs after every epoch with the
/// state and the log so far.
pub fn fit_from<F>(state: &mut TrainState, ds: &Dataset, cfg: &TrainConfig, mut on_epoch: F) -> Result<Vec<LogRow>>
where
    F: FnMut(&TrainState, &[LogRow]) -> Result<()>,
{
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    let mut log = Vec::new();
    while state.epoch < cfg.epochs as u64 {
        let order = epoch_order(ds.len(), state.seed, state.epoch);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y, labels) = ds.batch(chunk, &state.norm)?;
            let losses = train_step(state, &x, &y, &labels, cfg)?;
            log.push(LogRow {
                step: state.step,
                epoch: state.epoch + 1,
                losses,
            });
        }
        state.epoch += 1;
        on_epoch(state, &log)?;
    }
    Ok(log)
}

/// Fresh run of `cfg.epochs` epochs.
pub fn fit(ds: &Dataset, arch: ArchConfig, cfg: &TrainConfig) -> Result<(TrainState, Vec<LogRow>)> {
    let mut state = init_state(ds, arch, cfg.seed)?;
    let log = fit_from(&mut state, ds, cfg, |_, _| Ok(()))?;
    Ok((state, log))
}

/// Per-sample generator outputs over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
    /// Wall time of the forward passes divided by the sample count.
    pub mean_time_s: f64,
}

pub fn predict(gen: &Generator, norm: &NormStats, ds: &Dataset, batch_size: usize) -> Result<Predictions> {
    let bs = batch_size.max(1);
    let mut p = Predictions {
        images: Vec::with_capacity(ds.len()),
        labels: Vec::with_capacity(ds.len()),
        probs: Vec::with_capacity(ds.len()),
        mean_time_s: 0.0,
    };
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut elapsed = 0.0;
    for chunk in idx.chunks(bs) {
        let (x, _, _) = ds.batch(chunk, norm)?;
        let t0 = Instant::now();
        let (img, probs) = gen.infer(&x)?;
        elapsed += t0.elapsed().as_secs_f64();
        let px = img.len() / chunk.len();
        let k = probs.len() / chunk.len();
        for (im, pr) in img.data().chunks(px).zip(probs.data().chunks(k)) {
            p.images.push(im.to_vec());
            let best = pr
                .iter()
                .enumerate()
                .fold(0, |b, (i, &v)| if v > pr[b] { i } else { b });
            p.labels.push(best);
            p.probs.push(pr.to_vec());
        }
    }
    p.mean_time_s = elapsed / ds.len().max(1) as f64;
    Ok(p)
}

/// NMSE / SSIM / classification scores of `pred` against the dataset truth.
/// Samples with an all-zero truth image are skipped for NMSE.
pub fn score(ds: &Dataset, images: &[Vec<f64>], labels: Option<&[usize]>, mean_time_s: f64) -> Result<MetricsReport> {
    if images.len() != ds.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} samples",
            images.len(),
            ds.len()
        )));
    }
    let side = (ds.header.n as f64).sqrt() as usize;
    let (mut nm, mut nn, mut ss) = (0.0, 0usize, 0.0);
    for (s, im) in ds.samples.iter().zip(images) {
        match nmse(im, &s.rho) {
            Ok(v) => {
                nm += v;
                nn += 1;
            }
            Err(Error::UndefinedMetric(_)) => {}
            Err(e) => return Err(e),
        }
        ss += ssim(im, &s.rho, side, side)?;
    }
    let classification = match labels {
        Some(l) => {
            let truth: Vec<usize> = ds.samples.iter().map(|s| s.label as usize).collect();
            Some(classification_report(l, &truth)?)
        }
        None => None,
    };
    Ok(MetricsReport {
        mean_nmse: if nn > 0 { nm / nn as f64 } else { f64::NAN },
        mean_ssim: ss / ds.len() as f64,
        classification,
        mean_inference_time_s: mean_time_s,
        samples: ds.len(),
    })
}

pub fn evaluate(gen: &Generator, norm: &NormStats, ds: &Dataset) -> Result<(MetricsReport, Predictions)> {
    let p = predict(gen, norm, ds, 100)?;
    let r = score(ds, &p.images, Some(&p.labels), p.mean_time_s)?;
    Ok((r, p))
}

// ---------------------------------------------------------------------------
// Checkpoints

const CKPT_MAGIC: &[u8; 4] = b"ATTG";
pub const CHECKPOINT_VERSION: u32 = 1;

fn arch_to_vec(a: &ArchConfig) -> Vec<f64> {
    [
        a.measurement_modes,
        a.image_side,
        a.num_classes,
        a.enc_filters,
        a.dec_filters,
        a.cls_filters,
        a.gate_channels,
        a.enc_kernel,
        a.up_kernel,
        a.merge_kernel,
        a.cls_kernel,
    ]
    .iter()
    .map(|&v| v as f64)
    .collect()
}

fn arch_from_vec(v: &[f64]) -> Result<ArchConfig> {
    if v.len() != 11 || v.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
        return Err(Error::contract("malformed architecture record"));
    }
    let u: Vec<usize> = v.iter().map(|&x| x as usize).collect();
    Ok(ArchConfig {
        measurement_modes: u[0],
        image_side: u[1],
        num_classes: u[2],
        enc_filters: u[3],
        dec_filters: u[4],
        cls_filters: u[5],
        gate_channels: u[6],
        enc_kernel: u[7],
        up_kernel: u[8],
        merge_kernel: u[9],
        cls_kernel: u[10],
    })
}

/// `u64` as two exactly representable `u32` halves.
fn u64_to_f64s(v: u64) -> [f64; 2] {
    [(v & 0xffff_ffff) as f64, (v >> 32) as f64]
}

fn u64_from_f64s(v: &[f64]) -> Result<u64> {
    if v.len() != 2 || v.iter().any(|x| x.fract() != 0.0 || *x < 0.0 || *x > u32::MAX as f64) {
        return Err(Error::contract("malformed integer record"));
    }
    Ok(v[0] as u64 | ((v[1] as u64) << 32))
}

fn put_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
    put_u32(out, len_u32(name.len(), "record name length")?);
    out.extend_from_slice(name.as_bytes());
    let rank = u8::try_from(shape.len()).map_err(|_| Error::contract("tensor rank above 255"))?;
    out.push(rank);
    for &d in shape {
        put_u32(out, len_u32(d, "dimension")?);
    }
    put_f64s(out, data);
    Ok(())
}

fn adam_records(out: &mut Vec<u8>, store: &ParamStore, st: &AdamState) -> Result<()> {
    for (i, (name, t)) in store.iter().enumerate() {
        put_record(out, &format!("adam.m:{name}"), t.shape(), &st.m[i])?;
        put_record(out, &format!("adam.v:{name}"), t.shape(), &st.v[i])?;
    }
    Ok(())
}

impl TrainState {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = CKPT_MAGIC.to_vec();
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_record(&mut out, "meta.arch", &[11], &arch_to_vec(&self.arch))?;
        put_record(&mut out, "meta.seed", &[2], &u64_to_f64s(self.seed))?;
        put_record(&mut out, "meta.epoch", &[2], &u64_to_f64s(self.epoch))?;
        put_record(&mut out, "meta.step", &[2], &u64_to_f64s(self.step))?;
        put_record(&mut out, "meta.t_gen", &[2], &u64_to_f64s(self.t_gen))?;
        put_record(&mut out, "meta.t_disc", &[2], &u64_to_f64s(self.t_disc))?;
        let n = &self.norm;
        put_record(
            &mut out,
            "meta.norm",
            &[2, 2],
            &[n.mean[0], n.mean[1], n.std[0], n.std[1]],
        )?;
        for store in [&self.gen.store, &self.disc.store, &self.unc.store] {
            for (name, t) in store.iter() {
                put_record(&mut out, name, t.shape(), t.data())?;
            }
        }
        adam_records(&mut out, &self.gen.store, &self.adam_gen)?;
        adam_records(&mut out, &self.disc.store, &self.adam_disc)?;
        adam_records(&mut out, &self.unc.store, &self.adam_unc)?;
        Ok(out)
    }

    /// Decodes into a fresh state; nothing is mutated on failure.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let records = read_records(bytes)?;
        let find = |name: &str| -> Result<&Tensor> {
            records
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::contract(format!("checkpoint lacks record `{name}`")))
        };
        let arch = arch_from_vec(find("meta.arch")?.data())?;
        let int = |name: &str| -> Result<u64> { u64_from_f64s(find(name)?.data()) };
        let nv = find("meta.norm")?.data();
        if nv.len() != 4 {
            return Err(Error::contract("malformed normalization record"));
        }
        let norm = NormStats {
            mean: [nv[0], nv[1]],
            std: [nv[2], nv[3]],
        };
        let mut state = TrainState::new(arch, int("meta.seed")?, norm)?;
        state.epoch = int("meta.epoch")?;
        state.step = int("meta.step")?;
        state.t_gen = int("meta.t_gen")?;
        state.t_disc = int("meta.t_disc")?;

        let mut gathered = ParamStore::new();
        for (name, t) in &records {
            if !name.starts_with("meta.") && !name.starts_with("adam.") {
                gathered.add(name.clone(), t.clone());
            }
        }
        let pick = |prefix: &str| {
            let mut s = ParamStore::new();
            for (name, t) in gathered.iter().filter(|(n, _)| n.starts_with(prefix)) {
                s.add(name, t.clone());
            }
            s
        };
        state.gen = Generator::from_params(arch, &pick("gen."))?;
        state.disc = Discriminator::from_params(arch, &pick("disc."))?;
        let unc_src = pick("unc.");
        for (name, t) in unc_src.iter() {
            let id = state
                .unc
                .store
                .id(name)
                .ok_or_else(|| Error::contract(format!("unknown parameter `{name}`")))?;
            state.unc.store.get_mut(id).data_mut().copy_from_slice(t.data());
        }
        if unc_src.len() != state.unc.store.len() {
            return Err(Error::contract("checkpoint lacks uncertainty parameters"));
        }
        for (store, st) in [
            (&state.gen.store, &mut state.adam_gen),
            (&state.disc.store, &mut state.adam_disc),
            (&state.unc.store, &mut state.adam_unc),
        ] {
            for (i, (name, t)) in store.iter().enumerate() {
                let m = find(&format!("adam.m:{name}"))?;
                let v = find(&format!("adam.v:{name}"))?;
                if m.len() != t.len() || v.len() != t.len() {
                    return Err(Error::dim(format!(
                        "optimizer moments of `{name}` do not match the parameter"
                    )));
                }
                st.m[i].copy_from_slice(m.data());
                st.v[i].copy_from_slice(v.data());
            }
        }
        let expected = 7 + 3 * (state.gen.store.len() + state.disc.store.len() + state.unc.store.len());
        if records.len() != expected {
            return Err(Error::contract(format!(
                "checkpoint has {} records, expected {expected}",
                records.len()
            )));
        }
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

fn read_records(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != CKPT_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"ATTG\"")));
    }
    let version = r.u32_le("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            4,
            format!("checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"),
        ));
    }
    let mut out: Vec<(String, Tensor)> = Vec::new();
    while r.remaining() > 0 {
        let at = r.pos();
        let len = r.u32_le("record name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "record name")?)
            .map_err(|_| Error::format(at + 4, "record name is not UTF-8"))?
            .to_string();
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32_le("dimension")? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::format(at, format!("record `{name}` size overflows")))?;
        let data = r.f64s_le(n, "tensor data")?;
        let t = Tensor::new(&shape, data).map_err(|e| Error::format(at, format!("record `{name}`: {e}")))?;
        if out.iter().any(|(m, _)| *m == name) {
            return Err(Error::format(at, format!("duplicate record `{name}`")));
        }
        out.push((name, t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{build_dataset, synth_targets};
    use crate::forward_model::ComplexMatrix;
    use num_complex::Complex64;

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            measurement_modes: 6,
            image_side: 28,
            num_classes: 10,
            enc_filters: 3,
            dec_filters: 3,
            cls_filters: 3,
            gate_channels: 2,
            enc_kernel: 2,
            up_kernel: 2,
            merge_kernel: 1,
            cls_kernel: 3,
        }
    }

    fn tiny_set(n: usize, seed: u64) -> Dataset {
        let data = (0..6 * 784)
            .map(|i| Complex64::new(((i * 31 % 17) as f64 - 8.0) / 8.0, ((i * 7 % 13) as f64 - 6.0) / 6.0))
            .collect();
        let h = ComplexMatrix::new(6, 784, data).unwrap();
        let (imgs, labels) = synth_targets(n, seed).unwrap();
        build_dataset(&imgs, &labels, &h, Some(30.0), seed).unwrap()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let ds = tiny_set(8, 1);
        let (state, log) = fit(&ds, tiny_arch(), &cfg(0)).unwrap();
        assert!(log.is_empty());
        assert_eq!(state, init_state(&ds, tiny_arch(), 3).unwrap());
    }

    #[test]
    fn same_seed_gives_identical_checkpoints() {
        let ds = tiny_set(10, 2);
        let (a, la) = fit(&ds, tiny_arch(), &cfg(2)).unwrap();
        let (b, lb) = fit(&ds, tiny_arch(), &cfg(2)).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
        assert_eq!(la, lb);
        assert_eq!(la.len(), 6);
        assert_eq!(a.step, 6);
    }

    #[test]
    fn checkpoint_round_trip_and_resume() {
        let ds = tiny_set(10, 4);
        let (full, full_log) = fit(&ds, tiny_arch(), &cfg(3)).unwrap();

        let (half, _) = fit(&ds, tiny_arch(), &cfg(1)).unwrap();
        let bytes = half.to_bytes().unwrap();
        let mut resumed = TrainState::from_bytes(&bytes).unwrap();
        assert_eq!(resumed.to_bytes().unwrap(), bytes);
        let rest = fit_from(&mut resumed, &ds, &cfg(3), |_, _| Ok(())).unwrap();
        assert_eq!(resumed.to_bytes().unwrap(), full.to_bytes().unwrap());
        assert_eq!(rest[..], full_log[3..]);
    }

    #[test]
    fn damaged_checkpoints_are_rejected() {
        let ds = tiny_set(4, 5);
        let state = init_state(&ds, tiny_arch(), 1).unwrap();
        let bytes = state.to_bytes().unwrap();
        for cut in [0, 3, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(TrainState::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut v = bytes.clone();
        v[4] = 9;
        match TrainState::from_bytes(&v) {
            Err(Error::Format { offset: 4, msg }) => assert!(msg.contains("version")),
            other => panic!("{other:?}"),
        }
        let mut m = bytes;
        m[1] = b'X';
        assert!(matches!(
            TrainState::from_bytes(&m),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn each_update_freezes_the_other_network() {
        let ds = tiny_set(8, 6);
        let mut state = init_state(&ds, tiny_arch(), 2).unwrap();
        let (x, y, l) = ds.batch(&[0, 1, 2, 3], &state.norm).unwrap();
        let gen_before = state.gen.store.clone();
        let disc_before = state.disc.store.clone();
        let b = train_step(&mut state, &x, &y, &l, &cfg(1)).unwrap();
        assert!(b.is_finite());
        assert_ne!(state.gen.store, gen_before);
        assert_ne!(state.disc.store, disc_before);
        // gradient buffers of the frozen side are never filled from the
        // other network's graph
        assert!(state
            .unc
            .store
            .iter()
            .all(|(_, t)| t.grad.as_ref().is_some_and(|g| g.iter().all(|v| *v != 0.0))));
    }

    #[test]
    fn non_finite_input_is_reported() {
        let ds = tiny_set(4, 7);
        let mut state = init_state(&ds, tiny_arch(), 2).unwrap();
        let (mut x, y, l) = ds.batch(&[0, 1], &state.norm).unwrap();
        x.data_mut()[0] = f64::NAN;
        match train_step(&mut state, &x, &y, &l, &cfg(1)) {
            Err(Error::NonFinite { tensor, step: 1 }) => assert!(tensor.contains("node"), "{tensor}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_csv_layout() {
        let rows = [LogRow {
            step: 1,
            epoch: 1,
            losses: LossBreakdown {
                l_cat: 2.0,
                ..Default::default()
            },
        }];
        let s = log_csv(&rows);
        assert!(s.starts_with("step,epoch,l_d,l_cat,l_l1,l_adv,l_img,l_g,sigma1,sigma2\n1,1,0,2,"));
        assert_eq!(epoch_mean_cat(&rows, 1), Some(2.0));
        assert_eq!(epoch_mean_cat(&rows, 2), None);
    }
}
