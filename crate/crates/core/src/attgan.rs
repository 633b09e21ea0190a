//! Attention-gated multi-task generator and its discriminator.
//!
//! The generator maps a normalized measurement `[batch, modes, 2]` to a
//! reconstructed image `[batch, side, side]` and class probabilities
//! `[batch, classes]`. A dense layer projects the measurement onto the image
//! grid, a three-stage strided encoder builds a bottleneck, and a three-stage
//! decoder climbs back up with attention-gated skips; the projection is also
//! added to the head's pre-activation. The classifier reads
//! the bottleneck. The discriminator reuses the encoder layout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Padding, Var};
use crate::error::{Error, Result};
use crate::optim::{Binding, ParamId, ParamStore};
use crate::tensor::{xavier_init_with, Tensor};

/// Layer widths and kernel sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    pub measurement_modes: usize,
    pub image_side: usize,
    pub num_classes: usize,
    pub enc_filters: usize,
    pub dec_filters: usize,
    pub cls_filters: usize,
    pub gate_channels: usize,
    pub enc_kernel: usize,
    pub up_kernel: usize,
    pub merge_kernel: usize,
    pub cls_kernel: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            measurement_modes: 1024,
            image_side: 28,
            num_classes: 10,
            enc_filters: 256,
            dec_filters: 64,
            cls_filters: 128,
            gate_channels: 32,
            enc_kernel: 2,
            up_kernel: 2,
            merge_kernel: 1,
            cls_kernel: 3,
        }
    }
}

impl ArchConfig {
    /// Four filters per stage on an 8x8 grid; small enough for exhaustive
    /// finite-difference checks.
    pub fn tiny() -> Self {
        ArchConfig {
            measurement_modes: 4,
            image_side: 8,
            num_classes: 3,
            enc_filters: 4,
            dec_filters: 4,
            cls_filters: 4,
            gate_channels: 2,
            enc_kernel: 3,
            up_kernel: 3,
            merge_kernel: 3,
            cls_kernel: 3,
        }
    }

    /// Spatial side at the input and after each encoder stage.
    pub fn stage_sides(&self) -> [usize; 4] {
        let s0 = self.image_side;
        let s1 = s0.div_ceil(2);
        let s2 = s1.div_ceil(2);
        [s0, s1, s2, s2.div_ceil(2)]
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.measurement_modes,
            self.image_side,
            self.num_classes,
            self.enc_filters,
            self.dec_filters,
            self.cls_filters,
            self.gate_channels,
            self.enc_kernel,
            self.merge_kernel,
            self.cls_kernel,
        ];
        if fields.contains(&0) {
            return Err(Error::contract(format!(
                "architecture has a zero width or kernel: {self:?}"
            )));
        }
        if self.up_kernel < 2 {
            // stride-2 transpose conv with k = 1 leaves holes and cannot
            // reach odd target sides
            return Err(Error::contract("up_kernel must be at least 2"));
        }
        if self.image_side < 2 {
            return Err(Error::contract("image side must be at least 2"));
        }
        Ok(())
    }
}

/// Kernel and optional bias of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub kernel: ParamId,
    pub bias: Option<ParamId>,
}

impl ConvParams {
    fn apply(&self, g: &mut Graph, b: &Binding, x: Var, stride: usize) -> Result<Var> {
        let y = g.conv2d(x, b.var(self.kernel), stride, Padding::Same)?;
        match self.bias {
            Some(bias) => g.add_bias(y, b.var(bias)),
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DenseParams {
    w: ParamId,
    b: ParamId,
}

impl DenseParams {
    fn apply(&self, g: &mut Graph, b: &Binding, x: Var) -> Result<Var> {
        g.dense(x, b.var(self.w), b.var(self.b))
    }
}

/// Sequential Xavier initializer writing into a store.
struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn weight(&mut self, name: String, shape: &[usize]) -> Result<ParamId> {
        let t = xavier_init_with(shape, &mut self.rng)?;
        Ok(self.store.add(name, t))
    }

    fn bias(&mut self, name: String, n: usize) -> ParamId {
        self.store.add(name, Tensor::zeros(&[n]).with_grad())
    }

    fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize, bias: bool) -> Result<ConvParams> {
        let kernel = self.weight(format!("{name}.k"), &[k, k, cin, cout])?;
        let bias = bias.then(|| self.bias(format!("{name}.b"), cout));
        Ok(ConvParams { kernel, bias })
    }

    /// Transpose-conv kernels are stored `[k, k, out, in]`.
    fn up(&mut self, name: &str, k: usize, cin: usize, cout: usize) -> Result<ConvParams> {
        let kernel = self.weight(format!("{name}.k"), &[k, k, cout, cin])?;
        let bias = Some(self.bias(format!("{name}.b"), cout));
        Ok(ConvParams { kernel, bias })
    }

    fn dense(&mut self, name: &str, n_in: usize, n_out: usize) -> Result<DenseParams> {
        Ok(DenseParams {
            w: self.weight(format!("{name}.w"), &[n_in, n_out])?,
            b: self.bias(format!("{name}.b"), n_out),
        })
    }
}

/// Attention gate on one skip connection.
///
/// The gate signal and the skip feature are each projected to a common width
/// by 1x1 convolutions, summed, rectified and squeezed to a single-channel
/// ratio map by a sigmoid layer. The skip feature is scaled by that map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionGate {
    pub w_gate: ConvParams,
    pub w_input: ConvParams,
    pub w_psi: ConvParams,
}

/// Gated feature and the ratio map that produced it.
#[derive(Debug, Clone, Copy)]
pub struct GateOutput {
    pub output: Var,
    pub ratio: Var,
}

impl AttentionGate {
    fn build(bld: &mut Builder, name: &str, gate_c: usize, input_c: usize, inter_c: usize) -> Result<Self> {
        Ok(AttentionGate {
            w_gate: bld.conv(&format!("{name}.gate"), 1, gate_c, inter_c, true)?,
            w_input: bld.conv(&format!("{name}.input"), 1, input_c, inter_c, false)?,
            w_psi: bld.conv(&format!("{name}.psi"), 1, inter_c, 1, true)?,
        })
    }

    /// Standalone gate with its own store, mainly for experiments and tests.
    pub fn standalone(gate_c: usize, input_c: usize, inter_c: usize, seed: u64) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new();
        let mut bld = Builder {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let ag = Self::build(&mut bld, "ag", gate_c, input_c, inter_c)?;
        Ok((ag, store))
    }

    /// `gate_signal` and `ag_input` must share batch and spatial dims.
    pub fn forward(&self, g: &mut Graph, b: &Binding, gate_signal: Var, ag_input: Var) -> Result<GateOutput> {
        let (gs, xs) = (g.shape(gate_signal).to_vec(), g.shape(ag_input).to_vec());
        if gs.len() != 4 || xs.len() != 4 || gs[..3] != xs[..3] {
            return Err(Error::dim(format!(
                "attention gate: gate signal {gs:?} and input {xs:?} differ in batch or spatial dims"
            )));
        }
        let wg = self.w_gate.apply(g, b, gate_signal, 1)?;
        self.finish(g, b, wg, ag_input)
    }

    /// Same as [`forward`](Self::forward) for a gate signal that is still at
    /// a coarser resolution. A 1x1 convolution commutes with nearest
    /// upsampling, so the projection runs before the resize.
    fn forward_coarse(&self, g: &mut Graph, b: &Binding, coarse: Var, ag_input: Var) -> Result<GateOutput> {
        let xs = g.shape(ag_input).to_vec();
        let wg = self.w_gate.apply(g, b, coarse, 1)?;
        let wg = g.upsample_nearest(wg, xs[1], xs[2])?;
        self.finish(g, b, wg, ag_input)
    }

    fn finish(&self, g: &mut Graph, b: &Binding, wg: Var, ag_input: Var) -> Result<GateOutput> {
        let wx = self.w_input.apply(g, b, ag_input, 1)?;
        let s = g.add(wg, wx)?;
        let s = g.relu(s);
        let psi = self.w_psi.apply(g, b, s, 1)?;
        let ratio = g.sigmoid(psi);
        let output = g.mul_channels(ag_input, ratio)?;
        Ok(GateOutput { output, ratio })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DecoderStage {
    up: ConvParams,
    gate: AttentionGate,
    merge: ConvParams,
}

/// Graph handles for one generator forward pass.
#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    /// `[batch, side, side]` in `[0, 1]`.
    pub image: Var,
    /// `[batch, classes]`, rows sum to one.
    pub class_probs: Var,
    /// Attention ratio maps from the coarsest to the finest skip.
    pub ratios: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub cfg: ArchConfig,
    pub store: ParamStore,
    proj: DenseParams,
    encoder: [ConvParams; 3],
    decoder: [DecoderStage; 3],
    head: ConvParams,
    cls_conv: [ConvParams; 2],
    cls_out: DenseParams,
}

fn build_encoder(bld: &mut Builder, prefix: &str, cfg: &ArchConfig) -> Result<[ConvParams; 3]> {
    let f = cfg.enc_filters;
    Ok([
        bld.conv(&format!("{prefix}.enc0"), cfg.enc_kernel, 1, f, true)?,
        bld.conv(&format!("{prefix}.enc1"), cfg.enc_kernel, f, f, true)?,
        bld.conv(&format!("{prefix}.enc2"), cfg.enc_kernel, f, f, true)?,
    ])
}

/// Returns the three encoder stage outputs.
fn run_encoder(g: &mut Graph, b: &Binding, enc: &[ConvParams; 3], x: Var) -> Result<[Var; 3]> {
    let mut out = [x; 3];
    let mut h = x;
    for (i, c) in enc.iter().enumerate() {
        let y = c.apply(g, b, h, 2)?;
        h = g.relu(y);
        out[i] = h;
    }
    Ok(out)
}

fn copy_tensors(dst: &mut ParamStore, src: &ParamStore) -> Result<()> {
    if src.len() != dst.len() {
        return Err(Error::contract(format!(
            "parameter set has {} tensors, architecture expects {}",
            src.len(),
            dst.len()
        )));
    }
    for i in 0..dst.len() {
        let id = ParamId(i);
        let name = dst.name(id).to_string();
        let t = src
            .by_name(&name)
            .ok_or_else(|| Error::contract(format!("missing parameter `{name}`")))?;
        if t.shape() != dst.get(id).shape() {
            return Err(Error::dim(format!(
                "parameter `{name}` has shape {:?}, expected {:?}",
                t.shape(),
                dst.get(id).shape()
            )));
        }
        let slot = dst.get_mut(id);
        slot.data_mut().copy_from_slice(t.data());
        slot.grad = None;
    }
    Ok(())
}

impl Generator {
    /// Xavier-uniform weights and zero biases, drawn in a fixed order from
    /// `seed`.
    pub fn new(cfg: ArchConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut bld = Builder {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let side = cfg.image_side;
        let proj = bld.dense("gen.proj", 2 * cfg.measurement_modes, side * side)?;
        let encoder = build_encoder(&mut bld, "gen", &cfg)?;
        let (fe, fd) = (cfg.enc_filters, cfg.dec_filters);
        // (coarse channels, skip channels) per level, coarsest first
        let levels = [(fe, fe), (fd, fe), (fd, 1)];
        let mut stages = Vec::with_capacity(3);
        for (i, &(cc, sc)) in levels.iter().enumerate() {
            let name = format!("gen.dec{i}");
            stages.push(DecoderStage {
                up: bld.up(&format!("{name}.up"), cfg.up_kernel, cc, fd)?,
                gate: AttentionGate::build(&mut bld, &format!("{name}.ag"), cc, sc, cfg.gate_channels)?,
                merge: bld.conv(&format!("{name}.merge"), cfg.merge_kernel, fd + sc, fd, true)?,
            });
        }
        let head = bld.conv("gen.head", 1, fd, 1, true)?;
        let fc = cfg.cls_filters;
        let cls_conv = [
            bld.conv("gen.cls0", cfg.cls_kernel, fe, fc, true)?,
            bld.conv("gen.cls1", cfg.cls_kernel, fc, fc, true)?,
        ];
        let cls_side = cfg.stage_sides()[3].div_ceil(2);
        let cls_out = bld.dense("gen.cls_out", cls_side * cls_side * fc, cfg.num_classes)?;
        Ok(Generator {
            cfg,
            store,
            proj,
            encoder,
            decoder: [stages[0], stages[1], stages[2]],
            head,
            cls_conv,
            cls_out,
        })
    }

    /// Rebuilds the layout for `cfg` and copies matching tensors from `params`.
    pub fn from_params(cfg: ArchConfig, params: &ParamStore) -> Result<Self> {
        let mut gen = Generator::new(cfg, 0)?;
        copy_tensors(&mut gen.store, params)?;
        Ok(gen)
    }

    /// Number of scalars in the transpose-conv, gate, merge and head layers.
    pub fn decoder_param_count(&self) -> usize {
        self.store
            .iter()
            .filter(|(n, _)| n.starts_with("gen.dec") || n.starts_with("gen.head"))
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn forward(&self, g: &mut Graph, b: &Binding, input: Var) -> Result<GeneratorOutput> {
        let cfg = &self.cfg;
        let s = g.shape(input).to_vec();
        if s.len() != 3 || s[1] != cfg.measurement_modes || s[2] != 2 {
            return Err(Error::dim(format!(
                "generator input {s:?}, expected [batch, {}, 2]",
                cfg.measurement_modes
            )));
        }
        let batch = s[0];
        let side = cfg.image_side;
        let flat = g.reshape(input, &[batch, 2 * cfg.measurement_modes])?;
        let p0 = self.proj.apply(g, b, flat)?;
        let p0 = g.reshape(p0, &[batch, side, side, 1])?;
        let [e1, e2, e3] = run_encoder(g, b, &self.encoder, p0)?;

        let mut d = e3;
        let mut ratios = Vec::with_capacity(3);
        for (stage, skip) in self.decoder.iter().zip([e2, e1, p0]) {
            let sk = g.shape(skip).to_vec();
            let up = g.conv2d_transpose(d, b.var(stage.up.kernel), 2)?;
            let up = g.crop(up, sk[1], sk[2])?;
            let up = g.add_bias(up, b.var(stage.up.bias.expect("up bias")))?;
            let up = g.relu(up);
            let gated = stage.gate.forward_coarse(g, b, d, skip)?;
            ratios.push(gated.ratio);
            let cat = g.concat_channels(up, gated.output)?;
            let m = stage.merge.apply(g, b, cat, 1)?;
            d = g.relu(m);
        }
        // The projection is added back before the sigmoid: without this long
        // skip, L1 on mostly-empty targets drives the head into saturation
        // at zero within the first few hundred steps.
        let img = self.head.apply(g, b, d, 1)?;
        let img = g.add(img, p0)?;
        let img = g.sigmoid(img);
        let image = g.reshape(img, &[batch, side, side])?;

        let c = self.cls_conv[0].apply(g, b, e3, 1)?;
        let c = g.relu(c);
        let c = self.cls_conv[1].apply(g, b, c, 2)?;
        let c = g.relu(c);
        let n = g.value(c).len() / batch;
        let c = g.reshape(c, &[batch, n])?;
        let logits = self.cls_out.apply(g, b, c)?;
        let class_probs = g.softmax(logits)?;
        Ok(GeneratorOutput {
            image,
            class_probs,
            ratios,
        })
    }

    /// Forward pass on a throwaway graph with frozen parameters.
    pub fn infer(&self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let b = self.store.bind_frozen(&mut g);
        let x = g.constant(input);
        let out = self.forward(&mut g, &b, x)?;
        Ok((g.tensor(out.image), g.tensor(out.class_probs)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub cfg: ArchConfig,
    pub store: ParamStore,
    encoder: [ConvParams; 3],
    out: DenseParams,
}

impl Discriminator {
    pub fn new(cfg: ArchConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut bld = Builder {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let encoder = build_encoder(&mut bld, "disc", &cfg)?;
        let s3 = cfg.stage_sides()[3];
        let out = bld.dense("disc.out", s3 * s3 * cfg.enc_filters, 1)?;
        Ok(Discriminator {
            cfg,
            store,
            encoder,
            out,
        })
    }

    pub fn from_params(cfg: ArchConfig, params: &ParamStore) -> Result<Self> {
        let mut d = Discriminator::new(cfg, 0)?;
        copy_tensors(&mut d.store, params)?;
        Ok(d)
    }

    /// `image` is `[batch, side, side]`; returns `[batch, 1]` probabilities.
    pub fn forward(&self, g: &mut Graph, b: &Binding, image: Var) -> Result<Var> {
        let side = self.cfg.image_side;
        let s = g.shape(image).to_vec();
        if s.len() != 3 || s[1] != side || s[2] != side {
            return Err(Error::dim(format!(
                "discriminator input {s:?}, expected [batch, {side}, {side}]"
            )));
        }
        let batch = s[0];
        let x = g.reshape(image, &[batch, side, side, 1])?;
        let [_, _, e3] = run_encoder(g, b, &self.encoder, x)?;
        let n = g.value(e3).len() / batch;
        let flat = g.reshape(e3, &[batch, n])?;
        let logit = self.out.apply(g, b, flat)?;
        Ok(g.sigmoid(logit))
    }

    pub fn infer(&self, image: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = self.store.bind_frozen(&mut g);
        let x = g.constant(image);
        let p = self.forward(&mut g, &b, x)?;
        Ok(g.tensor(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    }

    fn gate_setup(seed: u64) -> (AttentionGate, ParamStore, Tensor, Tensor) {
        let (ag, store) = AttentionGate::standalone(3, 2, 4, seed).unwrap();
        (
            ag,
            store,
            random(&[2, 5, 5, 3], seed + 1, -1.0, 1.0),
            random(&[2, 5, 5, 2], seed + 2, -1.0, 1.0),
        )
    }

    fn run_gate(ag: &AttentionGate, store: &ParamStore, gs: &Tensor, x: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let mut g = Graph::new();
        let b = store.bind_frozen(&mut g);
        let (gv, xv) = (g.constant(gs), g.constant(x));
        let o = ag.forward(&mut g, &b, gv, xv).unwrap();
        (g.value(o.output).to_vec(), g.value(o.ratio).to_vec())
    }

    #[test]
    fn zero_psi_gives_half() {
        let (ag, mut store, gs, x) = gate_setup(1);
        store.get_mut(ag.w_psi.kernel).data_mut().fill(0.0);
        store.get_mut(ag.w_psi.bias.unwrap()).data_mut().fill(0.0);
        let (out, ratio) = run_gate(&ag, &store, &gs, &x);
        assert!(ratio.iter().all(|&r| r == 0.5));
        for (o, v) in out.iter().zip(x.data()) {
            assert_eq!(*o, 0.5 * v);
        }
    }

    #[test]
    fn ratios_stay_in_open_unit_interval() {
        for seed in 0..10 {
            let (ag, store, gs, x) = gate_setup(seed * 7);
            let (_, ratio) = run_gate(&ag, &store, &gs, &x);
            assert_eq!(ratio.len(), 2 * 5 * 5);
            assert!(ratio.iter().all(|&r| r > 0.0 && r < 1.0));
        }
    }

    #[test]
    fn saturated_psi_passes_input_through() {
        let (ag, mut store, gs, x) = gate_setup(3);
        store.get_mut(ag.w_psi.kernel).data_mut().fill(0.0);
        store.get_mut(ag.w_psi.bias.unwrap()).data_mut().fill(20.0);
        let (out, _) = run_gate(&ag, &store, &gs, &x);
        for (o, v) in out.iter().zip(x.data()) {
            assert!((o - v).abs() < 1e-8);
        }
    }

    #[test]
    fn gate_rejects_spatial_mismatch() {
        let (ag, store, _, x) = gate_setup(0);
        let mut g = Graph::new();
        let b = store.bind_frozen(&mut g);
        let gs = g.constant(&Tensor::zeros(&[2, 4, 5, 3]));
        let xv = g.constant(&x);
        assert!(matches!(ag.forward(&mut g, &b, gs, xv), Err(Error::Dimension(_))));
    }

    #[test]
    fn raising_psi_bias_grows_positive_outputs() {
        let (ag, mut store, gs, _) = gate_setup(5);
        let x = random(&[2, 5, 5, 2], 9, 0.1, 1.0);
        let (before, _) = run_gate(&ag, &store, &gs, &x);
        store.get_mut(ag.w_psi.bias.unwrap()).data_mut()[0] += 0.5;
        let (after, _) = run_gate(&ag, &store, &gs, &x);
        assert!(after.iter().zip(&before).all(|(a, b)| a > b));
    }

    #[test]
    fn coarse_gate_path_matches_upsampled_gate() {
        let (ag, store) = AttentionGate::standalone(3, 2, 4, 11).unwrap();
        let coarse = random(&[1, 4, 4, 3], 12, -1.0, 1.0);
        let x = random(&[1, 7, 7, 2], 13, -1.0, 1.0);
        let mut g = Graph::new();
        let b = store.bind_frozen(&mut g);
        let (cv, xv) = (g.constant(&coarse), g.constant(&x));
        let fast = ag.forward_coarse(&mut g, &b, cv, xv).unwrap();
        let up = g.upsample_nearest(cv, 7, 7).unwrap();
        let slow = ag.forward(&mut g, &b, up, xv).unwrap();
        for (a, c) in g.value(fast.output).iter().zip(g.value(slow.output)) {
            assert!((a - c).abs() < 1e-14);
        }
    }

    #[test]
    fn generator_shapes_and_ranges() {
        let cfg = ArchConfig {
            enc_filters: 8,
            dec_filters: 4,
            cls_filters: 4,
            gate_channels: 4,
            ..ArchConfig::default()
        };
        let gen = Generator::new(cfg, 1).unwrap();
        for batch in [1, 3] {
            let x = random(&[batch, 1024, 2], 2, -2.0, 2.0);
            let (img, probs) = gen.infer(&x).unwrap();
            assert_eq!(img.shape(), &[batch, 28, 28]);
            assert_eq!(probs.shape(), &[batch, 10]);
            assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            for row in probs.data().chunks(10) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert!(gen.infer(&Tensor::zeros(&[1, 1000, 2])).is_err());
    }

    #[test]
    fn full_size_ratio_maps_follow_skip_sizes() {
        let cfg = ArchConfig {
            enc_filters: 4,
            dec_filters: 4,
            cls_filters: 4,
            gate_channels: 2,
            ..ArchConfig::default()
        };
        let gen = Generator::new(cfg, 3).unwrap();
        let mut g = Graph::new();
        let b = gen.store.bind_frozen(&mut g);
        let x = g.constant(&random(&[2, 1024, 2], 4, -1.0, 1.0));
        let out = gen.forward(&mut g, &b, x).unwrap();
        let sides: Vec<usize> = out.ratios.iter().map(|&r| g.shape(r)[1]).collect();
        assert_eq!(sides, vec![7, 14, 28]);
    }

    #[test]
    fn identical_samples_give_identical_outputs() {
        let gen = Generator::new(ArchConfig::tiny(), 5).unwrap();
        let one = random(&[1, 4, 2], 6, -1.0, 1.0);
        let other = random(&[1, 4, 2], 7, -1.0, 1.0);
        let mut d = one.data().to_vec();
        d.extend_from_slice(other.data());
        d.extend_from_slice(one.data());
        let (img, probs) = gen.infer(&Tensor::new(&[3, 4, 2], d).unwrap()).unwrap();
        assert_eq!(img.data()[..64], img.data()[128..]);
        assert_eq!(probs.data()[..3], probs.data()[6..]);
        let (solo, _) = gen.infer(&one).unwrap();
        assert_eq!(solo.data(), &img.data()[..64]);
    }

    #[test]
    fn discriminator_range_and_determinism() {
        let cfg = ArchConfig {
            enc_filters: 8,
            ..ArchConfig::default()
        };
        let d = Discriminator::new(cfg, 2).unwrap();
        let x = random(&[4, 28, 28], 3, 0.0, 1.0);
        let p = d.infer(&x).unwrap();
        assert_eq!(p.shape(), &[4, 1]);
        assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(p, d.infer(&x).unwrap());
        assert!(d.infer(&Tensor::zeros(&[1, 28, 27])).is_err());
    }

    #[test]
    fn discriminator_input_gradient_matches_fd() {
        let d = Discriminator::new(ArchConfig::tiny(), 8).unwrap();
        let x = random(&[2, 8, 8], 9, 0.0, 1.0);
        let r = check(
            &[x],
            |g, v| {
                let b = d.store.bind_frozen(g);
                let p = d.forward(g, &b, v[0])?;
                Ok(g.sum(p))
            },
            1e-6,
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }

    #[test]
    fn decoder_is_smaller_than_128_filter_reference() {
        let ours = Generator::new(ArchConfig::default(), 0).unwrap();
        let reference = Generator::new(
            ArchConfig {
                dec_filters: 128,
                ..ArchConfig::default()
            },
            0,
        )
        .unwrap();
        assert!(ours.decoder_param_count() < reference.decoder_param_count());
    }

    #[test]
    fn from_params_round_trip() {
        let cfg = ArchConfig::tiny();
        let a = Generator::new(cfg, 1).unwrap();
        let b = Generator::from_params(cfg, &a.store).unwrap();
        assert_eq!(a, b);
        let other = Generator::new(ArchConfig { enc_filters: 5, ..cfg }, 1).unwrap();
        assert!(Generator::from_params(cfg, &other.store).is_err());
    }

    #[test]
    fn zero_sized_architecture_is_rejected() {
        let bad = ArchConfig {
            dec_filters: 0,
            ..ArchConfig::tiny()
        };
        assert!(Generator::new(bad, 0).is_err());
    }
}
