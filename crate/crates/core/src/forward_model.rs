//! Sensing-matrix synthesis and the linear measurement model `g = H rho + n`
//! for a bistatic frequency-diverse aperture scanned over a grid of
//! positions.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Dense row-major complex matrix. Also used for column vectors (`cols == 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dim(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Degenerate("sensing matrix has non-finite entries".into()));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        ComplexMatrix { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `H x` for complex `x`.
    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(Error::dim(format!(
                "vector of length {} against {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(h, v)| h * v).sum())
            .collect())
    }

    /// `H rho` for a real reflectivity vector.
    pub fn mul_real(&self, rho: &[f64]) -> Result<Vec<Complex64>> {
        if rho.len() != self.cols {
            return Err(Error::dim(format!(
                "reflectivity of length {} against {}x{} matrix",
                rho.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(rho).map(|(h, &v)| h * v).sum())
            .collect())
    }

    /// `H^H y` (conjugate transpose).
    pub fn adjoint_mul(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        if y.len() != self.rows {
            return Err(Error::dim(format!(
                "measurement of length {} against {}x{} matrix",
                y.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for (o, h) in out.iter_mut().zip(self.row(r)) {
                *o += h.conj() * yr;
            }
        }
        Ok(out)
    }
}

/// Discretized scene plane facing the aperture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub pixels_x: usize,
    pub pixels_y: usize,
    /// metres
    pub pixel_pitch: f64,
    /// distance of the scene plane from the aperture plane, metres
    pub standoff: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            pixels_x: 28,
            pixels_y: 28,
            pixel_pitch: 0.01,
            standoff: 0.5,
        }
    }
}

impl SceneConfig {
    pub fn n_pixels(&self) -> usize {
        self.pixels_x * self.pixels_y
    }

    /// Centre of pixel `n` (row-major, y down) in aperture coordinates.
    pub fn pixel_position(&self, n: usize) -> [f64; 3] {
        let (iy, ix) = (n / self.pixels_x, n % self.pixels_x);
        let cx = (ix as f64 - (self.pixels_x as f64 - 1.0) / 2.0) * self.pixel_pitch;
        let cy = (iy as f64 - (self.pixels_y as f64 - 1.0) / 2.0) * self.pixel_pitch;
        [cx, cy, self.standoff]
    }

    fn validate(&self) -> Result<()> {
        if self.pixels_x == 0 || self.pixels_y == 0 || !(self.pixel_pitch > 0.0) || self.standoff < 0.0 {
            return Err(Error::contract(format!("invalid scene config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisMode {
    /// i.i.d. circular complex Gaussian entries with unit variance.
    Gaussian,
    /// Product of scalar Green's-function fields radiated by random sources
    /// on the transmit and receive panels.
    Greens,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApertureConfig {
    pub n_freqs: usize,
    /// Hz
    pub f_min: f64,
    /// Hz
    pub f_max: f64,
    /// Scan positions; laid out on a square grid when a perfect square.
    pub n_positions: usize,
    /// metres between neighbouring scan positions
    pub position_pitch: f64,
    /// Source points per panel in greens mode.
    pub aperture_points: usize,
    /// Side length of each square panel, metres.
    pub panel_size: f64,
    /// Transmit/receive panel centres sit at ±baseline/2 along x.
    pub baseline: f64,
    pub synthesis_mode: SynthesisMode,
}

impl Default for ApertureConfig {
    fn default() -> Self {
        ApertureConfig {
            n_freqs: 64,
            f_min: 8e9,
            f_max: 12e9,
            n_positions: 16,
            position_pitch: 0.08,
            aperture_points: 100,
            panel_size: 0.15,
            baseline: 0.2,
            synthesis_mode: SynthesisMode::Gaussian,
        }
    }
}

impl ApertureConfig {
    /// Number of measurement modes (frequencies x positions).
    pub fn n_modes(&self) -> usize {
        self.n_freqs * self.n_positions
    }

    pub fn frequency(&self, k: usize) -> f64 {
        if self.n_freqs == 1 {
            self.f_min
        } else {
            self.f_min + (self.f_max - self.f_min) * k as f64 / (self.n_freqs - 1) as f64
        }
    }

    /// Offset of scan position `p`, centred on the origin.
    pub fn position_offset(&self, p: usize) -> [f64; 2] {
        let side = (self.n_positions as f64).sqrt().round() as usize;
        if side * side == self.n_positions {
            let (iy, ix) = (p / side, p % side);
            let c = (side as f64 - 1.0) / 2.0;
            [
                (ix as f64 - c) * self.position_pitch,
                (iy as f64 - c) * self.position_pitch,
            ]
        } else {
            let c = (self.n_positions as f64 - 1.0) / 2.0;
            [(p as f64 - c) * self.position_pitch, 0.0]
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_freqs == 0 || self.n_positions == 0 || !(self.f_min < self.f_max) || self.f_min <= 0.0 {
            return Err(Error::contract(format!("invalid aperture config {self:?}")));
        }
        if self.synthesis_mode == SynthesisMode::Greens && self.aperture_points == 0 {
            return Err(Error::contract("greens mode needs at least one aperture point"));
        }
        Ok(())
    }
}

/// Scalar field at `target` radiated by point sources `points` with complex
/// amplitudes `weights`: `sum_q w_q exp(-j k d_q) / (4 pi d_q)`.
pub fn radiated_field(
    points: &[[f64; 3]],
    weights: &[Complex64],
    wavenumber: f64,
    target: [f64; 3],
) -> Result<Complex64> {
    let mut e = Complex64::new(0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        let d = ((p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2) + (p[2] - target[2]).powi(2)).sqrt();
        if d == 0.0 {
            return Err(Error::Singularity(format!(
                "source at {p:?} coincides with scene point"
            )));
        }
        e += w * Complex64::from_polar(1.0 / (4.0 * std::f64::consts::PI * d), -wavenumber * d);
    }
    Ok(e)
}

fn complex_normal<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Builds the `M x N` sensing matrix. Row `m = position * n_freqs + freq`.
pub fn synthesize_h(scene: &SceneConfig, aperture: &ApertureConfig, seed: u64) -> Result<ComplexMatrix> {
    scene.validate()?;
    aperture.validate()?;
    let (m, n) = (aperture.n_modes(), scene.n_pixels());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match aperture.synthesis_mode {
        SynthesisMode::Gaussian => {
            let data = (0..m * n).map(|_| complex_normal(&mut rng, 1.0)).collect();
            ComplexMatrix::new(m, n, data)
        }
        SynthesisMode::Greens => {
            if scene.standoff == 0.0 {
                return Err(Error::Singularity("scene standoff is zero".into()));
            }
            let q = aperture.aperture_points;
            let mut panel = |cx: f64| -> Vec<[f64; 3]> {
                (0..q)
                    .map(|_| {
                        let h = aperture.panel_size / 2.0;
                        [cx + rng.gen_range(-h..=h), rng.gen_range(-h..=h), 0.0]
                    })
                    .collect()
            };
            let tx_pts = panel(-aperture.baseline / 2.0);
            let rx_pts = panel(aperture.baseline / 2.0);
            // Each panel radiates a frequency-dependent random pattern that
            // moves rigidly with the scan position.
            let mut weights = |_: usize| -> Vec<Complex64> { (0..q).map(|_| complex_normal(&mut rng, 1.0)).collect() };
            let tx_w: Vec<Vec<Complex64>> = (0..aperture.n_freqs).map(&mut weights).collect();
            let rx_w: Vec<Vec<Complex64>> = (0..aperture.n_freqs).map(&mut weights).collect();
            let pixels: Vec<[f64; 3]> = (0..n).map(|i| scene.pixel_position(i)).collect();

            let mut data = Vec::with_capacity(m * n);
            let shift = |pts: &[[f64; 3]], o: [f64; 2]| -> Vec<[f64; 3]> {
                pts.iter().map(|p| [p[0] + o[0], p[1] + o[1], p[2]]).collect()
            };
            for p in 0..aperture.n_positions {
                let o = aperture.position_offset(p);
                let (tx, rx) = (shift(&tx_pts, o), shift(&rx_pts, o));
                for k in 0..aperture.n_freqs {
                    let wn = 2.0 * std::f64::consts::PI * aperture.frequency(k) / SPEED_OF_LIGHT;
                    for &r in &pixels {
                        let et = radiated_field(&tx, &tx_w[k], wn, r)?;
                        let er = radiated_field(&rx, &rx_w[k], wn, r)?;
                        data.push(et * er);
                    }
                }
            }
            ComplexMatrix::new(m, n, data)
        }
    }
}

/// Noise variance per complex entry giving `snr_db` against `signal`.
fn noise_variance(signal: &[Complex64], snr_db: f64) -> f64 {
    let power: f64 = signal.iter().map(|z| z.norm_sqr()).sum();
    power / (signal.len() as f64 * 10f64.powf(snr_db / 10.0))
}

/// `g = H rho + n` with circular complex Gaussian noise at `snr_db` relative
/// to `||H rho||^2`; `None` means noiseless.
pub fn forward_measure(h: &ComplexMatrix, rho: &[f64], snr_db: Option<f64>, seed: u64) -> Result<Vec<Complex64>> {
    let mut g = h.mul_real(rho)?;
    if let Some(snr) = snr_db {
        let var = noise_variance(&g, snr);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for z in &mut g {
            *z += complex_normal(&mut rng, var);
        }
    }
    Ok(g)
}

/// `[M, 2]` tensor with real parts in column 0 and imaginary parts in column 1.
pub fn split_complex(g: &[Complex64]) -> Tensor {
    let data = g.iter().flat_map(|z| [z.re, z.im]).collect();
    Tensor::new(&[g.len(), 2], data).expect("non-empty measurement")
}

pub fn merge_complex(t: &Tensor) -> Result<Vec<Complex64>> {
    if t.shape().len() != 2 || t.shape()[1] != 2 {
        return Err(Error::dim(format!("expected [M, 2], got {:?}", t.shape())));
    }
    Ok(t.data().chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

/// Per-channel (real / imaginary) standardization statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl NormStats {
    /// `(x - mean) / std` per channel of an `[M, 2]` tensor.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.shape()[1] != 2 {
            return Err(Error::dim(format!("expected [M, 2], got {:?}", x.shape())));
        }
        let data = x
            .data()
            .chunks_exact(2)
            .flat_map(|c| [(c[0] - self.mean[0]) / self.std[0], (c[1] - self.mean[1]) / self.std[1]])
            .collect();
        Tensor::new(x.shape(), data)
    }

    /// Same as [`NormStats::apply`] on a raw `[re, im, re, im, ...]` slice.
    pub fn apply_interleaved(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(
            x.chunks_exact(2)
                .flat_map(|c| [(c[0] - self.mean[0]) / self.std[0], (c[1] - self.mean[1]) / self.std[1]]),
        );
    }
}

/// Fits per-channel statistics over the whole set and standardizes it.
pub fn normalize_dataset(inputs: &[Tensor]) -> Result<(Vec<Tensor>, NormStats)> {
    if inputs.len() < 2 {
        return Err(Error::contract("normalization needs at least two samples"));
    }
    let stats = fit_norm_stats(inputs.iter().map(|t| t.data()))?;
    let out = inputs.iter().map(|t| stats.apply(t)).collect::<Result<Vec<_>>>()?;
    Ok((out, stats))
}

/// Population mean / std per channel over interleaved `[re, im]` buffers.
pub fn fit_norm_stats<'a>(samples: impl Iterator<Item = &'a [f64]> + Clone) -> Result<NormStats> {
    let mut sum = [0.0; 2];
    let mut count = 0usize;
    for s in samples.clone() {
        for c in s.chunks_exact(2) {
            sum[0] += c[0];
            sum[1] += c[1];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::contract("normalization over an empty set"));
    }
    let mean = [sum[0] / count as f64, sum[1] / count as f64];
    let mut ss = [0.0; 2];
    for s in samples {
        for c in s.chunks_exact(2) {
            ss[0] += (c[0] - mean[0]).powi(2);
            ss[1] += (c[1] - mean[1]).powi(2);
        }
    }
    let std = [(ss[0] / count as f64).sqrt(), (ss[1] / count as f64).sqrt()];
    for (ch, s) in std.iter().enumerate() {
        if !(*s > 0.0) || !s.is_finite() {
            return Err(Error::Degenerate(format!("channel {ch} has zero variance")));
        }
    }
    Ok(NormStats { mean, std })
}
