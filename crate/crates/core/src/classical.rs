//! Classical inversion baselines: matched-filter back-projection and
//! conjugate-gradient least squares (CGLS).

use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward_model::ComplexMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when `||H^H r - alpha x|| / ||H^H g||` falls below this.
    pub rel_tol: f64,
    /// Tikhonov weight; `(H^H H + alpha I) x = H^H g`.
    pub tikhonov_alpha: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100,
            rel_tol: 1e-6,
            tikhonov_alpha: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.rel_tol > 0.0) || !(self.tikhonov_alpha >= 0.0) {
            return Err(Error::contract(format!("invalid solver config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    /// Magnitude of the complex estimate.
    pub rho_rec: Vec<f64>,
    pub iterations_used: usize,
    /// `||g - H x||`
    pub residual_norm: f64,
    pub wall_time_s: f64,
    /// Set when CGLS hit zero search-direction curvature and stopped early.
    pub degenerate: bool,
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `|H^H g|` elementwise.
pub fn matched_filter(h: &ComplexMatrix, g: &[Complex64]) -> Result<ReconResult> {
    let t0 = Instant::now();
    let bp = h.adjoint_mul(g)?;
    let rho_rec = bp.iter().map(|z| z.norm()).collect();
    let fit = h.mul_vec(&bp)?;
    let residual_norm = g.iter().zip(&fit).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    Ok(ReconResult {
        rho_rec,
        iterations_used: 0,
        residual_norm,
        wall_time_s: t0.elapsed().as_secs_f64(),
        degenerate: false,
    })
}

/// Complex estimate and per-iteration residual history of CGLS.
#[derive(Debug, Clone, PartialEq)]
pub struct CglsTrace {
    pub x: Vec<Complex64>,
    /// `sqrt(||g - H x_k||^2 + alpha ||x_k||^2)` for k = 0..=iterations.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub degenerate: bool,
}

/// CGLS on `min ||g - H x||^2 + alpha ||x||^2` over complex `x`.
pub fn cgls(h: &ComplexMatrix, g: &[Complex64], cfg: &SolverConfig) -> Result<CglsTrace> {
    cfg.validate()?;
    if g.len() != h.rows() {
        return Err(Error::dim(format!(
            "measurement of length {} against {}x{} matrix",
            g.len(),
            h.rows(),
            h.cols()
        )));
    }
    let alpha = cfg.tikhonov_alpha;
    let zero = Complex64::new(0.0, 0.0);
    let mut x = vec![zero; h.cols()];
    let mut r = g.to_vec();
    let mut s = h.adjoint_mul(&r)?;
    let rhs_norm = norm_sqr(&s).sqrt();
    let mut p = s.clone();
    let mut gamma = norm_sqr(&s);
    let mut residuals = vec![norm_sqr(&r).sqrt()];
    let mut iterations = 0;
    let mut degenerate = false;

    if rhs_norm == 0.0 {
        return Ok(CglsTrace {
            x,
            residuals,
            iterations,
            degenerate,
        });
    }
    while iterations < cfg.max_iters {
        let q = h.mul_vec(&p)?;
        let delta = norm_sqr(&q) + alpha * norm_sqr(&p);
        if !(delta > 0.0) || !delta.is_finite() {
            degenerate = true;
            break;
        }
        let a = gamma / delta;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += a * pi;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= a * qi;
        }
        s = h.adjoint_mul(&r)?;
        if alpha > 0.0 {
            for (si, xi) in s.iter_mut().zip(&x) {
                *si -= alpha * xi;
            }
        }
        iterations += 1;
        residuals.push((norm_sqr(&r) + alpha * norm_sqr(&x)).sqrt());
        let gamma_new = norm_sqr(&s);
        if gamma_new.sqrt() / rhs_norm < cfg.rel_tol {
            break;
        }
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    Ok(CglsTrace {
        x,
        residuals,
        iterations,
        degenerate,
    })
}

/// Least-squares reconstruction via [`cgls`], returned as a magnitude image.
pub fn solve_ls(h: &ComplexMatrix, g: &[Complex64], cfg: &SolverConfig) -> Result<ReconResult> {
    let t0 = Instant::now();
    let tr = cgls(h, g, cfg)?;
    let fit = h.mul_vec(&tr.x)?;
    let residual_norm = g.iter().zip(&fit).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    Ok(ReconResult {
        rho_rec: tr.x.iter().map(|z| z.norm()).collect(),
        iterations_used: tr.iterations,
        residual_norm,
        wall_time_s: t0.elapsed().as_secs_f64(),
        degenerate: tr.degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassicalMethod {
    MatchedFilter,
    LeastSquares(SolverConfig),
}

impl ClassicalMethod {
    pub fn run(&self, h: &ComplexMatrix, g: &[Complex64]) -> Result<ReconResult> {
        match self {
            ClassicalMethod::MatchedFilter => matched_filter(h, g),
            ClassicalMethod::LeastSquares(cfg) => solve_ls(h, g, cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingStats {
    pub mean_s: f64,
    pub std_s: f64,
    pub samples: usize,
}

impl TimingStats {
    pub fn from_durations(d: &[f64]) -> Self {
        let n = d.len().max(1) as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        TimingStats {
            mean_s: mean,
            std_s: var.sqrt(),
            samples: d.len(),
        }
    }
}

/// Mean / std of per-sample wall time; the first sample is run once more
/// beforehand as an untimed warm-up.
pub fn time_reconstruction(
    method: &ClassicalMethod,
    h: &ComplexMatrix,
    samples: &[Vec<Complex64>],
) -> Result<TimingStats> {
    if samples.len() < 10 {
        return Err(Error::contract(format!(
            "timing needs at least 10 samples for a stable mean, got {}",
            samples.len()
        )));
    }
    method.run(h, &samples[0])?;
    let mut d = Vec::with_capacity(samples.len());
    for g in samples {
        let t0 = Instant::now();
        let r = method.run(h, g)?;
        std::hint::black_box(&r);
        d.push(t0.elapsed().as_secs_f64());
    }
    Ok(TimingStats::from_durations(&d))
}
