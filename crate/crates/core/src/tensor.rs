//! Dense row-major `f64` tensors.
//!
//! Images are stored channels-last (`[batch, height, width, channels]`) and
//! convolution kernels as `[kh, kw, cin, cout]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::dim(format!("zero-sized dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n]).expect("zeros: positive shape")
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(&[1], vec![v]).unwrap()
    }

    /// Marks the tensor as a trainable leaf.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable view of the values. The shape stays fixed.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) {
        assert_eq!(g.len(), self.data.len(), "gradient length mismatch");
        match self.grad.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
    }
}

/// Fan-in / fan-out of a weight tensor: the last two axes are (in, out), any
/// leading axes form the receptive field.
pub fn fans(shape: &[usize]) -> Result<(usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::contract(format!(
            "fan-in/fan-out undefined for shape {shape:?}; biases are zero-initialized"
        )));
    }
    let r = shape.len();
    let receptive: usize = shape[..r - 2].iter().product();
    Ok((receptive * shape[r - 2], receptive * shape[r - 1]))
}

/// Xavier/Glorot uniform initialization on ±sqrt(6 / (fan_in + fan_out)).
pub fn xavier_init(shape: &[usize], seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xavier_init_with(shape, &mut rng)
}

pub fn xavier_init_with<R: Rng>(shape: &[usize], rng: &mut R) -> Result<Tensor> {
    let (fan_in, fan_out) = fans(shape)?;
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Ok(Tensor::new(shape, data)?.with_grad())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(&[2, 0], vec![]).is_err());
        assert_eq!(Tensor::zeros(&[2, 3]).len(), 6);
    }

    #[test]
    fn xavier_is_deterministic() {
        let a = xavier_init(&[3, 3, 4, 8], 7).unwrap();
        let b = xavier_init(&[3, 3, 4, 8], 7).unwrap();
        assert_eq!(a.data(), b.data());
        let c = xavier_init(&[3, 3, 4, 8], 8).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn xavier_respects_bound() {
        let t = xavier_init(&[100, 100], 1).unwrap();
        let bound = (6.0f64 / 200.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn xavier_mean_is_centered() {
        // Uniform on ±a has σ = a/√3; the mean of n draws has σ/√n.
        let t = xavier_init(&[100, 100], 3).unwrap();
        let a = (6.0f64 / 200.0).sqrt();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * a / 3f64.sqrt() / n.sqrt());
    }

    #[test]
    fn xavier_rejects_vectors() {
        assert!(matches!(xavier_init(&[10], 0), Err(Error::Contract(_))));
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::zeros(&[2]).with_grad();
        t.accumulate_grad(&[1.0, 2.0]);
        t.accumulate_grad(&[1.0, 2.0]);
        assert_eq!(t.grad.as_deref(), Some(&[2.0, 4.0][..]));
        t.zero_grad();
        assert_eq!(t.grad.as_deref(), Some(&[0.0, 0.0][..]));
    }
}
