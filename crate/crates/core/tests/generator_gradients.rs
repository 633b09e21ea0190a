use cmi_core::attgan::{ArchConfig, Generator};
use cmi_core::autodiff::gradcheck::check;
use cmi_core::optim::Binding;
use cmi_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Finite differences over every generator parameter of the tiny variant.
fn full_check(seed: u64) -> f64 {
    let cfg = ArchConfig::tiny();
    let gen = Generator::new(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x = random(&[2, cfg.measurement_modes, 2], &mut rng);
    let wi = random(&[2, cfg.image_side, cfg.image_side], &mut rng);
    let wc = random(&[2, cfg.num_classes], &mut rng);
    // Zero biases behind dead ReLUs put pre-activations exactly on the kink,
    // where the one-sided differences disagree; move off it.
    let params: Vec<Tensor> = gen
        .store
        .iter()
        .map(|(name, t)| {
            if name.ends_with(".b") {
                random(t.shape(), &mut rng)
            } else {
                t.clone()
            }
        })
        .collect();
    let n = params.len();
    let r = check(
        &params,
        |g, v| {
            let b = Binding::from_vars(v[..n].to_vec());
            let xv = g.constant(&x);
            let out = gen.forward(g, &b, xv)?;
            let (a, c) = (g.constant(&wi), g.constant(&wc));
            let ti = g.mul(out.image, a)?;
            let tc = g.mul(out.class_probs, c)?;
            let (si, sc) = (g.sum(ti), g.sum(tc));
            g.add(si, sc)
        },
        1e-5,
        1e-5,
    )
    .unwrap();
    r.max_rel_err
}

#[test]
fn tiny_generator_matches_finite_differences() {
    let errs: Vec<f64> = (0..20).map(full_check).collect();
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    assert!(worst < 1e-3, "per-seed max relative errors {errs:?}");
}
