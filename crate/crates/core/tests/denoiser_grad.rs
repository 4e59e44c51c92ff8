use duet_core::motion::features::{FRAME_DIM, HISTORY_LEN, WINDOW_LEN};
use duet_core::nn::{embed_text, Denoiser, DenoiserConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(net: &Denoiser, z: &[f64], h: &[f64], w: &[f64], step: usize) -> f64 {
    let cond = net.condition(step, &embed_text("mirror the partner", net.config.text_embed_dim));
    let out = net.forward(z, h, &cond).unwrap();
    out.iter().zip(w).map(|(a, b)| a * b).sum()
}

fn check(config: DenoiserConfig, seed: u64, samples: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Denoiser::new(config, seed).unwrap();
    let z: Vec<f64> = (0..WINDOW_LEN * FRAME_DIM).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let h: Vec<f64> = (0..HISTORY_LEN * FRAME_DIM).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let w: Vec<f64> = (0..WINDOW_LEN * FRAME_DIM).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let step = 3;
    let cond = net.condition(step, &embed_text("mirror the partner", config.text_embed_dim));
    let (_, tape) = net.forward_recorded(&z, &h, &cond).unwrap();
    let mut grads = net.params.zeros_like();
    net.backward(&tape, &w, &mut grads).unwrap();

    let eps = 1e-4;
    let n = net.params.len();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let i = rng.random_range(0..n);
        let orig = net.params.data[i];
        net.params.data[i] = orig + eps;
        let up = loss(&net, &z, &h, &w, step);
        net.params.data[i] = orig - eps;
        let down = loss(&net, &z, &h, &w, step);
        net.params.data[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads[i];
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        worst = worst.max(rel);
        assert!(rel < 1e-3, "param {i}: analytic {analytic} numeric {numeric} rel {rel}");
    }
    assert!(worst.is_finite());
}

#[test]
fn gradients_match_finite_differences_small() {
    let cfg = DenoiserConfig { layers: 2, hidden: 16, heads: 2, time_embed_dim: 8, text_embed_dim: 8, ff_mult: 2 };
    check(cfg, 11, 200);
}

#[test]
fn gradients_match_finite_differences_tiny_profile() {
    check(DenoiserConfig::tiny(), 12, 200);
}

#[test]
fn frozen_positional_table_gets_gradient() {
    let net = Denoiser::new(DenoiserConfig::tiny(), 3).unwrap();
    let pos = net.params.find("pos.table").unwrap();
    assert!(!net.params.specs[pos.0].trainable);
    let z = vec![0.1; WINDOW_LEN * FRAME_DIM];
    let h = vec![-0.1; HISTORY_LEN * FRAME_DIM];
    let cond = net.condition(1, &embed_text("follow", 64));
    let (_, tape) = net.forward_recorded(&z, &h, &cond).unwrap();
    let mut g = net.params.zeros_like();
    net.backward(&tape, &vec![1.0; WINDOW_LEN * FRAME_DIM], &mut g).unwrap();
    let r = net.params.specs[pos.0].range();
    assert!(g[r].iter().any(|v| v.abs() > 0.0));
}
