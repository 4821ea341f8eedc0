mod common;

use common::*;
use dmdnet::nn::{adam_step, xavier_init, AdamConfig, AdamState, MlpSpec};

#[test]
fn gradients_match_central_differences() {
    for seed in 0..20 {
        let rel = gradient_check(seed);
        assert!(rel < 1e-4, "net {seed}: relative error {rel:e}");
    }
}

#[test]
fn adam_matches_reference_loop() {
    let net0 = perturbed_net(3, vec![3, 7, 5, 2]);
    let mut r = rng(31);
    let x = random_matrix(&mut r, 9, 3);
    let y = random_matrix(&mut r, 9, 2);
    let cfg = AdamConfig {
        lr: 0.01,
        ..AdamConfig::default()
    };

    let mut net = net0.clone();
    let mut state = AdamState::new(&net);

    let mut theta: Vec<Vec<f64>> = (0..net0.num_layers()).map(|l| net0.flatten_layer(l).unwrap()).collect();
    let mut m1: Vec<Vec<f64>> = theta.iter().map(|t| vec![0.0; t.len()]).collect();
    let mut m2 = m1.clone();
    let mut shadow = net0.clone();

    for t in 1..=100 {
        let (_, g) = net.loss_and_gradients(&x, &y).unwrap();
        adam_step(&mut net, &g, &mut state, &cfg).unwrap();

        let (_, gs) = shadow.loss_and_gradients(&x, &y).unwrap();
        for (l, layer) in gs.iter().enumerate() {
            let gl: Vec<f64> = layer.weights.iter().chain(&layer.biases).copied().collect();
            for k in 0..gl.len() {
                m1[l][k] = cfg.beta1 * m1[l][k] + (1.0 - cfg.beta1) * gl[k];
                m2[l][k] = cfg.beta2 * m2[l][k] + (1.0 - cfg.beta2) * gl[k] * gl[k];
                let mh = m1[l][k] / (1.0 - cfg.beta1.powi(t));
                let vh = m2[l][k] / (1.0 - cfg.beta2.powi(t));
                theta[l][k] -= cfg.lr * mh / (vh.sqrt() + cfg.epsilon);
            }
            shadow.assign_layer(l, &theta[l]).unwrap();
        }
        for l in 0..net.num_layers() {
            let got = net.flatten_layer(l).unwrap();
            let dev = got.iter().zip(&theta[l]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(dev <= 1e-12, "step {t} layer {l}: {dev:e}");
        }
    }
}

#[test]
fn first_adam_step_moves_each_parameter_by_lr() {
    let mut net = perturbed_net(9, vec![2, 4, 1]);
    let mut r = rng(1);
    let x = random_matrix(&mut r, 5, 2);
    let y = random_matrix(&mut r, 5, 1);
    let before: Vec<f64> = (0..2).flat_map(|l| net.flatten_layer(l).unwrap()).collect();
    let (_, g) = net.loss_and_gradients(&x, &y).unwrap();
    let gflat = flat(&g);
    let mut state = AdamState::new(&net);
    adam_step(&mut net, &g, &mut state, &AdamConfig::default()).unwrap();
    let after: Vec<f64> = (0..2).flat_map(|l| net.flatten_layer(l).unwrap()).collect();
    for ((b, a), gi) in before.iter().zip(&after).zip(&gflat) {
        let expected = 1e-3 * gi.abs() / (gi.abs() + 1e-8);
        assert!(((b - a).abs() - expected).abs() <= 1e-15);
    }
}

#[test]
fn xavier_statistics() {
    let spec = MlpSpec::new(vec![200, 300, 100]).unwrap();
    let net = xavier_init(&spec, 17).unwrap();
    for layer in net.layers() {
        let bound = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
        let w = &layer.weights;
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let target = bound * bound / 3.0;
        assert!(w.iter().all(|v| v.abs() <= bound));
        // sampling error of the mean is bound / sqrt(3 n)
        assert!(mean.abs() < 5.0 * bound / (3.0 * n).sqrt(), "mean {mean}");
        assert!((var / target - 1.0).abs() < 0.02, "var {var} vs {target}");
        assert!(layer.biases.iter().all(|&b| b == 0.0));
    }
    assert_eq!(net, xavier_init(&spec, 17).unwrap());
    assert_ne!(net, xavier_init(&spec, 18).unwrap());
}
