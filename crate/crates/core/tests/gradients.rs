use std::time::Instant;
use vmident_core::checks::{self, ProbeConfig};
use vmident_core::model::{ModelSpec, Network, Variant};
use vmident_core::tensor::{GradCheckReport, Tensor};
use vmident_core::Error;

fn assert_passes(label: &str, report: &GradCheckReport) {
    for p in &report.params {
        assert!(p.probes >= 1, "{label}/{}: no probes", p.name);
    }
    assert!(
        report.passed(),
        "{label}: max relative error {:e}, failures {:#?}",
        report.max_relative_error(),
        report.failures()
    );
}

#[test]
fn conv1d_gradients_across_shapes() {
    let cfg = ProbeConfig::default();
    for (i, &(n, c_in, c_out, len, k, s, p)) in [
        (2, 3, 4, 8, 3, 2, 1),
        (3, 16, 32, 4, 3, 2, 1),
        (1, 2, 5, 11, 3, 1, 0),
        (2, 4, 3, 9, 5, 3, 2),
    ]
    .iter()
    .enumerate()
    {
        let r = checks::conv1d(n, c_in, c_out, len, k, s, p, cfg, i as u64).unwrap();
        assert_passes(&format!("conv {n}x{c_in}x{len} k{k} s{s} p{p}"), &r);
        assert!(r.params.iter().all(|p| p.probes == 20 || p.name == "bias"));
    }
}

#[test]
fn batchnorm_gradients_across_shapes() {
    for (i, &(n, c, l)) in [(4, 3, 5), (2, 8, 2), (16, 2, 1)].iter().enumerate() {
        assert_passes(
            &format!("batchnorm {n}x{c}x{l}"),
            &checks::batchnorm(n, c, l, ProbeConfig::default(), 10 + i as u64).unwrap(),
        );
    }
}

#[test]
fn linear_gradients_across_shapes() {
    for (i, &(n, f, o)) in [(3, 7, 2), (5, 64, 2), (1, 4, 9)].iter().enumerate() {
        assert_passes(
            &format!("linear {n}x{f}->{o}"),
            &checks::linear(n, f, o, ProbeConfig::default(), 20 + i as u64).unwrap(),
        );
    }
}

#[test]
fn relu_gradients_away_from_zero() {
    for (i, shape) in [vec![4, 6], vec![2, 3, 5], vec![50]].iter().enumerate() {
        assert_passes(
            &format!("relu {shape:?}"),
            &checks::relu(shape, ProbeConfig::default(), 30 + i as u64).unwrap(),
        );
    }
}

#[test]
fn full_network_gradients() {
    let start = Instant::now();
    let cases = [
        (ModelSpec::with_shape(4, 2, 2, Variant::DeepConv).unwrap(), 3),
        (ModelSpec::new(4, Variant::DeepConv).unwrap(), 8),
        (ModelSpec::with_shape(16, 3, 2, Variant::DeepFft).unwrap(), 4),
    ];
    for (i, (spec, n)) in cases.iter().enumerate() {
        let r = checks::network(spec, *n, ProbeConfig::default(), 40 + i as u64).unwrap();
        assert_passes(&format!("network W={} M={} {}", spec.window, spec.metrics, spec.variant), &r);
        let zero = checks::network_conv_bias_gradient(spec, *n, 40 + i as u64).unwrap();
        assert!(zero < 1e-12, "conv bias gradient {zero:e} should vanish through batchnorm");
    }
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn second_backward_without_reset_is_rejected() {
    let spec = ModelSpec::with_shape(4, 2, 2, Variant::DeepConv).unwrap();
    let mut net = Network::build(&spec, 0).unwrap();
    let batch = Tensor::full(&[2, 4, 2], 0.5);
    net.backward(&batch, &[0, 1]).unwrap();
    assert!(matches!(net.backward(&batch, &[0, 1]), Err(Error::GradientsNotReset)));
    net.zero_grad();
    net.backward(&batch, &[0, 1]).unwrap();
}

#[test]
fn saturated_correct_predictions_give_vanishing_gradients() {
    let spec = ModelSpec::with_shape(4, 2, 2, Variant::DeepConv).unwrap();
    let mut net = Network::build(&spec, 5).unwrap();
    let batch = Tensor::uniform(&[4, 4, 2], 1.0, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1));
    // head predicts class 1 with overwhelming confidence for every sample
    net.head_mut().weight.data_mut().fill(0.0);
    net.head_mut().bias.data_mut().copy_from_slice(&[-40.0, 40.0]);
    let loss = net.backward(&batch, &[1, 1, 1, 1]).unwrap();
    assert!(loss < 1e-30);
    for (name, t) in net.trainable_params() {
        let g = t.grad().unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-20), "{name}");
    }
}
