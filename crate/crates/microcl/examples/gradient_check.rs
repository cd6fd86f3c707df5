//! Finite-difference validation of the backward pass, layer by layer.
//!
//! Builds a stack containing every layer kind (depthwise and pointwise
//! convolutions, both normalization flavours, dense, head), then compares
//! every analytic gradient against central differences on the loss:
//! `g_num = (L(theta + h) - L(theta - h)) / 2h`. Renorm corrections are
//! pinned to their unperturbed values first, matching their stop-gradient
//! treatment in the analytic backward pass.
//!
//! Run with: `cargo run --example gradient_check`

// Numeric oracle code indexes parallel arrays with one loop variable; the
// indexed form mirrors the math (as in the library itself).
#![allow(clippy::needless_range_loop)]

use microcl::nn::{LayerSpec, Mode, Network};
use microcl::norm::NormKind;
use microcl::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;

fn random_batch(rng: &mut ChaCha8Rng, n: usize, item: &[usize], classes: usize) -> (Tensor, Vec<usize>) {
    let len: usize = item.iter().product::<usize>() * n;
    let data: Vec<f64> = (0..len).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut shape = vec![n];
    shape.extend_from_slice(item);
    let x = Tensor::from_vec(&shape, data).unwrap();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    (x, labels)
}

fn main() {
    let item = [2usize, 5, 5];
    let specs = vec![
        LayerSpec::DepthwiseConv { channels: 2, kernel: 3 },
        LayerSpec::Norm { channels: 2, kind: NormKind::BatchRenorm },
        LayerSpec::Relu,
        LayerSpec::PointwiseConv { in_channels: 2, out_channels: 4 },
        LayerSpec::Norm { channels: 4, kind: NormKind::Batch },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: 4 * 3 * 3, outputs: 10 },
        LayerSpec::Relu,
        LayerSpec::Head { inputs: 10, classes: 3 },
    ];
    let mut net = Network::new(&item, specs, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // Warm the running normalization moments so batch renorm has a live
    // reference, then loosen the clip limits so its corrections actually
    // fire instead of degenerating to r = 1, d = 0.
    net.set_norm_limits(1.0, 0.0, 0.9).unwrap();
    for _ in 0..3 {
        let (xw, _) = random_batch(&mut rng, 6, &item, 3);
        let t = net.forward(&xw, Mode::Train).unwrap();
        net.update_moments(&t);
    }
    net.set_norm_limits(1.4, 0.8, 0.9).unwrap();

    let (x, labels) = random_batch(&mut rng, 5, &item, 3);

    // Stop-gradient: freeze the (r, d) corrections at their unperturbed
    // values before differencing.
    let warm_trace = net.forward(&x, Mode::Train).unwrap();
    net.pin_norm_corrections(&warm_trace);

    let trace = net.forward(&x, Mode::Train).unwrap();
    let analytic = net.backward(&trace, &labels).unwrap().grads;

    println!("{} parameters across {} layers", net.param_count(), net.specs().len());
    let mut worst = 0.0f64;
    let mut worst_k = 0;
    for k in 0..net.param_count() {
        let orig = net.params().values()[k];
        net.values_mut()[k] = orig + STEP;
        let lp = net.loss_on(&x, &labels, Mode::Train).unwrap();
        net.values_mut()[k] = orig - STEP;
        let lm = net.loss_on(&x, &labels, Mode::Train).unwrap();
        net.values_mut()[k] = orig;

        let numeric = (lp - lm) / (2.0 * STEP);
        let diff = (numeric - analytic[k]).abs();
        if diff <= 1e-7 {
            continue; // dead unit or exact zero on both sides
        }
        let rel = diff / numeric.abs().max(analytic[k].abs());
        if rel > worst {
            worst = rel;
            worst_k = k;
        }
    }
    net.clear_norm_pins();

    // Report the worst parameter per layer range for a quick visual scan.
    println!("\n{:<28} {:>8} {:>14}", "layer", "params", "worst rel err");
    for (i, spec) in net.specs().to_vec().iter().enumerate() {
        let r = net.params().range(i);
        if r.len == 0 {
            continue;
        }
        let mut layer_worst = 0.0f64;
        for k in r.offset..r.offset + r.len {
            let orig = net.params().values()[k];
            let warm = net.forward(&x, Mode::Train).unwrap();
            net.pin_norm_corrections(&warm);
            net.values_mut()[k] = orig + STEP;
            let lp = net.loss_on(&x, &labels, Mode::Train).unwrap();
            net.values_mut()[k] = orig - STEP;
            let lm = net.loss_on(&x, &labels, Mode::Train).unwrap();
            net.values_mut()[k] = orig;
            net.clear_norm_pins();
            let numeric = (lp - lm) / (2.0 * STEP);
            let diff = (numeric - analytic[k]).abs();
            if diff > 1e-7 {
                layer_worst = layer_worst.max(diff / numeric.abs().max(analytic[k].abs()));
            }
        }
        println!("{:<28} {:>8} {:>14.3e}", spec.name(), r.len, layer_worst);
    }

    println!(
        "\noverall worst relative error {worst:.3e} at parameter {worst_k} \
         (tolerance in the test suite: 1e-4)"
    );
    assert!(worst < 1e-4);
}
