//! Saving and restoring a trainer checkpoint, bit for bit.
//!
//! Checkpoints capture the network architecture, every parameter, the
//! normalization moments, and whatever side state the strategy keeps
//! (consolidated head rows and counters, importance vectors). The byte
//! format is a magic tag, a version, a layer table, and little-endian
//! flat parameters, so a file written here reloads anywhere.
//!
//! Run with: `cargo run --example checkpoint_io`

use microcl::checkpoint::Checkpoint;
use microcl::data::PatternBatch;
use microcl::nn::{LayerSpec, Mode};
use microcl::norm::{BrnSchedule, NormKind};
use microcl::strategies::{StrategyConfig, StrategyKind, Trainer};
use microcl::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DIM: usize = 6;

fn blobs(classes: &[usize], per_class: usize, seed: u64) -> PatternBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = classes.len() * per_class;
    let mut data = Vec::with_capacity(n * DIM);
    let mut labels = Vec::with_capacity(n);
    for &c in classes {
        for _ in 0..per_class {
            labels.push(c);
            for d in 0..DIM {
                let center = if d == c % DIM { 2.5 } else { 0.0 };
                data.push(center + rng.random_range(-0.4..0.4));
            }
        }
    }
    PatternBatch::new(Tensor::from_vec(&[n, DIM], data).unwrap(), labels).unwrap()
}

fn main() {
    let specs = vec![
        LayerSpec::Dense { inputs: DIM, outputs: 10 },
        LayerSpec::Norm { channels: 10, kind: NormKind::BatchRenorm },
        LayerSpec::Relu,
        LayerSpec::Head { inputs: 10, classes: 4 },
    ];
    let cfg = StrategyConfig {
        epochs_b1: 3,
        epochs_bi: 3,
        eta_b1: 0.05,
        eta_bi: 0.05,
        eta_head_bi: 0.05,
        mini_batch: 8,
        ..StrategyConfig::defaults_for(StrategyKind::CwrStar)
    };
    let mut trainer = Trainer::new(
        &[DIM],
        specs,
        cfg,
        BrnSchedule::for_sessions_per_batch(2),
        12,
        34,
    )
    .unwrap();
    trainer.train_batch(&blobs(&[0, 1], 16, 5)).unwrap();
    trainer.train_batch(&blobs(&[2, 3], 16, 6)).unwrap();

    let probe = blobs(&[0, 1, 2, 3], 10, 77);
    let preds_before = trainer.predict(&probe.x).unwrap();

    // Serialize to bytes (a file via `save`/`load` works identically).
    let ck = trainer.checkpoint();
    let mut bytes = Vec::new();
    ck.write_to(&mut bytes).unwrap();
    println!(
        "checkpoint: {} bytes for {} parameters across {} layers (+ head rows and counters)",
        bytes.len(),
        trainer.network().param_count(),
        trainer.network().specs().len()
    );

    let restored = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
    let net = restored.restore_network().unwrap();

    // Bit-exact round trip.
    let a = trainer.network().params().values();
    let b = net.params().values();
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    println!("all {} parameters restored bit-identically", a.len());

    let head = restored.head.as_ref().expect("consolidation strategies store head rows");
    let feats = net.features(&probe.x, Mode::Eval).unwrap();
    let preds_after = head.predict(&feats);
    assert_eq!(preds_before, preds_after);
    println!("restored consolidated head reproduces every prediction ({} probes)", preds_after.len());
}
