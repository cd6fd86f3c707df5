//! Consolidated-head bookkeeping across overlapping batches.
//!
//! The consolidation family keeps two sets of class weights: `tw`, the
//! live head the optimizer touches (scratch), and `cw`, the consolidated
//! rows that actually classify. After each batch the trained rows are
//! mean-centered and blended into `cw` with a weight
//! `wpast_j = sqrt(past_j / cur_j)`, so classes seen often move slowly and
//! fresh classes adopt their new rows outright.
//!
//! Run with: `cargo run --example cwr_consolidation`

use microcl::data::PatternBatch;
use microcl::nn::LayerSpec;
use microcl::norm::BrnSchedule;
use microcl::strategies::{StrategyConfig, StrategyKind, Trainer};
use microcl::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DIM: usize = 6;
const CLASSES: usize = 4;

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

fn show(trainer: &Trainer, probe: &PatternBatch) {
    let head = trainer.head_state().unwrap();
    for j in 0..CLASSES {
        let row = head.row(j);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        println!(
            "    class {j}: past = {:>3}  |cw row| = {norm:.4}",
            head.counters.past(j)
        );
    }
    println!(
        "    accuracy on all four classes: {:.1}%",
        trainer.evaluate(probe).unwrap()
    );
}

fn main() {
    let specs = vec![
        LayerSpec::Dense { inputs: DIM, outputs: 10 },
        LayerSpec::Relu,
        LayerSpec::Head { inputs: 10, classes: CLASSES },
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
        3,
        40,
    )
    .unwrap();

    let probe = blobs(&[0, 1, 2, 3], 10, 99);

    // Three batches with an overlap: class 1 reappears in batch 2 and
    // class 2 in batch 3. Watch the counters accumulate and the accuracy
    // hold on classes the current batch does not contain.
    let schedule: [(&str, Vec<usize>); 3] = [
        ("batch 1: classes {0, 1}", vec![0, 1]),
        ("batch 2: classes {1, 2} (1 seen before)", vec![1, 2]),
        ("batch 3: classes {2, 3} (2 seen before)", vec![2, 3]),
    ];
    for (i, (label, classes)) in schedule.iter().enumerate() {
        let batch = blobs(classes, 16, 7 + i as u64);
        trainer.train_batch(&batch).unwrap();
        println!("{label}");
        show(&trainer, &probe);
        println!();
    }

    // The live network head is scratch: wiping it does not move a single
    // consolidated prediction.
    let before = trainer.predict(&probe.x).unwrap();
    let head_layer = trainer.network().specs().len() - 1;
    let r = trainer.network().params().range(head_layer);
    for v in &mut trainer.network_mut().values_mut()[r.offset..r.offset + r.len] {
        *v = 1.0e6;
    }
    let after = trainer.predict(&probe.x).unwrap();
    assert_eq!(before, after);
    println!("scratch head wiped with 1e6 garbage: predictions unchanged ({} probes)", after.len());
}
