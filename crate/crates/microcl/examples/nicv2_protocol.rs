//! The NICv2 batch generator on the reference dataset shape.
//!
//! 50 classes in 10 categories, 8 training sessions each (3 of the 11
//! sessions are held out for testing), scheduled into small incremental
//! batches. The first batch holds exactly one class per category; every
//! later batch holds `capacity` (class, session) units; a class's later
//! sessions can only appear after its introduction, and no class may be
//! introduced later than `max_start`, so every class still gets evaluated
//! a few times before the run ends.
//!
//! Run with: `cargo run --example nicv2_protocol`

use std::collections::BTreeMap;

use microcl::protocol::nicv2::{batch_count, generate_nicv2, Nicv2Params};
use microcl::protocol::DatasetIndex;

fn main() {
    let index = DatasetIndex::reference_shape(300);
    println!(
        "reference shape: {} classes / {} categories / {} training sessions per class",
        index.classes(),
        index.categories(),
        index.training_sessions().len()
    );

    println!("\nbatch counts by capacity:");
    for capacity in [5usize, 2, 1] {
        println!(
            "  capacity {capacity}: {:>4} batches",
            batch_count(&index, capacity).unwrap()
        );
    }

    let capacity = 2;
    let run = generate_nicv2(&index, Nicv2Params::with_capacity(capacity), 42).unwrap();
    run.validate(&index).unwrap();
    println!(
        "\ngenerated a {}-batch run at capacity {capacity} (seed 42); validation passed",
        run.batches.len()
    );

    println!("\nfirst batch (one fresh class per category):");
    for unit in &run.batches[0] {
        print!(
            "  class {:>2} (cat {})",
            unit.class,
            index.category_of(unit.class)
        );
    }
    println!();

    println!("\nnext three batches ({} units each):", capacity);
    for (i, batch) in run.batches[1..4].iter().enumerate() {
        print!("  batch {:>2}:", i + 2);
        for unit in batch {
            print!("  class {:>2} / session {}", unit.class, unit.session);
        }
        println!();
    }

    // Where do classes get introduced? Everything must start by
    // `max_start` so that even the last newcomer is trained and then
    // revisited before the run ends.
    let mut first_batch_of: BTreeMap<usize, usize> = BTreeMap::new();
    for (b, batch) in run.batches.iter().enumerate() {
        for unit in batch {
            first_batch_of.entry(unit.class).or_insert(b);
        }
    }
    let latest = first_batch_of.values().copied().max().unwrap();
    let introduced_late = first_batch_of.values().filter(|&&b| b > 0).count();
    println!(
        "\nclass introductions: {} in batch 1, {introduced_late} spread over later batches, \
         latest in batch {} of {}",
        index.categories(),
        latest + 1,
        run.batches.len()
    );

    // Determinism: the seed fully determines the ordering.
    let again = generate_nicv2(&index, Nicv2Params::with_capacity(capacity), 42).unwrap();
    assert_eq!(run, again);
    println!("same seed regenerates the identical ordering; other seeds reshuffle it.");
}
