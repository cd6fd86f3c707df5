//! Randomized invariants. Each property generates structurally valid
//! random inputs and checks a law the implementation must satisfy for all
//! of them: protocol well-formedness and determinism, consolidation
//! convexity and bookkeeping, correction-term clipping, CSV round-trips,
//! and checkpoint serialization.

// Numeric oracle code indexes parallel arrays with one loop variable; the
// indexed form mirrors the math (as in the library itself).
#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use microcl::checkpoint::Checkpoint;
use microcl::harness::{format_csv, parse_csv, AccuracyTable};
use microcl::nn::{LayerSpec, Network};
use microcl::norm::{correction_terms, NormKind};
use microcl::protocol::nicv2::{batch_count, generate_nicv2, Nicv2Params};
use microcl::protocol::scenarios::{generate_nc, generate_ni};
use microcl::protocol::{subsample_indices, DatasetIndex};
use microcl::strategies::head::HeadState;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------
// Protocol generators
// ---------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every NICv2 ordering over random compatible shapes is well-formed:
    /// the first batch introduces one class per category, later batches
    /// are exactly `capacity` units, every class contributes each of its
    /// training sessions once, and the same seed regenerates the same run.
    #[test]
    fn nicv2_runs_are_well_formed(
        categories in 2usize..=5,
        per_category in 2usize..=5,
        sessions in 3usize..=8,
        seed in any::<u64>(),
    ) {
        let classes = categories * per_category;
        let index = DatasetIndex::uniform(
            classes, categories, sessions, &[sessions - 1], 4,
        ).unwrap();
        let s = sessions - 1; // training sessions per class
        for capacity in 1..=4usize {
            if (classes * s - categories) % capacity != 0 {
                continue;
            }
            let expected = 1 + (classes * s - categories) / capacity;
            if expected.saturating_sub(2 * s.div_ceil(capacity)) < 1 {
                continue;
            }
            prop_assert_eq!(batch_count(&index, capacity).unwrap(), expected);
            let run = generate_nicv2(
                &index, Nicv2Params::with_capacity(capacity), seed,
            ).unwrap();
            run.validate(&index).unwrap();

            prop_assert_eq!(run.batches.len(), expected);
            prop_assert_eq!(run.batches[0].len(), categories);
            let first_cats: BTreeSet<usize> = run.batches[0]
                .iter()
                .map(|u| index.category_of(u.class))
                .collect();
            prop_assert_eq!(first_cats.len(), categories);
            for b in &run.batches[1..] {
                prop_assert_eq!(b.len(), capacity);
            }
            let mut per_class = vec![0usize; classes];
            for b in &run.batches {
                for u in b {
                    per_class[u.class] += 1;
                }
            }
            prop_assert!(per_class.iter().all(|&n| n == s));

            let again = generate_nicv2(
                &index, Nicv2Params::with_capacity(capacity), seed,
            ).unwrap();
            prop_assert_eq!(&run, &again);
        }
    }

    /// Class-incremental runs introduce each class exactly once: a double
    /// batch first, then `classes_per_batch` fresh classes per batch.
    #[test]
    fn nc_runs_introduce_each_class_once(
        cpb in 1usize..=3,
        later_batches in 1usize..=4,
        sessions in 3usize..=6,
        seed in any::<u64>(),
    ) {
        let classes = cpb * (2 + later_batches);
        let index = DatasetIndex::uniform(classes, classes, sessions, &[0], 4).unwrap();
        let run = generate_nc(&index, cpb, seed).unwrap();
        run.validate(&index).unwrap();

        prop_assert_eq!(run.batches.len(), 1 + later_batches);
        let mut seen = BTreeSet::new();
        for (i, b) in run.batches.iter().enumerate() {
            let batch_classes: BTreeSet<usize> = b.iter().map(|u| u.class).collect();
            prop_assert_eq!(
                batch_classes.len(),
                if i == 0 { 2 * cpb } else { cpb },
                "batch {} class width", i
            );
            prop_assert!(seen.is_disjoint(&batch_classes), "class reappeared in batch {}", i);
            // Every new class arrives with all of its training sessions.
            prop_assert_eq!(b.len(), batch_classes.len() * (sessions - 1));
            seen.extend(batch_classes);
        }
        prop_assert_eq!(seen.len(), classes);
        prop_assert_eq!(&generate_nc(&index, cpb, seed).unwrap(), &run);
    }

    /// New-instances runs replay all classes every batch, one training
    /// session per batch, covering each session exactly once.
    #[test]
    fn ni_runs_cover_sessions_once(
        classes in 2usize..=8,
        sessions in 3usize..=8,
        seed in any::<u64>(),
    ) {
        let index = DatasetIndex::uniform(classes, 1, sessions, &[0], 4).unwrap();
        let run = generate_ni(&index, seed).unwrap();
        run.validate(&index).unwrap();

        prop_assert_eq!(run.batches.len(), sessions - 1);
        let mut sessions_seen = BTreeSet::new();
        for b in &run.batches {
            let batch_classes: BTreeSet<usize> = b.iter().map(|u| u.class).collect();
            prop_assert_eq!(batch_classes.len(), classes);
            let batch_sessions: BTreeSet<usize> = b.iter().map(|u| u.session).collect();
            prop_assert_eq!(batch_sessions.len(), 1);
            sessions_seen.extend(batch_sessions);
        }
        prop_assert_eq!(sessions_seen.len(), sessions - 1);
        prop_assert!(!sessions_seen.contains(&0), "test session leaked into training");
        prop_assert_eq!(&generate_ni(&index, seed).unwrap(), &run);
    }
}

// ---------------------------------------------------------------------
// Consolidation arithmetic
// ---------------------------------------------------------------------

proptest! {
    /// Blended consolidation is a convex combination: each updated weight
    /// lands between the previous consolidated value and the centered
    /// contribution (read off independently via the overwrite rule), rows
    /// outside the batch keep their bits, and the per-class counters grow
    /// by exactly the batch counts.
    #[test]
    fn consolidation_is_convex_and_bookkeeps(
        classes in 2usize..=5,
        dim in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cw: Vec<f64> = (0..classes * (dim + 1))
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let past: Vec<u64> = (0..classes).map(|_| rng.random_range(0..=20)).collect();
        let head = HeadState::from_parts(classes, dim, cw.clone(), past.clone()).unwrap();

        // Head-only network whose parameters are the tw rows under test.
        let specs = vec![LayerSpec::Head { inputs: dim, classes }];
        let mut net = Network::new(&[dim], specs, seed).unwrap();
        for v in net.values_mut() {
            *v = rng.random_range(-3.0..3.0);
        }

        let mut batch_counts = BTreeMap::new();
        for j in 0..classes {
            if rng.random_bool(0.5) {
                batch_counts.insert(j, rng.random_range(1..=10u64));
            }
        }
        batch_counts.entry(rng.random_range(0..classes)).or_insert(1);

        let mut blended = head.clone();
        blended.consolidate_blend(&net, &batch_counts).unwrap();
        let mut centered = head.clone();
        centered.consolidate_overwrite(&net, &batch_counts).unwrap();

        for j in 0..classes {
            let old = head.row(j);
            let new = blended.row(j);
            if let Some(&cur) = batch_counts.get(&j) {
                let w = (past[j] as f64 / cur as f64).sqrt();
                for ((&o, &n), &c) in old.iter().zip(new).zip(centered.row(j)) {
                    prop_assert_eq!(
                        n.to_bits(),
                        ((o * w + c) / (w + 1.0)).to_bits(),
                        "blend must equal (old*w + centered)/(w+1)"
                    );
                    prop_assert!(
                        n >= o.min(c) - 1e-12 && n <= o.max(c) + 1e-12,
                        "blend {} left the segment [{}, {}]", n, o.min(c), o.max(c)
                    );
                }
                prop_assert_eq!(blended.counters.past(j), past[j] + cur);
            } else {
                for (&o, &n) in old.iter().zip(new) {
                    prop_assert_eq!(o.to_bits(), n.to_bits(), "untouched row changed");
                }
                prop_assert_eq!(blended.counters.past(j), past[j]);
            }
        }
    }
}

// ---------------------------------------------------------------------
// Normalization correction terms
// ---------------------------------------------------------------------

proptest! {
    /// The renormalization corrections always land inside the configured
    /// box, and are exactly the raw ratios whenever those already fit.
    #[test]
    fn corrections_stay_inside_the_box(
        sigma in 0.01f64..10.0,
        s_mb in 1e-4f64..20.0,
        mu in -10.0f64..10.0,
        mu_mb in -10.0f64..10.0,
        r_max in 1.0f64..5.0,
        d_max in 0.0f64..6.0,
    ) {
        let (r, d) = correction_terms(s_mb, mu_mb, mu, sigma, r_max, d_max);
        prop_assert!(r >= 1.0 / r_max && r <= r_max, "r = {} outside box", r);
        prop_assert!(d >= -d_max && d <= d_max, "d = {} outside box", d);
        let raw_r = s_mb / sigma;
        if raw_r >= 1.0 / r_max && raw_r <= r_max {
            prop_assert_eq!(r, raw_r);
        }
        let raw_d = (mu_mb - mu) / sigma;
        if raw_d.abs() <= d_max {
            prop_assert_eq!(d, raw_d);
        }
    }
}

// ---------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------

proptest! {
    /// Formatting is a fixed point after one parse: format(parse(s)) == s
    /// for any formatted table, and the header names one column per run.
    #[test]
    fn csv_format_parse_format_is_identity(
        rows in 1usize..=8,
        runs in 1usize..=6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let columns: Vec<Vec<f64>> = (0..runs)
            .map(|_| (0..rows).map(|_| rng.random_range(0.0..100.0)).collect())
            .collect();
        let table = AccuracyTable::from_columns(&columns).unwrap();
        let s1 = format_csv(&table);
        let reparsed = parse_csv(&s1).unwrap();
        let s2 = format_csv(&reparsed);
        prop_assert_eq!(&s1, &s2);

        let mut lines = s1.lines();
        let header = lines.next().unwrap();
        let mut expected = String::from("Batch");
        for r in 0..runs {
            expected.push_str(&format!(",Run {r}"));
        }
        prop_assert_eq!(header, expected.as_str());
        prop_assert_eq!(lines.count(), rows);
    }

    /// Checkpoints round-trip bit-for-bit through the byte format for any
    /// architecture and parameter values.
    #[test]
    fn checkpoints_roundtrip_bitwise(
        arch in 0usize..4,
        seed in any::<u64>(),
    ) {
        let (shape, specs): (Vec<usize>, Vec<LayerSpec>) = match arch {
            0 => (vec![5], vec![LayerSpec::Head { inputs: 5, classes: 3 }]),
            1 => (
                vec![6],
                vec![
                    LayerSpec::Dense { inputs: 6, outputs: 9 },
                    LayerSpec::Relu,
                    LayerSpec::Head { inputs: 9, classes: 4 },
                ],
            ),
            2 => (
                vec![3, 5, 5],
                vec![
                    LayerSpec::DepthwiseConv { channels: 3, kernel: 3 },
                    LayerSpec::PointwiseConv { in_channels: 3, out_channels: 4 },
                    LayerSpec::Relu,
                    LayerSpec::Head { inputs: 4 * 3 * 3, classes: 2 },
                ],
            ),
            _ => (
                vec![4],
                vec![
                    LayerSpec::Dense { inputs: 4, outputs: 7 },
                    LayerSpec::Norm { channels: 7, kind: NormKind::BatchRenorm },
                    LayerSpec::Relu,
                    LayerSpec::Head { inputs: 7, classes: 3 },
                ],
            ),
        };
        let mut net = Network::new(&shape, specs, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
        for v in net.values_mut() {
            *v = rng.random_range(-2.0..2.0);
        }

        let ck = Checkpoint::from_network(&net);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        let restored = back.restore_network().unwrap();

        let a = net.params().values();
        let b = restored.params().values();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    /// Temporal subsampling keeps every `period`-th frame from 0: strictly
    /// increasing, in range, `ceil(len / period)` of them.
    #[test]
    fn subsampling_keeps_every_periodth_frame(
        len in 0usize..=400,
        period in 1usize..=40,
    ) {
        let idx = subsample_indices(len, period);
        prop_assert_eq!(idx.len(), len.div_ceil(period));
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(idx.iter().all(|&i| i < len));
        if len > 0 {
            prop_assert_eq!(idx[0], 0);
            prop_assert_eq!(idx[idx.len() - 1], ((len - 1) / period) * period);
        }
    }
}
