//! The batch-renorm correction schedule, traced iteration by iteration.
//!
//! Batch renormalization rescales each minibatch statistic toward the
//! running moments with two clipped corrections:
//!     r = clip(s_mb / sigma,        [1/r_max, r_max])
//!     d = clip((mu_mb - mu) / sigma, [-d_max, d_max])
//! On the first batch the limits open gradually (a warm-up at r_max = 1,
//! d_max = 0 — plain batch norm — then a linear ramp to (3, 5)); on later
//! batches they stay tight so sparse, correlated minibatches cannot drag
//! the moments around.
//!
//! Run with: `cargo run --example brn_schedule`

use microcl::norm::{correction_terms, BrnSchedule};

fn trace(label: &str, schedule: &BrnSchedule) {
    println!("{label}");
    println!(
        "  warm-up {} iters, ramp {} iters, batch-1 targets ({}, {}), later ({}, {})",
        schedule.warmup_iters,
        schedule.ramp_iters,
        schedule.batch1_r_max,
        schedule.batch1_d_max,
        schedule.later_r_max,
        schedule.later_d_max
    );
    println!("  {:>6} {:>6} {:>7} {:>7} {:>8}", "batch", "iter", "r_max", "d_max", "alpha");
    let probes = [0u64, 24, 48, 60, 72, 96, 120];
    for &it in &probes {
        let (r, d, a) = schedule.params_at(1, it);
        println!("  {:>6} {:>6} {:>7.3} {:>7.3} {:>8.4}", 1, it, r, d, a);
    }
    for batch in [2usize, 10] {
        let (r, d, a) = schedule.params_at(batch, 0);
        println!("  {:>6} {:>6} {:>7.3} {:>7.3} {:>8.4}", batch, "any", r, d, a);
    }
    println!();
}

fn main() {
    trace(
        "schedule for multi-session batches (5 sessions grouped per batch):",
        &BrnSchedule::for_sessions_per_batch(5),
    );
    trace(
        "schedule for single-session batches (the laxest later clips):",
        &BrnSchedule::for_sessions_per_batch(1),
    );

    // The correction terms themselves, at a few illustrative operating
    // points. Values that already fit pass through exactly; the rest pin
    // to the box edge.
    println!("correction terms at r_max = 3, d_max = 5 (sigma = 1, mu = 0):");
    println!("  {:>6} {:>6} {:>9} {:>9} {:>24}", "s_mb", "mu_mb", "r", "d", "regime");
    for (s_mb, mu_mb) in [(1.0, 0.0), (2.0, 1.5), (8.0, 0.0), (0.05, 0.0), (1.0, 9.0)] {
        let (r, d) = correction_terms(s_mb, mu_mb, 0.0, 1.0, 3.0, 5.0);
        let regime = if r == s_mb && d == mu_mb {
            "pass-through"
        } else {
            "clipped"
        };
        println!("  {s_mb:>6.2} {mu_mb:>6.2} {r:>9.4} {d:>9.4} {regime:>24}");
    }

    // Setting r_max = 1 and d_max = 0 forces r = 1, d = 0: the layer
    // reduces exactly to plain batch normalization.
    let (r, d) = correction_terms(2.7, 1.3, 0.0, 1.0, 1.0, 0.0);
    println!("\nwith r_max = 1, d_max = 0: r = {r}, d = {d} (plain batch norm)");
}
