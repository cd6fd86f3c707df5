//! Runtime invariant suites behind the `check` CLI subcommand.
//!
//! Each check is a self-contained verification of one library contract,
//! returning a short detail string on success. The fast set finishes in a
//! few seconds; the slow set (behavioral orderings over whole toy
//! experiments) is opt-in.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::data::PatternBatch;
use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig};
use crate::nn::{LayerSpec, Mode, Network};
use crate::norm::{BrnSchedule, NormKind};
use crate::protocol::nicv2::{batch_count, generate_nicv2, Nicv2Params};
use crate::protocol::DatasetIndex;
use crate::strategies::dslda::DsldaState;
use crate::strategies::head::HeadState;
use crate::strategies::{StrategyConfig, StrategyKind, Trainer};
use crate::tensor::Tensor;

/// One named runtime check.
pub struct Check {
    pub name: &'static str,
    pub slow: bool,
    pub run: fn() -> Result<String>,
}

/// Everything `check` can run, fast checks first.
pub fn all_checks() -> Vec<Check> {
    vec![
        Check {
            name: "gradients",
            slow: false,
            run: check_gradients,
        },
        Check {
            name: "renorm_matches_batchnorm",
            slow: false,
            run: check_renorm_matches_batchnorm,
        },
        Check {
            name: "renorm_clip_law",
            slow: false,
            run: check_renorm_clip_law,
        },
        Check {
            name: "consolidation_arithmetic",
            slow: false,
            run: check_consolidation_arithmetic,
        },
        Check {
            name: "cwr_star_equals_plus_on_fresh_classes",
            slow: false,
            run: check_cwr_star_equals_plus,
        },
        Check {
            name: "protocol_structure",
            slow: false,
            run: check_protocol_structure,
        },
        Check {
            name: "dslda_streaming",
            slow: false,
            run: check_dslda_streaming,
        },
        Check {
            name: "csv_roundtrip",
            slow: false,
            run: check_csv_roundtrip,
        },
        Check {
            name: "checkpoint_roundtrip",
            slow: false,
            run: check_checkpoint_roundtrip,
        },
        Check {
            name: "reproducibility",
            slow: false,
            run: check_reproducibility,
        },
        Check {
            name: "behavioral_ordering",
            slow: true,
            run: check_behavioral_ordering,
        },
    ]
}

/// Outcome of a `run_checks` sweep.
pub struct CheckReport {
    pub passed: usize,
    pub failed: usize,
    /// One `PASS`/`FAIL` line per executed check.
    pub lines: Vec<String>,
}

/// Run every (optionally also slow) check and collect printable lines.
pub fn run_checks(include_slow: bool) -> CheckReport {
    let mut report = CheckReport {
        passed: 0,
        failed: 0,
        lines: Vec::new(),
    };
    for check in all_checks() {
        if check.slow && !include_slow {
            continue;
        }
        match (check.run)() {
            Ok(detail) => {
                report.passed += 1;
                report.lines.push(format!("PASS {} - {detail}", check.name));
            }
            Err(e) => {
                report.failed += 1;
                report.lines.push(format!("FAIL {} - {e}", check.name));
            }
        }
    }
    report
}

fn fail(msg: String) -> Error {
    Error::Numerical(msg)
}

fn random_batch(
    rng: &mut ChaCha8Rng,
    n: usize,
    item: &[usize],
    classes: usize,
) -> (Tensor, Vec<usize>) {
    let len = item.iter().product::<usize>() * n;
    let data: Vec<f64> = (0..len).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut shape = vec![n];
    shape.extend_from_slice(item);
    (
        Tensor::from_vec(&shape, data).unwrap(),
        (0..n).map(|_| rng.random_range(0..classes)).collect(),
    )
}

/// Central finite differences over a mixed conv/norm/dense stack.
fn check_gradients() -> Result<String> {
    let mut net = Network::new(
        &[2, 5, 5],
        vec![
            LayerSpec::DepthwiseConv {
                channels: 2,
                kernel: 3,
            },
            LayerSpec::Norm {
                channels: 2,
                kind: NormKind::BatchRenorm,
            },
            LayerSpec::Relu,
            LayerSpec::PointwiseConv {
                in_channels: 2,
                out_channels: 4,
            },
            LayerSpec::Norm {
                channels: 4,
                kind: NormKind::Batch,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                inputs: 36,
                outputs: 8,
            },
            LayerSpec::Relu,
            LayerSpec::Head {
                inputs: 8,
                classes: 3,
            },
        ],
        7,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    // Warm moments, then enable live renorm corrections.
    net.set_norm_limits(1.0, 0.0, 0.9)?;
    for _ in 0..3 {
        let (x, _) = random_batch(&mut rng, 6, &[2, 5, 5], 3);
        let t = net.forward(&x, Mode::Train)?;
        net.update_moments(&t);
    }
    net.set_norm_limits(1.4, 0.8, 0.9)?;

    let (x, labels) = random_batch(&mut rng, 4, &[2, 5, 5], 3);
    let warm = net.forward(&x, Mode::Train)?;
    net.pin_norm_corrections(&warm);
    let trace = net.forward(&x, Mode::Train)?;
    let bp = net.backward(&trace, &labels)?;

    let (step, rel_tol, abs_floor) = (1e-4, 1e-4, 1e-7);
    let mut worst = 0.0f64;
    for k in 0..net.param_count() {
        let orig = net.params().values()[k];
        net.values_mut()[k] = orig + step;
        let lp = net.loss_on(&x, &labels, Mode::Train)?;
        net.values_mut()[k] = orig - step;
        let lm = net.loss_on(&x, &labels, Mode::Train)?;
        net.values_mut()[k] = orig;
        let numeric = (lp - lm) / (2.0 * step);
        let analytic = bp.grads[k];
        let diff = (numeric - analytic).abs();
        if diff <= abs_floor {
            continue;
        }
        let rel = diff / numeric.abs().max(analytic.abs()).max(abs_floor);
        worst = worst.max(rel);
        if rel >= rel_tol {
            return Err(fail(format!(
                "parameter {k}: analytic {analytic} vs numeric {numeric} (rel {rel:.3e})"
            )));
        }
    }
    net.clear_norm_pins();
    Ok(format!(
        "{} parameters, worst relative error {worst:.3e}",
        net.param_count()
    ))
}

/// Renorm with `r_max = 1, d_max = 0` must match plain batch norm.
fn check_renorm_matches_batchnorm() -> Result<String> {
    let arch = |kind: NormKind| {
        vec![
            LayerSpec::Dense {
                inputs: 6,
                outputs: 8,
            },
            LayerSpec::Norm { channels: 8, kind },
            LayerSpec::Relu,
            LayerSpec::Head {
                inputs: 8,
                classes: 3,
            },
        ]
    };
    let mut bn = Network::new(&[6], arch(NormKind::Batch), 3)?;
    let mut brn = Network::new(&[6], arch(NormKind::BatchRenorm), 3)?;
    bn.set_norm_limits(1.0, 0.0, 0.95)?;
    brn.set_norm_limits(1.0, 0.0, 0.95)?;

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut max_diff = 0.0f64;
    for _ in 0..100 {
        let (x, _) = random_batch(&mut rng, 8, &[6], 3);
        let tb = bn.forward(&x, Mode::Train)?;
        let tr = brn.forward(&x, Mode::Train)?;
        for (a, b) in tb.logits().data().iter().zip(tr.logits().data()) {
            max_diff = max_diff.max((a - b).abs());
        }
        bn.update_moments(&tb);
        brn.update_moments(&tr);
    }
    if max_diff > 1e-6 {
        return Err(fail(format!(
            "renorm deviates from batch norm by {max_diff:.3e} despite r_max=1, d_max=0"
        )));
    }
    Ok(format!(
        "100 minibatches, max logit difference {max_diff:.3e}"
    ))
}

/// Corrections stay within the clip bounds for every iteration of the
/// schedule, and the batch-1 ramp actually reaches (3, 5).
fn check_renorm_clip_law() -> Result<String> {
    let schedule = BrnSchedule::for_sessions_per_batch(5);
    let mut net = Network::new(
        &[4],
        vec![
            LayerSpec::Norm {
                channels: 4,
                kind: NormKind::BatchRenorm,
            },
            LayerSpec::Head {
                inputs: 4,
                classes: 2,
            },
        ],
        11,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let total = schedule.warmup_iters + schedule.ramp_iters + 10;
    let mut reached_target = false;
    for it in 0..total {
        let (r_max, d_max, alpha) = schedule.params_at(1, it);
        if (r_max, d_max) == (3.0, 5.0) {
            reached_target = true;
        }
        net.set_norm_limits(r_max, d_max, alpha)?;
        // Shifted inputs so the raw corrections would exceed the clips.
        let (x, _) = random_batch(&mut rng, 6, &[4], 2);
        let x = Tensor::from_vec(
            &[6, 4],
            x.data().iter().map(|v| v * 5.0 + 3.0).collect(),
        )?;
        let trace = net.forward(&x, Mode::Train)?;
        if let Some(cache) = trace.norm_cache(0) {
            for (r, d) in cache.r.iter().zip(&cache.d) {
                if !(*r >= 1.0 / r_max - 1e-12 && *r <= r_max + 1e-12) {
                    return Err(fail(format!(
                        "iteration {it}: r = {r} escapes [{:.3}, {r_max}]",
                        1.0 / r_max
                    )));
                }
                if d.abs() > d_max + 1e-12 {
                    return Err(fail(format!(
                        "iteration {it}: |d| = {} escapes {d_max}",
                        d.abs()
                    )));
                }
            }
        }
        net.update_moments(&trace);
    }
    if !reached_target {
        return Err(fail(
            "the batch-1 ramp never reached the (3, 5) limits".into(),
        ));
    }
    let (r2, d2, _) = schedule.params_at(2, 0);
    Ok(format!(
        "{total} iterations clipped correctly; batch-1 reaches (3, 5), later batches hold ({r2}, {d2})"
    ))
}

/// The consolidation blend at known counter states, against hand arithmetic.
fn check_consolidation_arithmetic() -> Result<String> {
    // Two classes over one feature. Past counts 0/1/4 with one pattern per
    // class in the batch give blend weights sqrt(past/cur) of 0, 1, 2.
    for (past_count, expected) in [(0u64, 2.0), (1, 1.5), (4, 4.0 / 3.0)] {
        let mut net = Network::new(
            &[1],
            vec![LayerSpec::Head {
                inputs: 1,
                classes: 2,
            }],
            0,
        )?;
        // Consolidated row for class 0 starts at cw = 1.
        let mut head =
            HeadState::from_parts(2, 1, vec![1.0, 1.0, 0.0, 0.0], vec![past_count, 0])?;
        // tw rows: class 0 = [3, 3], class 1 = [-1, -1]; avg over both
        // batch-class rows = 1, so class 0's centered contribution is +2.
        net.values_mut().copy_from_slice(&[3.0, -1.0, 3.0, -1.0]);
        let counts: std::collections::BTreeMap<usize, u64> =
            [(0, 1), (1, 1)].into_iter().collect();
        head.consolidate_blend(&net, &counts)?;
        let got = head.row(0)[0];
        // cw = (1 * sqrt(past/cur) + (3 - 1)) / (sqrt(past/cur) + 1)
        let w = (past_count as f64).sqrt();
        let by_hand = (1.0 * w + 2.0) / (w + 1.0);
        if (got - expected).abs() > 1e-12 || (got - by_hand).abs() > 1e-12 {
            return Err(fail(format!(
                "past={past_count}: blended weight {got}, expected {expected}"
            )));
        }
    }
    Ok("blend matches hand arithmetic at blend weights 0, 1, 2".into())
}

/// On batches of never-seen classes the star and plus consolidations agree.
fn check_cwr_star_equals_plus() -> Result<String> {
    let specs = vec![
        LayerSpec::Dense {
            inputs: 4,
            outputs: 6,
        },
        LayerSpec::Relu,
        LayerSpec::Head {
            inputs: 6,
            classes: 4,
        },
    ];
    let mut cfg_star = StrategyConfig::defaults_for(StrategyKind::CwrStar);
    cfg_star.epochs_b1 = 2;
    cfg_star.epochs_bi = 2;
    cfg_star.eta_b1 = 0.05;
    cfg_star.eta_bi = 0.05;
    cfg_star.mini_batch = 8;
    let mut cfg_plus = cfg_star.clone();
    cfg_plus.kind = StrategyKind::CwrPlus;

    let schedule = BrnSchedule::for_sessions_per_batch(2);
    let mut star = Trainer::new(&[4], specs.clone(), cfg_star, schedule.clone(), 3, 9)?;
    let mut plus = Trainer::new(&[4], specs, cfg_plus, schedule, 3, 9)?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for classes in [[0usize, 1], [2, 3]] {
        // A simple separable pair of point clouds per batch.
        let n = 16;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = classes[i % 2];
            labels.push(c);
            for j in 0..4 {
                let center = if j == c % 4 { 2.0 } else { 0.0 };
                data.push(center + rng.random_range(-0.3..0.3));
            }
        }
        let batch = PatternBatch::new(Tensor::from_vec(&[n, 4], data)?, labels)?;
        star.train_batch(&batch)?;
        plus.train_batch(&batch)?;
    }
    let (hs, hp) = (star.head_state().unwrap(), plus.head_state().unwrap());
    let mut max_diff = 0.0f64;
    for (a, b) in hs.cw_flat().iter().zip(hp.cw_flat()) {
        max_diff = max_diff.max((a - b).abs());
    }
    if max_diff > 1e-9 {
        return Err(fail(format!(
            "consolidated heads diverge by {max_diff:.3e} on disjoint-class batches"
        )));
    }
    Ok(format!(
        "two disjoint batches, max consolidated-weight difference {max_diff:.3e}"
    ))
}

/// Structure of generated class-and-condition orderings at every
/// granularity.
fn check_protocol_structure() -> Result<String> {
    let index = DatasetIndex::reference_shape(1);
    let mut generated = 0;
    for capacity in [5usize, 2, 1] {
        let expected_batches = batch_count(&index, capacity)?;
        for seed in 0..10u64 {
            let run = generate_nicv2(&index, Nicv2Params::with_capacity(capacity), seed)?;
            if run.batches.len() != expected_batches {
                return Err(fail(format!(
                    "capacity {capacity}, seed {seed}: {} batches, expected {expected_batches}",
                    run.batches.len()
                )));
            }
            if run.batches[0].len() != index.categories() {
                return Err(fail(format!(
                    "capacity {capacity}, seed {seed}: first batch holds {} units, expected one per category",
                    run.batches[0].len()
                )));
            }
            for (i, b) in run.batches.iter().enumerate().skip(1) {
                if b.len() != capacity {
                    return Err(fail(format!(
                        "capacity {capacity}, seed {seed}: batch {i} holds {} units",
                        b.len()
                    )));
                }
            }
            run.validate(&index)?;
            generated += 1;
        }
    }
    Ok(format!(
        "{generated} generated orderings validated across capacities 5, 2, 1"
    ))
}

/// Streaming discriminant statistics equal the two-pass computation.
fn check_dslda_streaming() -> Result<String> {
    let (classes, dim, n) = (3usize, 5usize, 240usize);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        let c = i % classes;
        let x: Vec<f64> = (0..dim)
            .map(|j| if j == c { 2.0 } else { 0.0 } + rng.random_range(-0.5..0.5))
            .collect();
        xs.push(x);
        ys.push(c);
    }
    let mut lda = DsldaState::new(classes, dim, 1e-4)?;
    for (x, &y) in xs.iter().zip(&ys) {
        lda.update(x, y)?;
    }
    let streamed = lda.covariance()?;

    // Two-pass oracle: exact means, then the pooled scatter.
    let mut means = vec![vec![0.0; dim]; classes];
    let mut counts = vec![0usize; classes];
    for (x, &y) in xs.iter().zip(&ys) {
        counts[y] += 1;
        for j in 0..dim {
            means[y][j] += x[j];
        }
    }
    for c in 0..classes {
        for j in 0..dim {
            means[c][j] /= counts[c] as f64;
        }
    }
    let mut scatter = vec![0.0; dim * dim];
    for (x, &y) in xs.iter().zip(&ys) {
        for a in 0..dim {
            for b in 0..dim {
                scatter[a * dim + b] += (x[a] - means[y][a]) * (x[b] - means[y][b]);
            }
        }
    }
    let mut max_diff = 0.0f64;
    for (i, s) in streamed.iter().enumerate() {
        max_diff = max_diff.max((s - scatter[i] / n as f64).abs());
    }
    if max_diff > 1e-6 {
        return Err(fail(format!(
            "streaming covariance deviates from two-pass by {max_diff:.3e}"
        )));
    }
    Ok(format!(
        "{n} patterns, max covariance difference {max_diff:.3e}"
    ))
}

/// CSV emission round-trips and keeps the published column layout.
fn check_csv_roundtrip() -> Result<String> {
    let table = harness::AccuracyTable::from_columns(&[
        vec![1.522, 8.125, 43.75],
        vec![1.522, 9.0, 51.875],
        vec![2.25, 10.5, 60.125],
    ])?;
    let text = harness::format_csv(&table);
    if !text.starts_with("Batch,Run 0,Run 1,Run 2\n") {
        return Err(fail(format!("unexpected header: {text}")));
    }
    if !text.contains("0,1.522,1.522,2.250") {
        return Err(fail("3-decimal formatting missing".into()));
    }
    let back = harness::parse_csv(&text)?;
    if back != table {
        return Err(fail("parse(format(t)) differs from t".into()));
    }
    Ok("header, 3-decimal values, and parse round-trip verified".into())
}

/// Weights files restore bit-identical networks.
fn check_checkpoint_roundtrip() -> Result<String> {
    let mut net = Network::new(
        &[5],
        vec![
            LayerSpec::Dense {
                inputs: 5,
                outputs: 6,
            },
            LayerSpec::Norm {
                channels: 6,
                kind: NormKind::BatchRenorm,
            },
            LayerSpec::Relu,
            LayerSpec::Head {
                inputs: 6,
                classes: 3,
            },
        ],
        21,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    net.set_norm_limits(1.0, 0.0, 0.9)?;
    let (x, _) = random_batch(&mut rng, 6, &[5], 3);
    let t = net.forward(&x, Mode::Train)?;
    net.update_moments(&t);

    let mut buf = Vec::new();
    Checkpoint::from_network(&net).write_to(&mut buf)?;
    let restored = Checkpoint::read_from(&mut buf.as_slice())?.restore_network()?;
    let identical = restored
        .params()
        .values()
        .iter()
        .zip(net.params().values())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    if !identical {
        return Err(fail("restored parameters are not bit-identical".into()));
    }
    let (p0, p1) = (net.predict(&x)?, restored.predict(&x)?);
    if p0 != p1 {
        return Err(fail("restored network predicts differently".into()));
    }
    Ok(format!(
        "{}-byte file restores parameters and moments bit-identically",
        buf.len()
    ))
}

fn toy_config(strategy: &str, seed: u64) -> Result<ExperimentConfig> {
    ExperimentConfig::from_text(&format!(
        "protocol = ni\nstrategy = {strategy}\nruns = 2\nseed = {seed}\n\
         classes = 4\ncategories = 2\nsessions = 3\ntest_sessions = 2\n\
         frames = 12\ninput = 5\nseparation = 3.0\ndrift = 0.3\nnoise = 0.2\n\
         arch = dense10,brn,relu,head\n\
         epochs_b1 = 2\nepochs_bi = 2\neta_b1 = 0.05\neta_bi = 0.05\nmini_batch = 8\n\
         warmup_iters = 2\n"
    ))
}

/// The same config yields byte-identical CSV artifacts on repeat runs.
fn check_reproducibility() -> Result<String> {
    let cfg = toy_config("cwr_star", 13)?;
    let a = harness::format_csv(&harness::run_experiment(&cfg)?.table);
    let b = harness::format_csv(&harness::run_experiment(&cfg)?.table);
    if a != b {
        return Err(fail("two identical experiments emitted different CSV".into()));
    }
    Ok(format!(
        "two executions, identical {}-byte CSV artifacts",
        a.len()
    ))
}

/// Cumulative retraining upper-bounds the continual strategies on a
/// class-incremental toy where naive fine-tuning actually forgets, and the
/// consolidated head beats naive fine-tuning.
fn check_behavioral_ordering() -> Result<String> {
    let nc_config = |strategy: &str, seed: u64| {
        ExperimentConfig::from_text(&format!(
            "protocol = nc\nclasses_per_batch = 2\nstrategy = {strategy}\nruns = 2\nseed = {seed}\n\
             classes = 8\ncategories = 4\nsessions = 3\ntest_sessions = 2\n\
             frames = 15\ninput = 8\nseparation = 2.5\ndrift = 0.4\nnoise = 0.6\n\
             arch = dense12,brn,relu,head\n\
             epochs_b1 = 3\nepochs_bi = 3\neta_b1 = 0.05\neta_bi = 0.05\nmini_batch = 8\n\
             warmup_iters = 2\n"
        ))
    };
    let mut finals = std::collections::BTreeMap::new();
    for strategy in ["naive", "cwr_star", "cumulative"] {
        let mut total = 0.0;
        for seed in [1u64, 2, 3] {
            let cfg = nc_config(strategy, seed)?;
            total += harness::run_experiment(&cfg)?.table.final_mean();
        }
        finals.insert(strategy, total / 3.0);
    }
    let (naive, cwr, cumulative) = (finals["naive"], finals["cwr_star"], finals["cumulative"]);
    if cumulative + 1e-9 < cwr || cumulative + 1e-9 < naive {
        return Err(fail(format!(
            "cumulative {cumulative:.2} is not the upper bound (cwr* {cwr:.2}, naive {naive:.2})"
        )));
    }
    if cwr < naive {
        return Err(fail(format!(
            "consolidated head {cwr:.2} under-performs naive fine-tuning {naive:.2}"
        )));
    }
    Ok(format!(
        "class-incremental means over 3 seeds: cumulative {cumulative:.2} >= cwr* {cwr:.2} >= naive {naive:.2}"
    ))
}
