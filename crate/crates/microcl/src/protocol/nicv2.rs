//! Class-and-condition incremental batch generator.
//!
//! The arrangement works on any session-structured dataset; on the reference
//! shape (50 classes / 10 categories / 8 training sessions) with incremental
//! capacities of 5, 2, or 1 units it yields the canonical 79-, 196-, and
//! 391-batch sequences.
//!
//! Construction:
//!
//! 1. **First batch** — one randomly chosen class per category, each
//!    contributing one randomly chosen training session: `categories` units
//!    introducing category-level variety immediately.
//! 2. **Insertion points** — every class gets the earliest incremental batch
//!    it may appear in: classes seeded into the first batch get 1 (their
//!    remaining sessions may follow anywhere), the others draw uniformly
//!    from `[1, max_start]`. Capping the draw at `max_start` keeps at least
//!    twice the capacity needed for one class's sessions after any insertion
//!    point, so late-introduced classes still fit.
//! 3. **Placement** — the remaining units fill the incremental batches by
//!    rejection sampling: draw a batch uniformly from `[insertion, last]`
//!    and retry while the draw is full. Units are placed in order of
//!    descending insertion point (earlier-constrained classes pick from the
//!    scarcer tail region first), which cannot deadlock once the total
//!    demand on every tail region fits its capacity — a condition checked
//!    up front, re-drawing all insertion points when violated.
//!
//! Incremental batches end exactly full: the number of incremental batches
//! is `remaining_units / capacity`, which must divide evenly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetIndex, ProtocolRun, Scenario, TrainUnit};
use crate::error::{Error, Result};

/// Safety cap on rejection draws for a single unit; with the feasibility
/// check in place this should never trigger.
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Full re-draws of the insertion-point vector before giving up.
const MAX_FEASIBILITY_REDRAWS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nicv2Params {
    /// Units per incremental batch (5, 2, or 1 on the reference shape).
    pub capacity: usize,
    /// Latest allowed insertion batch; defaults to
    /// `batches - 2 * ceil(sessions / capacity)`.
    pub max_start: Option<usize>,
}

impl Nicv2Params {
    pub fn with_capacity(capacity: usize) -> Self {
        Nicv2Params {
            capacity,
            max_start: None,
        }
    }
}

/// Total number of batches (first + incremental) this arrangement produces
/// for a dataset shape.
pub fn batch_count(index: &DatasetIndex, capacity: usize) -> Result<usize> {
    if capacity == 0 {
        return Err(Error::Protocol("capacity must be positive".into()));
    }
    let train_sessions = index.training_sessions().len();
    let total_units = index.classes() * train_sessions;
    let remaining = total_units - index.categories();
    if !remaining.is_multiple_of(capacity) {
        return Err(Error::Protocol(format!(
            "{remaining} units after the first batch do not fill batches of {capacity} evenly"
        )));
    }
    Ok(1 + remaining / capacity)
}

pub fn generate_nicv2(
    index: &DatasetIndex,
    params: Nicv2Params,
    seed: u64,
) -> Result<ProtocolRun> {
    let capacity = params.capacity;
    let num_batches = batch_count(index, capacity)?;
    let train_sessions = index.training_sessions();
    let s_per_class = train_sessions.len();
    let default_max_start = num_batches.saturating_sub(2 * s_per_class.div_ceil(capacity));
    let max_start = params.max_start.unwrap_or(default_max_start);
    if max_start < 1 || max_start >= num_batches {
        return Err(Error::Protocol(format!(
            "max_start must lie in [1, {}], got {max_start}",
            num_batches - 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // 1. First batch: one random class per category, one random session each.
    let per_cat = index.classes_per_category();
    let mut first_batch = Vec::with_capacity(index.categories());
    let mut initial = vec![false; index.classes()];
    for cat in 0..index.categories() {
        let class = cat * per_cat + rng.random_range(0..per_cat);
        let session = train_sessions[rng.random_range(0..s_per_class)];
        initial[class] = true;
        first_batch.push(TrainUnit { session, class });
    }

    // Units still to place: for first-batch classes, everything except the
    // session already shown; for the rest, all training sessions.
    let first_session_of: Vec<Option<usize>> = (0..index.classes())
        .map(|c| {
            first_batch
                .iter()
                .find(|u| u.class == c)
                .map(|u| u.session)
        })
        .collect();

    // 2. Insertion points, re-drawn until every tail region of the
    // incremental range can hold the units constrained to it.
    let mut insertion_points = vec![0usize; index.classes()];
    let mut feasible = false;
    for _ in 0..MAX_FEASIBILITY_REDRAWS {
        for (class, ip) in insertion_points.iter_mut().enumerate() {
            *ip = if initial[class] {
                1
            } else {
                rng.random_range(1..=max_start)
            };
        }
        // Demand per insertion point: units of each class.
        let mut demand_at = vec![0usize; num_batches];
        for class in 0..index.classes() {
            let units = if initial[class] {
                s_per_class - 1
            } else {
                s_per_class
            };
            demand_at[insertion_points[class]] += units;
        }
        // Tail check: units demanding batches >= t must fit in the
        // capacity of batches [t, last].
        feasible = true;
        let mut tail_demand = 0usize;
        for t in (1..num_batches).rev() {
            tail_demand += demand_at[t];
            if tail_demand > (num_batches - t) * capacity {
                feasible = false;
                break;
            }
        }
        if feasible {
            break;
        }
    }
    if !feasible {
        return Err(Error::Protocol(format!(
            "could not draw feasible insertion points after {MAX_FEASIBILITY_REDRAWS} attempts \
             (capacity {capacity}, max_start {max_start})"
        )));
    }
    // First-batch classes keep insertion point 0 in the published run: they
    // are already present from the start.
    let published_ips: Vec<usize> = (0..index.classes())
        .map(|c| if initial[c] { 0 } else { insertion_points[c] })
        .collect();

    // 3. Placement, descending insertion point (ties by class index for
    // determinism).
    let mut order: Vec<usize> = (0..index.classes()).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(insertion_points[c]), c));

    let mut free = vec![capacity; num_batches];
    free[0] = 0;
    let mut batches: Vec<Vec<TrainUnit>> = vec![Vec::new(); num_batches];
    batches[0] = first_batch;

    for &class in &order {
        let ip = insertion_points[class];
        for &session in &train_sessions {
            if first_session_of[class] == Some(session) {
                continue;
            }
            let mut placed = false;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let b = rng.random_range(ip..num_batches);
                if free[b] > 0 {
                    free[b] -= 1;
                    batches[b].push(TrainUnit { session, class });
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Protocol(format!(
                    "no free batch found for (session {session}, class {class}) \
                     after {MAX_PLACEMENT_ATTEMPTS} draws"
                )));
            }
        }
    }

    debug_assert!(free.iter().all(|f| *f == 0), "incremental batches not full");
    for b in batches.iter_mut() {
        b.sort_by_key(|u| (u.class, u.session));
    }

    let run = ProtocolRun {
        scenario: Scenario::NicV2 { capacity },
        seed,
        batches,
        insertion_points: published_ips,
    };
    run.validate(index)?;
    Ok(run)
}
