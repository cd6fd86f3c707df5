//! Content-incremental and condition-incremental batch arrangements.
//!
//! * Content-incremental ([`generate_nc`]): classes are shuffled and dealt
//!   into disjoint groups; each batch carries *all* training sessions of its
//!   group, so every class is seen under every training condition the
//!   moment it appears. The first batch takes twice the per-batch class
//!   count, giving the initial model a broader base.
//! * Condition-incremental ([`generate_ni`]): every batch carries one
//!   not-yet-seen training session of *every* class, in shuffled session
//!   order; no new classes ever appear after the first batch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetIndex, ProtocolRun, Scenario, TrainUnit};
use crate::error::{Error, Result};

/// Disjoint groups of whole classes; the first batch takes
/// `2 * classes_per_batch` classes, later batches `classes_per_batch` each.
pub fn generate_nc(
    index: &DatasetIndex,
    classes_per_batch: usize,
    seed: u64,
) -> Result<ProtocolRun> {
    if classes_per_batch == 0 {
        return Err(Error::Protocol("classes_per_batch must be positive".into()));
    }
    let first = 2 * classes_per_batch;
    if index.classes() < first {
        return Err(Error::Protocol(format!(
            "need at least {first} classes for a first batch of 2 x {classes_per_batch}"
        )));
    }
    if !(index.classes() - first).is_multiple_of(classes_per_batch) {
        return Err(Error::Protocol(format!(
            "{} classes after the first batch do not split into groups of {classes_per_batch}",
            index.classes() - first
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<usize> = (0..index.classes()).collect();
    classes.shuffle(&mut rng);

    let train_sessions = index.training_sessions();
    let mut batches = Vec::new();
    let mut insertion_points = vec![0usize; index.classes()];
    let mut cursor = 0usize;
    let mut bi = 0usize;
    while cursor < classes.len() {
        let take = if bi == 0 { first } else { classes_per_batch };
        let group = &classes[cursor..cursor + take];
        let mut batch = Vec::with_capacity(group.len() * train_sessions.len());
        for &class in group {
            insertion_points[class] = bi;
            for &session in &train_sessions {
                batch.push(TrainUnit { session, class });
            }
        }
        batch.sort_by_key(|u| (u.class, u.session));
        batches.push(batch);
        cursor += take;
        bi += 1;
    }

    let run = ProtocolRun {
        scenario: Scenario::Nc { classes_per_batch },
        seed,
        batches,
        insertion_points,
    };
    run.validate(index)?;
    Ok(run)
}

/// One new training session of every class per batch, sessions in shuffled
/// order.
pub fn generate_ni(index: &DatasetIndex, seed: u64) -> Result<ProtocolRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sessions = index.training_sessions();
    sessions.shuffle(&mut rng);

    let mut batches = Vec::with_capacity(sessions.len());
    for &session in &sessions {
        let mut batch: Vec<TrainUnit> = (0..index.classes())
            .map(|class| TrainUnit { session, class })
            .collect();
        batch.sort_by_key(|u| (u.class, u.session));
        batches.push(batch);
    }

    let run = ProtocolRun {
        scenario: Scenario::Ni,
        seed,
        batches,
        insertion_points: vec![0; index.classes()],
    };
    run.validate(index)?;
    Ok(run)
}
