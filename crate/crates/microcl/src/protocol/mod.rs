//! Continual-learning benchmark protocols over a session-structured dataset.
//!
//! The dataset model mirrors a hand-held object corpus: `classes` objects
//! grouped into `categories` (consecutive blocks of `classes / categories`
//! objects), each recorded in `sessions` acquisition sessions; a fixed
//! subset of sessions is held out for testing and the rest train. The unit
//! of data arrival is a [`TrainUnit`] — all frames of one object in one
//! training session.
//!
//! A [`ProtocolRun`] arranges every training unit into an ordered batch
//! sequence under one of three scenarios:
//!
//! * content-incremental ([`scenarios::generate_nc`]): whole classes arrive
//!   in disjoint groups;
//! * condition-incremental ([`scenarios::generate_ni`]): every batch carries
//!   one new session of all classes;
//! * class-and-condition incremental ([`nicv2::generate_nicv2`]): small
//!   batches mixing new classes with new conditions of known ones, with
//!   class first-appearances spread across the whole sequence.
//!
//! Test data is subsampled temporally: every
//! [`TEST_SUBSAMPLE_PERIOD`]-th frame starting from frame 0.

pub mod filelist;
pub mod nicv2;
pub mod scenarios;
pub mod synth;

use crate::error::{Error, Result};

/// Temporal test subsampling period (keep one frame in this many).
pub const TEST_SUBSAMPLE_PERIOD: usize = 20;

/// Frame indices kept when subsampling a clip of `len` frames: every
/// `period`-th frame starting at 0, i.e. `ceil(len / period)` frames.
pub fn subsample_indices(len: usize, period: usize) -> Vec<usize> {
    (0..len).step_by(period.max(1)).collect()
}

/// One object observed in one training session: the atomic unit the
/// protocols schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrainUnit {
    pub session: usize,
    pub class: usize,
}

/// Where one frame's data lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternRef {
    /// Relative path in a file-list dataset.
    Path(String),
    /// Row into the in-memory store of its `(session, class)` record.
    Row(usize),
}

/// All frames of one `(session, class)` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRecord {
    pub session: usize,
    pub class: usize,
    pub patterns: Vec<PatternRef>,
}

/// Catalog of a session-structured dataset: which `(session, class)` records
/// exist and how many frames each holds. Carries no pixel/feature data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    classes: usize,
    categories: usize,
    sessions: usize,
    test_sessions: Vec<usize>,
    /// Session-major: `records[session * classes + class]`.
    records: Vec<SessionRecord>,
}

impl DatasetIndex {
    /// Build an index where every `(session, class)` record holds
    /// `frames_per_session` row-referenced frames.
    pub fn uniform(
        classes: usize,
        categories: usize,
        sessions: usize,
        test_sessions: &[usize],
        frames_per_session: usize,
    ) -> Result<Self> {
        let mut records = Vec::with_capacity(sessions * classes);
        for session in 0..sessions {
            for class in 0..classes {
                records.push(SessionRecord {
                    session,
                    class,
                    patterns: (0..frames_per_session).map(PatternRef::Row).collect(),
                });
            }
        }
        Self::new(classes, categories, sessions, test_sessions, records)
    }

    pub fn new(
        classes: usize,
        categories: usize,
        sessions: usize,
        test_sessions: &[usize],
        records: Vec<SessionRecord>,
    ) -> Result<Self> {
        if classes == 0 || categories == 0 || sessions == 0 {
            return Err(Error::Protocol(
                "classes, categories, and sessions must all be positive".into(),
            ));
        }
        if !classes.is_multiple_of(categories) {
            return Err(Error::Protocol(format!(
                "classes ({classes}) must be divisible into {categories} equal categories"
            )));
        }
        let mut test = test_sessions.to_vec();
        test.sort_unstable();
        test.dedup();
        if test.len() != test_sessions.len() {
            return Err(Error::Protocol("duplicate test session".into()));
        }
        if test.iter().any(|&s| s >= sessions) {
            return Err(Error::Protocol(format!(
                "test session out of range (dataset has {sessions} sessions)"
            )));
        }
        if test.len() >= sessions {
            return Err(Error::Protocol(
                "at least one session must remain for training".into(),
            ));
        }
        if records.len() != sessions * classes {
            return Err(Error::Protocol(format!(
                "expected {} records ({sessions} sessions x {classes} classes), got {}",
                sessions * classes,
                records.len()
            )));
        }
        for (i, r) in records.iter().enumerate() {
            let (s, c) = (i / classes, i % classes);
            if r.session != s || r.class != c {
                return Err(Error::Protocol(format!(
                    "record {i} out of place: expected (session {s}, class {c}), \
                     got (session {}, class {})",
                    r.session, r.class
                )));
            }
        }
        Ok(DatasetIndex {
            classes,
            categories,
            sessions,
            test_sessions: test,
            records,
        })
    }

    /// The reference shape: 50 classes in 10 categories over 11 sessions,
    /// sessions 2, 6, and 9 (0-based) held out for testing.
    pub fn reference_shape(frames_per_session: usize) -> DatasetIndex {
        DatasetIndex::uniform(50, 10, 11, &[2, 6, 9], frames_per_session)
            .expect("reference shape is valid")
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn classes_per_category(&self) -> usize {
        self.classes / self.categories
    }

    pub fn category_of(&self, class: usize) -> usize {
        class / self.classes_per_category()
    }

    pub fn sessions(&self) -> usize {
        self.sessions
    }

    pub fn test_sessions(&self) -> &[usize] {
        &self.test_sessions
    }

    /// Training sessions in ascending order.
    pub fn training_sessions(&self) -> Vec<usize> {
        (0..self.sessions)
            .filter(|s| !self.test_sessions.contains(s))
            .collect()
    }

    pub fn record(&self, session: usize, class: usize) -> &SessionRecord {
        &self.records[session * self.classes + class]
    }

    pub fn frames(&self, session: usize, class: usize) -> usize {
        self.record(session, class).patterns.len()
    }

    /// All test units (every class in every held-out session), class-major
    /// within session.
    pub fn test_units(&self) -> Vec<TrainUnit> {
        let mut units = Vec::with_capacity(self.test_sessions.len() * self.classes);
        for &session in &self.test_sessions {
            for class in 0..self.classes {
                units.push(TrainUnit { session, class });
            }
        }
        units
    }
}

/// Which batch-arrangement scenario produced a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Class-and-condition incremental with `capacity` units per
    /// incremental batch.
    NicV2 { capacity: usize },
    /// Content-incremental: `classes_per_batch` whole classes per
    /// incremental batch (the first batch takes twice as many).
    Nc { classes_per_batch: usize },
    /// Condition-incremental: one new session of every class per batch.
    Ni,
}

impl Scenario {
    /// Canonical name; the class-and-condition variants are named by their
    /// batch count on the reference shape.
    pub fn name(&self) -> String {
        match self {
            Scenario::NicV2 { capacity } => match capacity {
                5 => "nicv2_79".into(),
                2 => "nicv2_196".into(),
                1 => "nicv2_391".into(),
                c => format!("nicv2_cap{c}"),
            },
            Scenario::Nc { .. } => "nc".into(),
            Scenario::Ni => "ni".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Scenario> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nicv2_79" => Ok(Scenario::NicV2 { capacity: 5 }),
            "nicv2_196" => Ok(Scenario::NicV2 { capacity: 2 }),
            "nicv2_391" => Ok(Scenario::NicV2 { capacity: 1 }),
            "nc" => Ok(Scenario::Nc {
                classes_per_batch: 5,
            }),
            "ni" => Ok(Scenario::Ni),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected one of: nicv2_79, nicv2_196, \
                 nicv2_391, nc, ni)"
            ))),
        }
    }
}

/// A complete batch arrangement of every training unit of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolRun {
    pub scenario: Scenario,
    pub seed: u64,
    /// Batches in presentation order; each is a set of units sorted by
    /// `(class, session)`.
    pub batches: Vec<Vec<TrainUnit>>,
    /// Per class: the sampled earliest batch its units were allowed to
    /// appear in (0 for classes seeded into the first batch).
    pub insertion_points: Vec<usize>,
}

impl ProtocolRun {
    /// First batch index in which `class` actually appears.
    pub fn first_occurrence(&self, class: usize) -> Option<usize> {
        self.batches
            .iter()
            .position(|b| b.iter().any(|u| u.class == class))
    }

    /// Distinct classes of one batch, ascending.
    pub fn batch_classes(&self, batch: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self.batches[batch].iter().map(|u| u.class).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Structural invariants common to every scenario: each training unit of
    /// the dataset appears exactly once across all batches, no test session
    /// is used, no batch is empty, and every actual first appearance
    /// respects the recorded insertion point.
    pub fn validate(&self, index: &DatasetIndex) -> Result<()> {
        let train_sessions = index.training_sessions();
        let mut seen = vec![false; index.sessions() * index.classes()];
        let mut total = 0usize;
        for (bi, batch) in self.batches.iter().enumerate() {
            if batch.is_empty() {
                return Err(Error::Protocol(format!("batch {bi} is empty")));
            }
            for u in batch {
                if u.class >= index.classes() {
                    return Err(Error::Protocol(format!(
                        "batch {bi}: class {} out of range",
                        u.class
                    )));
                }
                if !train_sessions.contains(&u.session) {
                    return Err(Error::Protocol(format!(
                        "batch {bi}: session {} is not a training session",
                        u.session
                    )));
                }
                let k = u.session * index.classes() + u.class;
                if seen[k] {
                    return Err(Error::Protocol(format!(
                        "unit (session {}, class {}) scheduled twice",
                        u.session, u.class
                    )));
                }
                seen[k] = true;
                total += 1;
            }
        }
        let expected = train_sessions.len() * index.classes();
        if total != expected {
            return Err(Error::Protocol(format!(
                "run schedules {total} units, dataset has {expected}"
            )));
        }
        if self.insertion_points.len() != index.classes() {
            return Err(Error::Protocol(format!(
                "expected {} insertion points, got {}",
                index.classes(),
                self.insertion_points.len()
            )));
        }
        for class in 0..index.classes() {
            let first = self
                .first_occurrence(class)
                .ok_or_else(|| Error::Protocol(format!("class {class} never appears")))?;
            if first < self.insertion_points[class] {
                return Err(Error::Protocol(format!(
                    "class {class} appears in batch {first}, before its insertion point {}",
                    self.insertion_points[class]
                )));
            }
        }
        Ok(())
    }
}
