//! Deterministic synthetic dataset with the session/class structure the
//! protocols schedule.
//!
//! Each class owns a fixed mean direction (orthogonalized against earlier
//! classes while the dimensionality allows, unit-normalized otherwise) and
//! each session owns a fixed "condition" drift vector shared by every class
//! recorded in it — so new sessions present known classes under shifted
//! conditions, which is exactly the difficulty the condition-incremental
//! protocols probe. Frames are drawn independently around the session-
//! shifted class center:
//!
//! ```text
//! x = separation * mean_class + drift_session + noise * N(0, I)
//! ```
//!
//! `separation` and `drift` are vector magnitudes; `noise` is a
//! per-component standard deviation. Everything is generated from one
//! seeded stream in a fixed order (means, then drifts, then frames
//! session-major), so a `(spec, seed)` pair is a complete, reproducible
//! dataset description.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{subsample_indices, DatasetIndex, TrainUnit, TEST_SUBSAMPLE_PERIOD};
use crate::data::PatternBatch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub categories: usize,
    pub sessions: usize,
    pub test_sessions: Vec<usize>,
    pub frames_per_session: usize,
    /// Per-pattern tensor shape (e.g. `[48]` or `[3, 4, 4]`).
    pub shape: Vec<usize>,
    /// Magnitude of each class's mean vector.
    pub separation: f64,
    /// Magnitude of each session's condition shift.
    pub drift: f64,
    /// Per-component frame noise standard deviation.
    pub noise: f64,
}

impl SynthSpec {
    /// The reference dataset shape (50 classes / 10 categories / 11
    /// sessions, sessions 2, 6, 9 held out) over a given pattern shape.
    pub fn reference(frames_per_session: usize, shape: Vec<usize>) -> SynthSpec {
        SynthSpec {
            classes: 50,
            categories: 10,
            sessions: 11,
            test_sessions: vec![2, 6, 9],
            frames_per_session,
            shape,
            separation: 3.0,
            drift: 1.0,
            noise: 0.5,
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }
}

/// A fully materialized synthetic dataset: index plus per-record tensors.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    spec: SynthSpec,
    index: DatasetIndex,
    /// `[classes, dim]` scaled mean vectors.
    class_means: Vec<f64>,
    /// Session-major `[frames_per_session, shape...]` tensors.
    data: Vec<Tensor>,
}

impl SynthDataset {
    pub fn generate(spec: SynthSpec, seed: u64) -> Result<SynthDataset> {
        let dim = spec.dim();
        if spec.shape.is_empty() || dim == 0 {
            return Err(Error::Config(
                "pattern shape must be non-empty with positive extents".into(),
            ));
        }
        if spec.frames_per_session == 0 {
            return Err(Error::Config("frames_per_session must be positive".into()));
        }
        if spec.separation < 0.0 || spec.drift < 0.0 || spec.noise < 0.0 {
            return Err(Error::Config(
                "separation, drift, and noise must be non-negative".into(),
            ));
        }
        let index = DatasetIndex::uniform(
            spec.classes,
            spec.categories,
            spec.sessions,
            &spec.test_sessions,
            spec.frames_per_session,
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // Class means: orthogonalize while possible, always unit-normalize,
        // then scale to the requested separation.
        let mut means = vec![0.0; spec.classes * dim];
        for c in 0..spec.classes {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if c < dim {
                for p in 0..c {
                    let prev = &means[p * dim..(p + 1) * dim];
                    let prev_norm2: f64 = prev.iter().map(|x| x * x).sum();
                    if prev_norm2 > 0.0 {
                        let proj: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>()
                            / prev_norm2;
                        for (vi, pi) in v.iter_mut().zip(prev) {
                            *vi -= proj * pi;
                        }
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                return Err(Error::Numerical(
                    "degenerate class mean draw; use a different seed".into(),
                ));
            }
            for (m, vi) in means[c * dim..(c + 1) * dim].iter_mut().zip(&v) {
                *m = spec.separation * vi / norm;
            }
        }

        // Session drifts: unit direction scaled to the drift magnitude.
        let mut drifts = vec![0.0; spec.sessions * dim];
        for s in 0..spec.sessions {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                return Err(Error::Numerical(
                    "degenerate session drift draw; use a different seed".into(),
                ));
            }
            for (d, vi) in drifts[s * dim..(s + 1) * dim].iter_mut().zip(&v) {
                *d = spec.drift * vi / norm;
            }
        }

        // Frames, session-major then class-major then frame order.
        let mut data = Vec::with_capacity(spec.sessions * spec.classes);
        let mut full_shape = Vec::with_capacity(spec.shape.len() + 1);
        full_shape.push(spec.frames_per_session);
        full_shape.extend_from_slice(&spec.shape);
        for s in 0..spec.sessions {
            for c in 0..spec.classes {
                let mut frames = Vec::with_capacity(spec.frames_per_session * dim);
                for _ in 0..spec.frames_per_session {
                    for j in 0..dim {
                        let e: f64 = rng.sample(StandardNormal);
                        frames.push(means[c * dim + j] + drifts[s * dim + j] + spec.noise * e);
                    }
                }
                data.push(Tensor::from_vec(&full_shape, frames)?);
            }
        }

        Ok(SynthDataset {
            spec,
            index,
            class_means: means,
            data,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn index(&self) -> &DatasetIndex {
        &self.index
    }

    /// Scaled mean vector of one class.
    pub fn class_mean(&self, class: usize) -> &[f64] {
        let dim = self.spec.dim();
        &self.class_means[class * dim..(class + 1) * dim]
    }

    /// All frames of one `(session, class)` record.
    pub fn patterns(&self, session: usize, class: usize) -> &Tensor {
        &self.data[session * self.spec.classes + class]
    }

    /// Stack every frame of the given units into one labeled batch.
    pub fn materialize(&self, units: &[TrainUnit]) -> Result<PatternBatch> {
        self.materialize_rows(units, |n| (0..n).collect())
    }

    /// Stack every `period`-th frame (from 0) of the given units.
    pub fn materialize_subsampled(
        &self,
        units: &[TrainUnit],
        period: usize,
    ) -> Result<PatternBatch> {
        self.materialize_rows(units, |n| subsample_indices(n, period))
    }

    /// The fixed test set: every held-out session of every class,
    /// subsampled at [`TEST_SUBSAMPLE_PERIOD`].
    pub fn test_batch(&self) -> Result<PatternBatch> {
        self.materialize_subsampled(&self.index.test_units(), TEST_SUBSAMPLE_PERIOD)
    }

    fn materialize_rows(
        &self,
        units: &[TrainUnit],
        rows: impl Fn(usize) -> Vec<usize>,
    ) -> Result<PatternBatch> {
        let mut data = Vec::new();
        let mut y = Vec::new();
        for u in units {
            let t = self.patterns(u.session, u.class);
            for r in rows(t.batch()) {
                data.extend_from_slice(t.item(r));
                y.push(u.class);
            }
        }
        let mut shape = Vec::with_capacity(self.spec.shape.len() + 1);
        shape.push(y.len());
        shape.extend_from_slice(&self.spec.shape);
        PatternBatch::new(Tensor::from_vec(&shape, data)?, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            classes: 6,
            categories: 3,
            sessions: 4,
            test_sessions: vec![3],
            frames_per_session: 10,
            shape: vec![8],
            separation: 3.0,
            drift: 0.5,
            noise: 0.2,
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = SynthDataset::generate(small_spec(), 5).unwrap();
        let b = SynthDataset::generate(small_spec(), 5).unwrap();
        for s in 0..4 {
            for c in 0..6 {
                let (ta, tb) = (a.patterns(s, c), b.patterns(s, c));
                assert!(ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
        let c = SynthDataset::generate(small_spec(), 6).unwrap();
        assert!(a
            .patterns(0, 0)
            .data()
            .iter()
            .zip(c.patterns(0, 0).data())
            .any(|(x, y)| x.to_bits() != y.to_bits()));
    }

    #[test]
    fn class_means_are_orthogonal_when_dimensionality_allows() {
        let ds = SynthDataset::generate(small_spec(), 1).unwrap();
        for a in 0..6 {
            let norm: f64 = ds.class_mean(a).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 3.0).abs() < 1e-9, "class {a} norm {norm}");
            for b in 0..a {
                let dot: f64 = ds
                    .class_mean(a)
                    .iter()
                    .zip(ds.class_mean(b))
                    .map(|(x, y)| x * y)
                    .sum();
                assert!(dot.abs() < 1e-9, "classes {a},{b} dot {dot}");
            }
        }
    }

    #[test]
    fn frames_cluster_around_their_class_center() {
        let ds = SynthDataset::generate(small_spec(), 2).unwrap();
        // Nearest-mean classification on a training batch is perfect when
        // separation dominates drift + noise.
        let units: Vec<TrainUnit> = (0..6)
            .map(|class| TrainUnit { session: 0, class })
            .collect();
        let batch = ds.materialize(&units).unwrap();
        for i in 0..batch.len() {
            let x = batch.x.item(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..6 {
                let d: f64 = x
                    .iter()
                    .zip(ds.class_mean(c))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assert_eq!(best, batch.y[i], "frame {i}");
        }
    }

    #[test]
    fn materialize_counts_and_labels() {
        let ds = SynthDataset::generate(small_spec(), 3).unwrap();
        let units = [
            TrainUnit {
                session: 1,
                class: 2,
            },
            TrainUnit {
                session: 0,
                class: 5,
            },
        ];
        let b = ds.materialize(&units).unwrap();
        assert_eq!(b.len(), 20);
        assert_eq!(b.x.shape(), &[20, 8]);
        assert!(b.y[..10].iter().all(|&y| y == 2));
        assert!(b.y[10..].iter().all(|&y| y == 5));

        let sub = ds.materialize_subsampled(&units, 4).unwrap();
        // ceil(10 / 4) = 3 frames per unit.
        assert_eq!(sub.len(), 6);
        assert_eq!(sub.x.item(0), ds.patterns(1, 2).item(0));
        assert_eq!(sub.x.item(1), ds.patterns(1, 2).item(4));
        assert_eq!(sub.x.item(2), ds.patterns(1, 2).item(8));
    }

    #[test]
    fn test_batch_covers_held_out_sessions_subsampled() {
        let mut spec = small_spec();
        spec.frames_per_session = 45;
        let ds = SynthDataset::generate(spec, 4).unwrap();
        let t = ds.test_batch().unwrap();
        // One held-out session, 6 classes, ceil(45/20) = 3 frames each.
        assert_eq!(t.len(), 6 * 3);
        // Every class is represented.
        assert_eq!(t.classes(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small_spec();
        s.shape = vec![];
        assert!(SynthDataset::generate(s, 0).is_err());
        let mut s = small_spec();
        s.frames_per_session = 0;
        assert!(SynthDataset::generate(s, 0).is_err());
        let mut s = small_spec();
        s.noise = -1.0;
        assert!(SynthDataset::generate(s, 0).is_err());
    }
}
