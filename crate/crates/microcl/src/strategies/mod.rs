//! Continual-learning strategies over a shared network and data pipeline.
//!
//! A [`Trainer`] owns one network plus whatever side state its strategy
//! needs, consumes training batches strictly in order through
//! [`Trainer::train_batch`], and answers [`Trainer::evaluate`] on the fixed
//! test set after any prefix of batches. The strategies:
//!
//! * `Naive` — plain SGD fine-tuning on each incoming batch; the forgetting
//!   baseline.
//! * `CwrPlus` — the output head is reset to zero before every batch and the
//!   trained rows overwrite the consolidated copy (mean-shifted); lower
//!   layers train on the first batch only.
//! * `CwrStar` — like `CwrPlus`, but the temporary head rows start from the
//!   consolidated copy for re-occurring classes and consolidation blends by
//!   `sqrt(past / current)` evidence weighting.
//! * `Ar1Star` — the `CwrStar` head flow, plus the lower layers keep training
//!   on every batch with per-parameter learning rates modulated by a
//!   path-integral importance measure (no parameter anchor is stored).
//! * `Ewc` — SGD with a quadratic penalty pulling parameters toward an
//!   anchor copy, weighted by a squared-gradient importance estimate merged
//!   across batches into a single clipped vector.
//! * `Dslda` — the network is a frozen random feature extractor; a streaming
//!   linear discriminant (per-class means + one pooled covariance) does the
//!   classification.
//! * `Cumulative` — retrains from scratch on the union of everything seen so
//!   far; the non-continual upper bound, and the only strategy charged for
//!   stored data.
//! * `LwfStub` — placeholder with learning-without-forgetting's published
//!   schedule but no distillation term; behaves like `Naive` with its own
//!   rates, and exists so the strategy surface is complete.
//!
//! Determinism: every stochastic choice inside a batch flows from a
//! generator seeded by `(run_seed, batch_index)` only, so strategies that
//! should coincide on a prefix of batches (e.g. `Cumulative` and `Naive` on
//! the first batch) coincide bit-for-bit.

pub mod dslda;
pub mod head;
pub mod importance;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::PatternBatch;
use crate::error::{Error, Result};
use crate::nn::{update, LayerSpec, Mode, Network, ParamRange};
use crate::norm::BrnSchedule;
use crate::tensor::Tensor;

pub use dslda::DsldaState;
pub use head::{class_counts, ClassCounters, HeadState};
pub use importance::{FisherSource, ImportanceState};

/// Bytes per stored scalar in the overhead accounting (f64 / u64 entries).
pub const BYTES_PER_SCALAR: u64 = 8;

/// Patterns per forward pass during evaluation (bounds peak memory; has no
/// effect on results since evaluation is per-pattern deterministic).
const EVAL_CHUNK: usize = 512;

// ---------------------------------------------------------------------------
// Strategy kinds and configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Naive,
    CwrPlus,
    CwrStar,
    Ar1Star,
    Ewc,
    Dslda,
    Cumulative,
    LwfStub,
}

impl StrategyKind {
    pub fn all() -> [StrategyKind; 8] {
        [
            StrategyKind::Naive,
            StrategyKind::CwrPlus,
            StrategyKind::CwrStar,
            StrategyKind::Ar1Star,
            StrategyKind::Ewc,
            StrategyKind::Dslda,
            StrategyKind::Cumulative,
            StrategyKind::LwfStub,
        ]
    }

    /// Canonical (file-name safe) identifier.
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Naive => "naive",
            StrategyKind::CwrPlus => "cwr_plus",
            StrategyKind::CwrStar => "cwr_star",
            StrategyKind::Ar1Star => "ar1_star",
            StrategyKind::Ewc => "ewc",
            StrategyKind::Dslda => "dslda",
            StrategyKind::Cumulative => "cumulative",
            StrategyKind::LwfStub => "lwf_stub",
        }
    }

    /// Human-readable display name for reports.
    pub fn display(&self) -> &'static str {
        match self {
            StrategyKind::Naive => "Naive",
            StrategyKind::CwrPlus => "CWR+",
            StrategyKind::CwrStar => "CWR*",
            StrategyKind::Ar1Star => "AR1*",
            StrategyKind::Ewc => "EWC",
            StrategyKind::Dslda => "DSLDA",
            StrategyKind::Cumulative => "Cumulative",
            StrategyKind::LwfStub => "LwF-stub",
        }
    }

    pub fn parse(s: &str) -> Result<StrategyKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "naive" => Ok(StrategyKind::Naive),
            "cwr+" | "cwr_plus" | "cwrplus" => Ok(StrategyKind::CwrPlus),
            "cwr*" | "cwr_star" | "cwrstar" => Ok(StrategyKind::CwrStar),
            "ar1*" | "ar1_star" | "ar1star" => Ok(StrategyKind::Ar1Star),
            "ewc" => Ok(StrategyKind::Ewc),
            "dslda" => Ok(StrategyKind::Dslda),
            "cumulative" => Ok(StrategyKind::Cumulative),
            "lwf_stub" | "lwf" | "lwfstub" => Ok(StrategyKind::LwfStub),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected one of: naive, cwr_plus, cwr_star, \
                 ar1_star, ewc, dslda, cumulative, lwf_stub)"
            ))),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.display())
    }
}

/// Hyperparameters of one strategy run. [`StrategyConfig::defaults_for`]
/// supplies the reference defaults per strategy; the experiment harness
/// overrides them from config files.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Epochs over the first batch / over each later batch.
    pub epochs_b1: usize,
    pub epochs_bi: usize,
    /// Learning rate on the first batch / on later batches. For `Ar1Star`
    /// the later-batch rate applies to the lower layers only.
    pub eta_b1: f64,
    pub eta_bi: f64,
    /// Later-batch learning rate for the head (differs from `eta_bi` only
    /// for `Ar1Star`).
    pub eta_head_bi: f64,
    pub mini_batch: usize,
    /// Quadratic-penalty strength (`Ewc`; stored but unused by `LwfStub`).
    pub lambda: f64,
    /// Importance ceiling for clipping and learning-rate modulation.
    pub max_f: f64,
    /// Importance merge weights across batches.
    pub w_past: f64,
    pub w_cur: f64,
    /// Identity shrinkage of the pooled covariance (`Dslda`).
    pub shrinkage: f64,
    /// Freeze depthwise filters from the second batch onward (cheap layers
    /// whose early freezing barely hurts accuracy).
    pub freeze_depthwise: bool,
    /// `Ar1Star`: accumulate the path-integral importance (disabling leaves
    /// all importances at zero, reducing the lower-layer update to plain
    /// SGD).
    pub si_enabled: bool,
    /// `CwrPlus`/`CwrStar`: keep the lower layers training on later batches
    /// instead of freezing them after the first.
    pub cwr_train_rep_bi: bool,
}

impl StrategyConfig {
    /// Reference defaults for each strategy.
    pub fn defaults_for(kind: StrategyKind) -> StrategyConfig {
        let base = StrategyConfig {
            kind,
            epochs_b1: 2,
            epochs_bi: 2,
            eta_b1: 1e-3,
            eta_bi: 1e-3,
            eta_head_bi: 1e-3,
            mini_batch: 128,
            lambda: 0.0,
            max_f: 1e-3,
            w_past: 0.5,
            w_cur: 0.5,
            shrinkage: 1e-4,
            freeze_depthwise: false,
            si_enabled: true,
            cwr_train_rep_bi: false,
        };
        match kind {
            StrategyKind::Naive => StrategyConfig {
                eta_bi: 3.5e-5,
                eta_head_bi: 3.5e-5,
                ..base
            },
            StrategyKind::LwfStub => StrategyConfig {
                eta_bi: 5e-5,
                eta_head_bi: 5e-5,
                lambda: 0.1,
                ..base
            },
            StrategyKind::Ewc => StrategyConfig {
                eta_bi: 1e-4,
                eta_head_bi: 1e-4,
                lambda: 2.0e6,
                ..base
            },
            StrategyKind::CwrPlus | StrategyKind::CwrStar => StrategyConfig {
                epochs_b1: 4,
                epochs_bi: 4,
                ..base
            },
            StrategyKind::Ar1Star => StrategyConfig {
                epochs_b1: 4,
                epochs_bi: 4,
                eta_bi: 1e-4,
                eta_head_bi: 1e-3,
                ..base
            },
            // The discriminant strategy runs no SGD at all.
            StrategyKind::Dslda => base,
            // Retrains are from scratch, so every pass uses the first-batch
            // schedule.
            StrategyKind::Cumulative => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mini_batch == 0 {
            return Err(Error::Config("mini_batch must be at least 1".into()));
        }
        if self.kind != StrategyKind::Dslda {
            if self.epochs_b1 == 0 || self.epochs_bi == 0 {
                return Err(Error::Config(
                    "epochs_b1 and epochs_bi must be at least 1".into(),
                ));
            }
            if !(self.eta_b1 > 0.0) || !(self.eta_bi > 0.0) || !(self.eta_head_bi > 0.0) {
                return Err(Error::Config(format!(
                    "learning rates must be positive, got eta_b1={} eta_bi={} eta_head_bi={}",
                    self.eta_b1, self.eta_bi, self.eta_head_bi
                )));
            }
        }
        if self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Overhead accounting
// ---------------------------------------------------------------------------

/// What a strategy stores beyond the live model, in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverheadReport {
    pub strategy: StrategyKind,
    /// Raw training patterns retained across batches.
    pub data_bytes: u64,
    /// Per-parameter importance vector.
    pub importance_bytes: u64,
    /// Anchor copy of the parameters (quadratic-penalty strategies only).
    pub anchor_bytes: u64,
    /// Classifier-side state: consolidated head rows and counters, or the
    /// streaming discriminant statistics.
    pub classifier_bytes: u64,
}

impl OverheadReport {
    /// Total parameter-shaped overhead (everything except stored data).
    pub fn param_bytes(&self) -> u64 {
        self.importance_bytes + self.anchor_bytes + self.classifier_bytes
    }

    pub fn total_bytes(&self) -> u64 {
        self.data_bytes + self.param_bytes()
    }
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

/// Per-iteration parameter update rule, fixed for the duration of one batch.
#[derive(Debug, Clone, Copy)]
enum Rule {
    /// One rate for every trainable parameter.
    Plain { eta: f64 },
    /// Lower layers modulated by importance, head at its own plain rate.
    ModulatedSplit { eta_rep: f64, eta_head: f64 },
    /// Quadratic-penalty update toward the stored anchor.
    Penalty { eta: f64, lambda: f64 },
}

/// One strategy instance: network, side state, and the batch counter.
#[derive(Debug)]
pub struct Trainer {
    cfg: StrategyConfig,
    net: Network,
    schedule: BrnSchedule,
    head: Option<HeadState>,
    importance: Option<ImportanceState>,
    dslda: Option<DsldaState>,
    /// Stored batches (`Cumulative` only).
    replay: Vec<PatternBatch>,
    data_bytes: u64,
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    init_seed: u64,
    run_seed: u64,
    batches_trained: usize,
}

/// Batch-scoped generator: every stochastic choice inside batch `b` of run
/// seed `r` flows from this, so equal `(r, b)` pairs replay identically
/// regardless of what other batches did.
fn batch_rng(run_seed: u64, batch_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(run_seed ^ (batch_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl Trainer {
    /// Build a strategy instance. `init_seed` fixes the weight
    /// initialization; `run_seed` drives all training-time randomness.
    pub fn new(
        input_shape: &[usize],
        specs: Vec<LayerSpec>,
        cfg: StrategyConfig,
        schedule: BrnSchedule,
        init_seed: u64,
        run_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let net = Network::new(input_shape, specs.clone(), init_seed)?;
        let classes = net.num_classes();
        let dim = net.feature_dim();
        let head = match cfg.kind {
            StrategyKind::CwrPlus | StrategyKind::CwrStar | StrategyKind::Ar1Star => {
                Some(HeadState::new(classes, dim))
            }
            _ => None,
        };
        let importance = match cfg.kind {
            StrategyKind::Ewc => Some(ImportanceState::new(
                net.param_count(),
                FisherSource::SquaredGradients,
                cfg.max_f,
                cfg.w_past,
                cfg.w_cur,
            )?),
            StrategyKind::Ar1Star => Some(ImportanceState::new(
                net.param_count(),
                FisherSource::PathIntegral,
                cfg.max_f,
                cfg.w_past,
                cfg.w_cur,
            )?),
            _ => None,
        };
        let dslda = match cfg.kind {
            StrategyKind::Dslda => Some(DsldaState::new(classes, dim, cfg.shrinkage)?),
            _ => None,
        };
        Ok(Trainer {
            cfg,
            net,
            schedule,
            head,
            importance,
            dslda,
            replay: Vec::new(),
            data_bytes: 0,
            input_shape: input_shape.to_vec(),
            specs,
            init_seed,
            run_seed,
            batches_trained: 0,
        })
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.cfg
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn head_state(&self) -> Option<&HeadState> {
        self.head.as_ref()
    }

    pub fn importance_state(&self) -> Option<&ImportanceState> {
        self.importance.as_ref()
    }

    pub fn dslda_state(&self) -> Option<&DsldaState> {
        self.dslda.as_ref()
    }

    pub fn batches_trained(&self) -> usize {
        self.batches_trained
    }

    pub fn schedule(&self) -> &BrnSchedule {
        &self.schedule
    }

    /// Snapshot the network plus whatever side state this strategy keeps
    /// (consolidated head, importance/anchor). Meaningful at batch
    /// boundaries only; mid-batch scratch is never saved.
    pub fn checkpoint(&self) -> crate::checkpoint::Checkpoint {
        let mut ck = crate::checkpoint::Checkpoint::from_network(&self.net);
        ck.head = self.head.clone();
        ck.importance = self.importance.clone();
        ck
    }

    /// Consume the next training batch (1-based index tracked internally).
    pub fn train_batch(&mut self, data: &PatternBatch) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Protocol("training batch is empty".into()));
        }
        let classes = self.net.num_classes();
        for &y in &data.y {
            if y >= classes {
                return Err(Error::LabelOutOfRange { label: y, classes });
            }
        }
        let bi = self.batches_trained + 1;
        match self.cfg.kind {
            StrategyKind::Dslda => self.train_dslda(data)?,
            StrategyKind::Cumulative => self.train_cumulative(bi, data)?,
            _ => self.train_incremental(bi, data)?,
        }
        self.batches_trained = bi;
        Ok(())
    }

    /// Accuracy (percent) of the strategy's live classifier on a test set.
    pub fn evaluate(&self, test: &PatternBatch) -> Result<f64> {
        if test.is_empty() {
            return Err(Error::Protocol("test set is empty".into()));
        }
        let preds = self.predict(&test.x)?;
        let correct = preds.iter().zip(&test.y).filter(|(p, y)| p == y).count();
        Ok(100.0 * correct as f64 / test.len() as f64)
    }

    /// Class predictions under the strategy's own classifier: consolidated
    /// head rows for the CWR family, the streaming discriminant for `Dslda`,
    /// the live network head otherwise.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        match self.cfg.kind {
            StrategyKind::CwrPlus | StrategyKind::CwrStar | StrategyKind::Ar1Star => {
                let feats = self.features_chunked(x)?;
                Ok(self.head.as_ref().expect("cwr family").predict(&feats))
            }
            StrategyKind::Dslda => {
                let feats = self.features_chunked(x)?;
                self.dslda.as_ref().expect("dslda").predict(&feats)
            }
            _ => {
                let mut out = Vec::with_capacity(x.batch());
                for chunk in Self::chunks(x) {
                    out.extend(self.net.predict(&chunk)?);
                }
                Ok(out)
            }
        }
    }

    /// Live storage beyond the model itself.
    pub fn overhead_report(&self) -> OverheadReport {
        OverheadReport {
            strategy: self.cfg.kind,
            data_bytes: self.data_bytes,
            importance_bytes: self.importance.as_ref().map_or(0, |i| {
                i.importance_scalar_count() as u64 * BYTES_PER_SCALAR
            }),
            anchor_bytes: self
                .importance
                .as_ref()
                .map_or(0, |i| i.anchor_scalar_count() as u64 * BYTES_PER_SCALAR),
            classifier_bytes: self.head.as_ref().map_or(0, |h| {
                (h.stored_scalars() + h.classes()) as u64 * BYTES_PER_SCALAR
            }) + self
                .dslda
                .as_ref()
                .map_or(0, |d| d.stored_scalars() as u64 * BYTES_PER_SCALAR),
        }
    }

    // -- internals ---------------------------------------------------------

    fn chunks(x: &Tensor) -> impl Iterator<Item = Tensor> + '_ {
        let n = x.batch();
        let item = x.item_len();
        let shape = x.shape().to_vec();
        (0..n.div_ceil(EVAL_CHUNK)).map(move |c| {
            let lo = c * EVAL_CHUNK;
            let hi = (lo + EVAL_CHUNK).min(n);
            let mut s = shape.clone();
            s[0] = hi - lo;
            Tensor::from_vec(&s, x.data()[lo * item..hi * item].to_vec())
                .expect("chunk shape matches data")
        })
    }

    /// Head-input features in evaluation mode, chunked to bound memory.
    fn features_chunked(&self, x: &Tensor) -> Result<Tensor> {
        let dim = self.net.feature_dim();
        let mut data = Vec::with_capacity(x.batch() * dim);
        for chunk in Self::chunks(x) {
            let f = self.net.features(&chunk, Mode::Eval)?;
            data.extend_from_slice(f.data());
        }
        Tensor::from_vec(&[x.batch(), dim], data)
    }

    fn eta(&self, bi: usize) -> f64 {
        if bi == 1 {
            self.cfg.eta_b1
        } else {
            self.cfg.eta_bi
        }
    }

    fn epochs(&self, bi: usize) -> usize {
        if bi == 1 {
            self.cfg.epochs_b1
        } else {
            self.cfg.epochs_bi
        }
    }

    /// On the first batch, stretch the correction-limit ramp across the
    /// iterations remaining after warm-up.
    fn configure_ramp(&mut self, schedule_batch: usize, patterns: usize, epochs: usize) {
        if schedule_batch != 1 {
            return;
        }
        let per_epoch = patterns.div_ceil(self.cfg.mini_batch.max(1));
        let total = (epochs * per_epoch) as u64;
        self.schedule.ramp_iters = total.saturating_sub(self.schedule.warmup_iters).max(1);
    }

    /// Reset and re-apply the learning-rate scales for this batch.
    fn apply_freeze_policy(&mut self, bi: usize) {
        self.net.unfreeze_all();
        let incremental = bi >= 2;
        if incremental
            && !self.cfg.cwr_train_rep_bi
            && matches!(self.cfg.kind, StrategyKind::CwrPlus | StrategyKind::CwrStar)
        {
            self.net
                .freeze_layers(|s| !matches!(s, LayerSpec::Head { .. }));
        }
        if incremental && self.cfg.freeze_depthwise {
            self.net
                .freeze_layers(|s| matches!(s, LayerSpec::DepthwiseConv { .. }));
        }
    }

    fn train_dslda(&mut self, data: &PatternBatch) -> Result<()> {
        // The network stays at its random initialization: a fixed feature
        // extractor. Only the discriminant statistics learn.
        let feats = self.features_chunked(&data.x)?;
        let lda = self.dslda.as_mut().expect("dslda state");
        for i in 0..data.len() {
            lda.update(feats.item(i), data.y[i])?;
        }
        Ok(())
    }

    fn train_cumulative(&mut self, bi: usize, data: &PatternBatch) -> Result<()> {
        self.replay.push(data.clone());
        self.data_bytes += data.byte_size();
        let union = PatternBatch::concat(&self.replay)?;
        // Retrain from scratch: same initialization as batch 1, first-batch
        // schedule semantics, generator tied to this batch index.
        self.net = Network::new(&self.input_shape, self.specs.clone(), self.init_seed)?;
        self.net.unfreeze_all();
        let mut rng = batch_rng(self.run_seed, bi);
        self.configure_ramp(1, union.len(), self.cfg.epochs_b1);
        self.run_sgd(
            &union,
            self.cfg.epochs_b1,
            Rule::Plain {
                eta: self.cfg.eta_b1,
            },
            1,
            &mut rng,
            false,
        )
    }

    fn train_incremental(&mut self, bi: usize, data: &PatternBatch) -> Result<()> {
        let mut rng = batch_rng(self.run_seed, bi);
        self.configure_ramp(bi, data.len(), self.epochs(bi));
        self.apply_freeze_policy(bi);

        let counts = class_counts(&data.y);
        let batch_classes: Vec<usize> = counts.keys().copied().collect();

        // Head preparation (CWR family).
        match self.cfg.kind {
            StrategyKind::CwrPlus => self
                .head
                .as_ref()
                .expect("cwr family")
                .load_zero_tw(&mut self.net)?,
            StrategyKind::CwrStar | StrategyKind::Ar1Star => self
                .head
                .as_ref()
                .expect("cwr family")
                .load_tw(&mut self.net, &batch_classes)?,
            _ => {}
        }

        // Importance tracking for this batch.
        let track = match self.cfg.kind {
            StrategyKind::Ewc => true,
            StrategyKind::Ar1Star => self.cfg.si_enabled,
            _ => false,
        };
        if track {
            let params = self.net.params().values().to_vec();
            self.importance
                .as_mut()
                .expect("importance state")
                .begin_batch(&params)?;
        }

        let rule = match self.cfg.kind {
            StrategyKind::Ar1Star if bi >= 2 => Rule::ModulatedSplit {
                eta_rep: self.cfg.eta_bi,
                eta_head: self.cfg.eta_head_bi,
            },
            StrategyKind::Ewc if bi >= 2 => Rule::Penalty {
                eta: self.eta(bi),
                lambda: self.cfg.lambda,
            },
            _ => Rule::Plain { eta: self.eta(bi) },
        };

        self.run_sgd(data, self.epochs(bi), rule, bi, &mut rng, track)?;

        // Consolidations.
        match self.cfg.kind {
            StrategyKind::CwrPlus => self
                .head
                .as_mut()
                .expect("cwr family")
                .consolidate_overwrite(&self.net, &counts)?,
            StrategyKind::CwrStar | StrategyKind::Ar1Star => self
                .head
                .as_mut()
                .expect("cwr family")
                .consolidate_blend(&self.net, &counts)?,
            _ => {}
        }
        if track {
            let params = self.net.params().values().to_vec();
            self.importance
                .as_mut()
                .expect("importance state")
                .fisher_consolidate(&params)?;
        }
        Ok(())
    }

    /// The shared SGD loop: shuffle, chunk, forward, backward, apply the
    /// rule, record importance, fold mini-batch moments into the moving
    /// statistics.
    fn run_sgd(
        &mut self,
        data: &PatternBatch,
        epochs: usize,
        rule: Rule,
        schedule_batch: usize,
        rng: &mut ChaCha8Rng,
        track: bool,
    ) -> Result<()> {
        let n = data.len();
        let mb = self.cfg.mini_batch.max(1);
        let head_range = self.net.head_range();
        let rep_range = ParamRange {
            offset: 0,
            len: head_range.offset,
        };
        let track_path = track
            && self
                .importance
                .as_ref()
                .is_some_and(|i| i.source() == FisherSource::PathIntegral);
        let mut iteration = 0u64;
        for _ in 0..epochs {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            for chunk in order.chunks(mb) {
                let mbatch = data.gather(chunk);
                let (r, d, a) = self.schedule.params_at(schedule_batch, iteration);
                self.net.set_norm_limits(r, d, a)?;
                let trace = self.net.forward(&mbatch.x, Mode::Train)?;
                let bp = self.net.backward(&trace, &mbatch.y)?;
                let before = if track_path {
                    Some(self.net.params().values().to_vec())
                } else {
                    None
                };
                match rule {
                    Rule::Plain { eta } => update::sgd_step(&mut self.net, &bp.grads, eta)?,
                    Rule::ModulatedSplit { eta_rep, eta_head } => {
                        let imp = self.importance.as_ref().expect("importance state");
                        update::lr_modulated_update(
                            &mut self.net,
                            &bp.grads,
                            eta_rep,
                            imp.f(),
                            imp.max_f,
                            rep_range,
                        )?;
                        update::sgd_step_range(&mut self.net, &bp.grads, eta_head, head_range)?;
                    }
                    Rule::Penalty { eta, lambda } => {
                        let imp = self.importance.as_ref().expect("importance state");
                        let anchor = imp.anchor().ok_or_else(|| {
                            Error::Config(
                                "penalty update requested before any consolidation".into(),
                            )
                        })?;
                        update::ewc_update(&mut self.net, &bp.grads, eta, imp.f(), anchor, lambda)?;
                    }
                }
                if track {
                    let after = self.net.params().values();
                    let before_ref: &[f64] = before.as_deref().unwrap_or(after);
                    self.importance
                        .as_mut()
                        .expect("importance state")
                        .record_step(&bp.grads, before_ref, after)?;
                }
                self.net.update_moments(&trace);
                iteration += 1;
            }
        }
        Ok(())
    }
}
