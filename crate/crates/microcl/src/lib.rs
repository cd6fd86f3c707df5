//! microcl: rehearsal-free continual learning on tiny from-scratch networks.
//!
//! The crate trains small neural networks on a stream of small batches
//! without revisiting old data, and measures how much earlier knowledge
//! each update strategy retains. Everything is plain Rust and `f64`
//! arithmetic — no BLAS, no autograd framework — so every gradient,
//! normalization correction, and consolidation step is inspectable and is
//! validated against an independent oracle in the test suite.
//!
//! # Modules
//!
//! - [`tensor`], [`nn`]: a dense row-major tensor and a tiny network
//!   (dense, depthwise/pointwise convolution, batch norm / batch renorm,
//!   ReLU, linear head) with hand-written forward/backward and
//!   per-parameter learning-rate scales (scale zero skips the write, so
//!   frozen parameters keep their bits).
//! - [`norm`]: batch renormalization with clipped corrections `(r, d)` and
//!   the schedule that opens the clips during the first batch and
//!   tightens them afterwards.
//! - [`strategies`]: the continual-learning update rules — plain SGD,
//!   consolidated-head variants (tracked consolidation and its
//!   zero-initialized precursor), the modulated variant with a
//!   path-integral importance map, a quadratic-penalty baseline, a
//!   streaming linear discriminant, a knowledge-distillation stub, and
//!   the cumulative retraining upper bound — behind one [`strategies::Trainer`].
//! - [`protocol`]: deterministic benchmark orderings over an indexed
//!   dataset: new instances (NI), new classes (NC), and the
//!   small-incremental-batch generator with category-aware first batch
//!   and bounded class introductions.
//! - [`harness`]: config parsing, experiment running, CSV/report/SVG
//!   output; [`cli`] wraps it in `generate` / `train` / `report` / `check`
//!   subcommands.
//! - [`checkpoint`]: byte-exact serialization of networks plus strategy
//!   side state.
//!
//! # Examples
//!
//! Each major capability has a runnable demonstration:
//!
//! ```text
//! cargo run --example gradient_check     # finite differences vs backprop
//! cargo run --example brn_schedule       # renorm clip schedule, traced
//! cargo run --example cwr_consolidation  # consolidated head bookkeeping
//! cargo run --example nicv2_protocol     # 79/196/391-batch orderings
//! cargo run --example strategy_showdown  # all strategies, one scenario
//! cargo run --example dslda_streaming    # one-pass discriminant
//! cargo run --example memory_overhead    # who stores what
//! cargo run --example checkpoint_io      # bit-exact save/restore
//! ```

// Negated float comparisons (`!(x > 0.0)`) are deliberate throughout: unlike
// `x <= 0.0` they also reject NaN, which is exactly what the validation
// sites want.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numeric kernels index several parallel arrays with one loop variable; the
// indexed form mirrors the underlying math and keeps strides explicit.
#![allow(clippy::needless_range_loop)]

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod harness;
pub mod nn;
pub mod norm;
pub mod protocol;
pub mod selfcheck;
pub mod strategies;
pub mod tensor;

pub use error::{Error, Result};
