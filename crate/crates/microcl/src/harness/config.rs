//! Flat key-value experiment configuration.
//!
//! The config file is a plain text document of `key = value` lines. Blank
//! lines and lines starting with `#` are skipped. Unknown keys are hard
//! errors — a typo in a hyperparameter name must never silently fall back
//! to a default.
//!
//! ```text
//! # what to run
//! protocol   = nicv2_79          # nicv2_79 | nicv2_196 | nicv2_391 | nc | ni
//! strategy   = cwr_star          # naive | cwr_plus | cwr_star | ar1_star |
//!                                # ewc | dslda | cumulative | lwf_stub
//! runs       = 10
//! seed       = 7
//! out        = results
//!
//! # synthetic dataset (defaults mirror the reference 50-class shape)
//! classes = 50   categories = 10   sessions = 11
//! test_sessions = 2,6,9
//! frames = 40    input = 24        separation = 3.0  drift = 1.0  noise = 0.5
//!
//! # network: tokens over a running shape
//! arch = dense32,brn,relu,dense32,brn,relu,head
//!
//! # hyperparameters (defaults per strategy; every key overridable)
//! eta_b1 = 0.001 ...
//! ```
//!
//! Architecture tokens: `dense<N>`, `dw<K>` (depthwise conv, kernel K),
//! `pw<N>` (pointwise conv to N channels), `relu`, `bn`, `brn`, and a final
//! `head` (classes come from the dataset). Channel/input widths are
//! inferred from the running activation shape, so only output sizes are
//! written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::LayerSpec;
use crate::norm::{BrnSchedule, NormKind};
use crate::protocol::synth::SynthSpec;
use crate::protocol::Scenario;
use crate::strategies::{StrategyConfig, StrategyKind};

/// Everything one experiment needs, resolved and validated.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub protocol: Scenario,
    pub strategy: StrategyConfig,
    pub dataset: SynthSpec,
    pub arch: Vec<LayerSpec>,
    pub schedule: BrnSchedule,
    pub runs: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub emit_plot: bool,
}

/// Training sessions grouped into one incremental batch under a scenario
/// (drives the renorm clip preset).
pub fn sessions_per_batch(scenario: &Scenario) -> usize {
    match scenario {
        Scenario::NicV2 { capacity } => *capacity,
        // Each class arrives with all of its training sessions at once.
        Scenario::Nc { .. } => usize::MAX,
        // One session of every class per batch.
        Scenario::Ni => 1,
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(&path)?;
        ExperimentConfig::from_text(&text)
    }

    /// Parse and resolve a config document.
    pub fn from_text(text: &str) -> Result<ExperimentConfig> {
        let raw = parse_pairs(text)?;
        let mut pairs = Pairs::new(raw);

        let protocol = match pairs.take("protocol")? {
            Some((line, v)) => Scenario::parse(&v).map_err(|e| at(line, e))?,
            None => Scenario::NicV2 { capacity: 5 },
        };
        let protocol = match (protocol, pairs.take_parsed::<usize>("classes_per_batch")?) {
            (Scenario::Nc { .. }, Some(cpb)) => Scenario::Nc {
                classes_per_batch: cpb,
            },
            (p, Some(_)) => {
                return Err(Error::Config(format!(
                    "classes_per_batch only applies to the nc protocol, not {}",
                    p.name()
                )))
            }
            (p, None) => p,
        };

        let kind = match pairs.take("strategy")? {
            Some((line, v)) => StrategyKind::parse(&v).map_err(|e| at(line, e))?,
            None => StrategyKind::Naive,
        };

        let runs = pairs.take_parsed::<usize>("runs")?.unwrap_or(10);
        if runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        let seed = pairs.take_parsed::<u64>("seed")?.unwrap_or(0);
        let out_dir = PathBuf::from(
            pairs
                .take("out")?
                .map(|(_, v)| v)
                .unwrap_or_else(|| "results".into()),
        );
        let emit_plot = match pairs.take("plot")? {
            Some((line, v)) => parse_bool(&v).map_err(|e| at(line, e))?,
            None => false,
        };

        // Dataset.
        let mut dataset = SynthSpec::reference(40, vec![24]);
        if let Some(v) = pairs.take_parsed("classes")? {
            dataset.classes = v;
        }
        if let Some(v) = pairs.take_parsed("categories")? {
            dataset.categories = v;
        }
        if let Some(v) = pairs.take_parsed("sessions")? {
            dataset.sessions = v;
            // Keep the default holdout meaningful for small session counts.
            dataset.test_sessions.retain(|&s| s < v);
        }
        if let Some((line, v)) = pairs.take("test_sessions")? {
            dataset.test_sessions = v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| at(line, Error::Config(format!("bad session index '{t}'"))))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = pairs.take_parsed("frames")? {
            dataset.frames_per_session = v;
        }
        if let Some((line, v)) = pairs.take("input")? {
            dataset.shape = v
                .split('x')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| at(line, Error::Config(format!("bad input extent '{t}'"))))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = pairs.take_parsed("separation")? {
            dataset.separation = v;
        }
        if let Some(v) = pairs.take_parsed("drift")? {
            dataset.drift = v;
        }
        if let Some(v) = pairs.take_parsed("noise")? {
            dataset.noise = v;
        }

        // Architecture.
        let arch_dsl = pairs
            .take("arch")?
            .map(|(_, v)| v)
            .unwrap_or_else(|| "dense32,brn,relu,dense32,brn,relu,head".into());
        let arch = parse_arch(&arch_dsl, &dataset.shape, dataset.classes)?;

        // Hyperparameters over the strategy's published defaults.
        let mut strategy = StrategyConfig::defaults_for(kind);
        if let Some(v) = pairs.take_parsed("eta_b1")? {
            strategy.eta_b1 = v;
        }
        if let Some(v) = pairs.take_parsed("eta_bi")? {
            strategy.eta_bi = v;
            // The head rate follows the generic later rate unless set apart.
            if kind != StrategyKind::Ar1Star {
                strategy.eta_head_bi = v;
            }
        }
        if let Some(v) = pairs.take_parsed("eta_head_bi")? {
            strategy.eta_head_bi = v;
        }
        if let Some(v) = pairs.take_parsed("epochs_b1")? {
            strategy.epochs_b1 = v;
        }
        if let Some(v) = pairs.take_parsed("epochs_bi")? {
            strategy.epochs_bi = v;
        }
        if let Some(v) = pairs.take_parsed("mini_batch")? {
            strategy.mini_batch = v;
        }
        if let Some(v) = pairs.take_parsed("lambda")? {
            strategy.lambda = v;
        }
        if let Some(v) = pairs.take_parsed("max_f")? {
            strategy.max_f = v;
        }
        if let Some(v) = pairs.take_parsed("w_past")? {
            strategy.w_past = v;
        }
        if let Some(v) = pairs.take_parsed("w_cur")? {
            strategy.w_cur = v;
        }
        if let Some(v) = pairs.take_parsed("shrinkage")? {
            strategy.shrinkage = v;
        }
        if let Some((line, v)) = pairs.take("freeze_depthwise")? {
            strategy.freeze_depthwise = parse_bool(&v).map_err(|e| at(line, e))?;
        }
        strategy.validate()?;

        // Renorm schedule preset for the scenario, then explicit overrides.
        let mut schedule = BrnSchedule::for_sessions_per_batch(sessions_per_batch(&protocol));
        if let Some(v) = pairs.take_parsed("r_max")? {
            schedule.later_r_max = v;
        }
        if let Some(v) = pairs.take_parsed("d_max")? {
            schedule.later_d_max = v;
        }
        if let Some(v) = pairs.take_parsed("alpha_past")? {
            schedule.alpha_later = v;
        }
        if let Some(v) = pairs.take_parsed("warmup_iters")? {
            schedule.warmup_iters = v;
        }

        pairs.reject_unknown()?;

        Ok(ExperimentConfig {
            protocol,
            strategy,
            dataset,
            arch,
            schedule,
            runs,
            seed,
            out_dir,
            emit_plot,
        })
    }

    /// `<strategy>_<protocol>`, the stem artifacts are named by.
    pub fn artifact_stem(&self) -> String {
        format!("{}_{}", self.strategy.kind.name(), self.protocol.name())
    }
}

/// Build a layer list from the token DSL over a running activation shape.
pub fn parse_arch(dsl: &str, input_shape: &[usize], classes: usize) -> Result<Vec<LayerSpec>> {
    let mut shape = input_shape.to_vec();
    let mut specs = Vec::new();
    let tokens: Vec<&str> = dsl
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(Error::Config("arch must contain at least a head".into()));
    }
    for tok in &tokens {
        let t = tok.to_ascii_lowercase();
        let spec = if let Some(n) = t.strip_prefix("dense") {
            LayerSpec::Dense {
                inputs: shape.iter().product(),
                outputs: parse_size(n, tok)?,
            }
        } else if let Some(k) = t.strip_prefix("dw") {
            let channels = conv_channels(&shape, tok)?;
            LayerSpec::DepthwiseConv {
                channels,
                kernel: parse_size(k, tok)?,
            }
        } else if let Some(n) = t.strip_prefix("pw") {
            let in_channels = conv_channels(&shape, tok)?;
            LayerSpec::PointwiseConv {
                in_channels,
                out_channels: parse_size(n, tok)?,
            }
        } else if t == "relu" {
            LayerSpec::Relu
        } else if t == "bn" || t == "brn" {
            LayerSpec::Norm {
                channels: shape[0],
                kind: if t == "bn" {
                    NormKind::Batch
                } else {
                    NormKind::BatchRenorm
                },
            }
        } else if t == "head" {
            LayerSpec::Head {
                inputs: shape.iter().product(),
                classes,
            }
        } else {
            return Err(Error::Config(format!(
                "unknown architecture token '{tok}' (expected dense<N>, dw<K>, pw<N>, \
                 relu, bn, brn, or head)"
            )));
        };
        shape = spec.output_shape(&shape)?;
        specs.push(spec);
    }
    if !matches!(specs.last(), Some(LayerSpec::Head { .. })) {
        return Err(Error::Config(
            "arch must end with a head layer".into(),
        ));
    }
    Ok(specs)
}

fn conv_channels(shape: &[usize], tok: &str) -> Result<usize> {
    if shape.len() != 3 {
        return Err(Error::Config(format!(
            "'{tok}' needs a [channels, h, w] activation, but the running shape is {shape:?}"
        )));
    }
    Ok(shape[0])
}

fn parse_size(digits: &str, tok: &str) -> Result<usize> {
    digits
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("bad size in architecture token '{tok}'")))
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(Error::Config(format!("expected a boolean, got '{other}'"))),
    }
}

fn at(line: usize, e: Error) -> Error {
    e.context(format!("line {line}"))
}

/// Split a document into `(key, (line, value))` pairs, rejecting repeats.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty key or value".into(),
            });
        }
        if out.insert(key.clone(), (line_no, value)).is_some() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("key '{key}' set twice"),
            });
        }
    }
    Ok(out)
}

struct Pairs {
    map: BTreeMap<String, (usize, String)>,
}

impl Pairs {
    fn new(map: BTreeMap<String, (usize, String)>) -> Self {
        Pairs { map }
    }

    fn take(&mut self, key: &str) -> Result<Option<(usize, String)>> {
        Ok(self.map.remove(key))
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| Error::Parse {
                line,
                msg: format!("bad value '{v}' for key '{key}'"),
            }),
        }
    }

    fn reject_unknown(&self) -> Result<()> {
        if let Some((key, (line, _))) = self.map.iter().next() {
            return Err(Error::Parse {
                line: *line,
                msg: format!("unknown key '{key}'"),
            });
        }
        Ok(())
    }
}
