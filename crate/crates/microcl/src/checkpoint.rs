//! Flat binary weights files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            8 bytes  "MICROCLW"
//! format version   u32
//! input shape      u32 rank, then rank x u32
//! layer table      u32 count, then per layer: u8 kind, u32 a, u32 b
//! parameters       u64 count, then count x f64 in flat-index order
//! sections         repeated (u8 tag, payload), strictly ascending tags,
//!                  terminated by tag 0xFF
//! ```
//!
//! Layer kinds: 0 dense(a->b), 1 depthwise(channels=a, kernel=b),
//! 2 pointwise(a->b), 3 relu, 4 norm(channels=a, b: 0 batch / 1 renorm),
//! 5 head(a->b).
//!
//! Sections:
//! - `0x01` normalization moments: u32 layer count, then per norm layer
//!   u8 initialized, u32 channels, channels x f64 mu, channels x f64 sigma.
//! - `0x02` consolidated head: u32 classes, u32 dim,
//!   classes*(dim+1) x f64 weights, classes x u64 counters.
//! - `0x03` importance: u8 source (0 squared-gradients / 1 path-integral),
//!   f64 max_f, f64 w_past, f64 w_cur, u64 len, len x f64 importance,
//!   u8 anchor flag, then len x f64 anchor when the flag is 1.
//!
//! A checkpoint restores a network for evaluation or further training;
//! mid-batch scratch (trajectories, unconsolidated temporary weights) is
//! never stored, so saves are only meaningful at batch boundaries.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network};
use crate::norm::NormKind;
use crate::strategies::head::HeadState;
use crate::strategies::importance::{FisherSource, ImportanceState};

pub const MAGIC: [u8; 8] = *b"MICROCLW";
pub const FORMAT_VERSION: u32 = 1;

const SECTION_NORM: u8 = 0x01;
const SECTION_HEAD: u8 = 0x02;
const SECTION_IMPORTANCE: u8 = 0x03;
const SECTION_END: u8 = 0xFF;

/// Moving moments of one normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormMoments {
    pub initialized: bool,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Everything a weights file stores, as plain data.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub input_shape: Vec<usize>,
    pub specs: Vec<LayerSpec>,
    pub params: Vec<f64>,
    /// One entry per `Norm` layer, in layer order; empty when the network
    /// has no normalization layers.
    pub norm_moments: Vec<NormMoments>,
    pub head: Option<HeadState>,
    pub importance: Option<ImportanceState>,
}

impl Checkpoint {
    /// Snapshot a bare network (weights plus normalization moments).
    pub fn from_network(net: &Network) -> Checkpoint {
        Checkpoint {
            input_shape: net.input_shape().to_vec(),
            specs: net.specs().to_vec(),
            params: net.params().values().to_vec(),
            norm_moments: net
                .norm_states()
                .iter()
                .map(|s| NormMoments {
                    initialized: s.initialized,
                    mu: s.mu.clone(),
                    sigma: s.sigma.clone(),
                })
                .collect(),
            head: None,
            importance: None,
        }
    }

    /// Rebuild the network this checkpoint describes.
    pub fn restore_network(&self) -> Result<Network> {
        let mut net = Network::new(&self.input_shape, self.specs.clone(), 0)?;
        if net.param_count() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "layer table implies {} parameters but the file stores {}",
                net.param_count(),
                self.params.len()
            )));
        }
        net.values_mut().copy_from_slice(&self.params);
        let states = net.norm_states_mut();
        if states.len() != self.norm_moments.len() {
            return Err(Error::Checkpoint(format!(
                "layer table has {} normalization layers but the file stores moments for {}",
                states.len(),
                self.norm_moments.len()
            )));
        }
        for (st, m) in states.iter_mut().zip(&self.norm_moments) {
            if st.channels() != m.mu.len() || st.channels() != m.sigma.len() {
                return Err(Error::Checkpoint(format!(
                    "moment vectors of length {}/{} for a {}-channel layer",
                    m.mu.len(),
                    m.sigma.len(),
                    st.channels()
                )));
            }
            st.initialized = m.initialized;
            st.mu.copy_from_slice(&m.mu);
            st.sigma.copy_from_slice(&m.sigma);
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        Checkpoint::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&MAGIC)?;
        write_u32(w, FORMAT_VERSION)?;
        write_u32(w, dim_u32(self.input_shape.len(), "input rank")?)?;
        for &d in &self.input_shape {
            write_u32(w, dim_u32(d, "input dimension")?)?;
        }
        write_u32(w, dim_u32(self.specs.len(), "layer count")?)?;
        for spec in &self.specs {
            let (kind, a, b) = encode_spec(spec)?;
            w.write_all(&[kind])?;
            write_u32(w, a)?;
            write_u32(w, b)?;
        }
        write_u64(w, self.params.len() as u64)?;
        for &p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        if !self.norm_moments.is_empty() {
            w.write_all(&[SECTION_NORM])?;
            write_u32(w, dim_u32(self.norm_moments.len(), "norm layer count")?)?;
            for m in &self.norm_moments {
                if m.mu.len() != m.sigma.len() {
                    return Err(Error::Checkpoint(
                        "mu and sigma lengths differ in a moments entry".into(),
                    ));
                }
                w.write_all(&[u8::from(m.initialized)])?;
                write_u32(w, dim_u32(m.mu.len(), "norm channels")?)?;
                for &v in &m.mu {
                    w.write_all(&v.to_le_bytes())?;
                }
                for &v in &m.sigma {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        if let Some(head) = &self.head {
            w.write_all(&[SECTION_HEAD])?;
            write_u32(w, dim_u32(head.classes(), "head classes")?)?;
            write_u32(w, dim_u32(head.dim(), "head dim")?)?;
            for &v in head.cw_flat() {
                w.write_all(&v.to_le_bytes())?;
            }
            for &c in head.counters.counts() {
                write_u64(w, c)?;
            }
        }
        if let Some(imp) = &self.importance {
            w.write_all(&[SECTION_IMPORTANCE])?;
            let source = match imp.source() {
                FisherSource::SquaredGradients => 0u8,
                FisherSource::PathIntegral => 1u8,
            };
            w.write_all(&[source])?;
            w.write_all(&imp.max_f.to_le_bytes())?;
            w.write_all(&imp.w_past.to_le_bytes())?;
            w.write_all(&imp.w_cur.to_le_bytes())?;
            write_u64(w, imp.f().len() as u64)?;
            for &v in imp.f() {
                w.write_all(&v.to_le_bytes())?;
            }
            match imp.anchor() {
                Some(anchor) => {
                    w.write_all(&[1u8])?;
                    for &v in anchor {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
                None => w.write_all(&[0u8])?,
            }
        }
        w.write_all(&[SECTION_END])?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Checkpoint> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(
                "not a weights file (magic mismatch)".into(),
            ));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (this build reads {FORMAT_VERSION})"
            )));
        }
        let rank = read_u32(r)? as usize;
        let input_shape: Vec<usize> = (0..rank)
            .map(|_| read_u32(r).map(|d| d as usize))
            .collect::<Result<_>>()?;
        let layer_count = read_u32(r)? as usize;
        let mut specs = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind)?;
            let a = read_u32(r)? as usize;
            let b = read_u32(r)? as usize;
            specs.push(decode_spec(kind[0], a, b)?);
        }
        let param_count = read_u64(r)? as usize;
        let mut params = Vec::with_capacity(param_count);
        for _ in 0..param_count {
            params.push(read_f64(r)?);
        }

        let mut norm_moments = Vec::new();
        let mut head = None;
        let mut importance = None;
        let mut last_tag = 0u8;
        loop {
            let mut tag = [0u8; 1];
            r.read_exact(&mut tag)?;
            let tag = tag[0];
            if tag == SECTION_END {
                break;
            }
            if tag <= last_tag {
                return Err(Error::Checkpoint(format!(
                    "section {tag:#04x} out of order (sections must ascend)"
                )));
            }
            last_tag = tag;
            match tag {
                SECTION_NORM => {
                    let n = read_u32(r)? as usize;
                    for _ in 0..n {
                        let mut init = [0u8; 1];
                        r.read_exact(&mut init)?;
                        let channels = read_u32(r)? as usize;
                        let mu: Vec<f64> =
                            (0..channels).map(|_| read_f64(r)).collect::<Result<_>>()?;
                        let sigma: Vec<f64> =
                            (0..channels).map(|_| read_f64(r)).collect::<Result<_>>()?;
                        norm_moments.push(NormMoments {
                            initialized: init[0] != 0,
                            mu,
                            sigma,
                        });
                    }
                }
                SECTION_HEAD => {
                    let classes = read_u32(r)? as usize;
                    let dim = read_u32(r)? as usize;
                    let cw: Vec<f64> = (0..classes * (dim + 1))
                        .map(|_| read_f64(r))
                        .collect::<Result<_>>()?;
                    let past: Vec<u64> =
                        (0..classes).map(|_| read_u64(r)).collect::<Result<_>>()?;
                    head = Some(HeadState::from_parts(classes, dim, cw, past)?);
                }
                SECTION_IMPORTANCE => {
                    let mut source = [0u8; 1];
                    r.read_exact(&mut source)?;
                    let source = match source[0] {
                        0 => FisherSource::SquaredGradients,
                        1 => FisherSource::PathIntegral,
                        other => {
                            return Err(Error::Checkpoint(format!(
                                "unknown importance source code {other}"
                            )))
                        }
                    };
                    let max_f = read_f64(r)?;
                    let w_past = read_f64(r)?;
                    let w_cur = read_f64(r)?;
                    let len = read_u64(r)? as usize;
                    let f: Vec<f64> = (0..len).map(|_| read_f64(r)).collect::<Result<_>>()?;
                    let mut flag = [0u8; 1];
                    r.read_exact(&mut flag)?;
                    let anchor = if flag[0] != 0 {
                        Some((0..len).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?)
                    } else {
                        None
                    };
                    importance = Some(ImportanceState::from_parts(
                        source, f, anchor, max_f, w_past, w_cur,
                    )?);
                }
                other => {
                    return Err(Error::Checkpoint(format!(
                        "unknown section tag {other:#04x}"
                    )));
                }
            }
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Checkpoint(
                "trailing bytes after the end-of-sections marker".into(),
            ));
        }
        Ok(Checkpoint {
            input_shape,
            specs,
            params,
            norm_moments,
            head,
            importance,
        })
    }
}

fn encode_spec(spec: &LayerSpec) -> Result<(u8, u32, u32)> {
    let (kind, a, b) = match *spec {
        LayerSpec::Dense { inputs, outputs } => (0u8, inputs, outputs),
        LayerSpec::DepthwiseConv { channels, kernel } => (1, channels, kernel),
        LayerSpec::PointwiseConv {
            in_channels,
            out_channels,
        } => (2, in_channels, out_channels),
        LayerSpec::Relu => (3, 0, 0),
        LayerSpec::Norm { channels, kind } => (
            4,
            channels,
            match kind {
                NormKind::Batch => 0,
                NormKind::BatchRenorm => 1,
            },
        ),
        LayerSpec::Head { inputs, classes } => (5, inputs, classes),
    };
    Ok((kind, dim_u32(a, "layer dimension")?, dim_u32(b, "layer dimension")?))
}

fn decode_spec(kind: u8, a: usize, b: usize) -> Result<LayerSpec> {
    Ok(match kind {
        0 => LayerSpec::Dense {
            inputs: a,
            outputs: b,
        },
        1 => LayerSpec::DepthwiseConv {
            channels: a,
            kernel: b,
        },
        2 => LayerSpec::PointwiseConv {
            in_channels: a,
            out_channels: b,
        },
        3 => LayerSpec::Relu,
        4 => LayerSpec::Norm {
            channels: a,
            kind: match b {
                0 => NormKind::Batch,
                1 => NormKind::BatchRenorm,
                other => {
                    return Err(Error::Checkpoint(format!(
                        "unknown normalization kind code {other}"
                    )))
                }
            },
        },
        5 => LayerSpec::Head {
            inputs: a,
            classes: b,
        },
        other => {
            return Err(Error::Checkpoint(format!(
                "unknown layer kind code {other}"
            )))
        }
    })
}

fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} exceeds the u32 format")))
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
