//! On-disk formats.
//!
//! # Checkpoint (text)
//!
//! ```text
//! qbelief-checkpoint 1
//! kind gru
//! input 8
//! hidden 32
//! layers 2
//! outputs 4
//! episode 200
//! params 13124
//! <one parameter per line>
//! ```
//!
//! Parameters follow the flat layout of the network: per layer the input
//! weights (row per input), the recurrent weights, the biases and the initial
//! state, then the head weights (row per hidden unit) and head biases. Values
//! are printed in the shortest form that parses back to the same `f64`.
//!
//! # Sample set (binary, little-endian)
//!
//! ```text
//! magic "QBSS"  version u32 = 1
//! checkpoint u64  records u64  hidden_dim u32  tags u32
//! per tag:    tag u8  kind u8 (0 dense, 1 particles)  dim u32  particles u32
//! per record: rollout u32  t u32  hidden f64 x hidden_dim
//!             per tag: dense   f64 x dim
//!                      or set  features f64 x (particles * dim), weights f64 x particles
//! ```
//!
//! Every record has the same width, given by the header.
//!
//! # Metrics (CSV)
//!
//! Header `env,cell,seed,episode,metric,tag,epsilon,value`; `metric` is
//! `return` or `mi`, `tag` is `main`, `relevant` or `irrelevant`, `epsilon`
//! is empty outside the generalization sweep and failed measurements hold
//! `NaN`.

use std::io::{self, BufRead, Read, Write};

use qbelief_core::drqn::Checkpoint;
use qbelief_core::mine::ParticleBlock;
use qbelief_core::nn::{CellKind, RnnSpec};
use qbelief_core::protocol::{BeliefRepr, Metric, MetricRecord, SampleRecord, SampleSet, Tag};
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_MAGIC: &str = "qbelief-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const SAMPLES_MAGIC: &[u8; 4] = b"QBSS";
pub const SAMPLES_VERSION: u32 = 1;
pub const METRICS_HEADER: [&str; 8] = ["env", "cell", "seed", "episode", "metric", "tag", "epsilon", "value"];

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Checkpoint { line: usize, reason: String },
    #[error("sample set: {0}")]
    Samples(String),
    #[error("metrics csv row {row}: {reason}")]
    Metrics { row: usize, reason: String },
}

fn ckpt_err(line: usize, reason: impl Into<String>) -> FormatError {
    FormatError::Checkpoint {
        line,
        reason: reason.into(),
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, spec: &RnnSpec, checkpoint: &Checkpoint) -> io::Result<()> {
    writeln!(w, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
    writeln!(w, "kind {}", spec.kind)?;
    writeln!(w, "input {}", spec.input)?;
    writeln!(w, "hidden {}", spec.hidden)?;
    writeln!(w, "layers {}", spec.layers)?;
    writeln!(w, "outputs {}", spec.outputs)?;
    writeln!(w, "episode {}", checkpoint.episode)?;
    writeln!(w, "params {}", checkpoint.params.len())?;
    for p in &checkpoint.params {
        writeln!(w, "{p:?}")?;
    }
    w.flush()
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<(RnnSpec, Checkpoint), FormatError> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |key: &str| -> Result<(usize, String), FormatError> {
        let (n, line) = lines.next().ok_or_else(|| ckpt_err(0, format!("missing `{key}`")))?;
        let line = line?;
        let rest = line
            .strip_prefix(key)
            .and_then(|s| s.strip_prefix(' '))
            .ok_or_else(|| ckpt_err(n, format!("expected `{key}`")))?;
        Ok((n, rest.to_string()))
    };
    let number = |(n, s): (usize, String)| s.trim().parse::<usize>().map_err(|e| ckpt_err(n, e.to_string()));
    let (n, version) = next(CHECKPOINT_MAGIC)?;
    if version.trim() != CHECKPOINT_VERSION.to_string() {
        return Err(ckpt_err(n, format!("unsupported version {version}")));
    }
    let (n, kind) = next("kind")?;
    let kind: CellKind = kind
        .parse()
        .map_err(|e: qbelief_core::nn::cell::UnknownCell| ckpt_err(n, e.to_string()))?;
    let spec = RnnSpec {
        kind,
        input: number(next("input")?)?,
        hidden: number(next("hidden")?)?,
        layers: number(next("layers")?)?,
        outputs: number(next("outputs")?)?,
    };
    let episode = number(next("episode")?)?;
    let count = number(next("params")?)?;
    let mut params = Vec::with_capacity(count);
    for (n, line) in lines.by_ref().take(count) {
        let line = line?;
        params.push(line.trim().parse::<f64>().map_err(|e| ckpt_err(n, e.to_string()))?);
    }
    if params.len() != count {
        return Err(ckpt_err(
            0,
            format!("expected {count} parameters, found {}", params.len()),
        ));
    }
    if let Some((n, line)) = lines.next() {
        if !line?.trim().is_empty() {
            return Err(ckpt_err(n, "trailing data"));
        }
    }
    Ok((spec, Checkpoint { episode, params }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Layout {
    Dense { dim: usize },
    Set { dim: usize, particles: usize },
}

fn tag_code(t: Tag) -> u8 {
    match t {
        Tag::Main => 0,
        Tag::Relevant => 1,
        Tag::Irrelevant => 2,
    }
}

fn tag_from_code(c: u8) -> Option<Tag> {
    [Tag::Main, Tag::Relevant, Tag::Irrelevant].get(c as usize).copied()
}

fn layouts(set: &SampleSet) -> Result<Vec<Layout>, FormatError> {
    let first = set
        .records
        .first()
        .ok_or_else(|| FormatError::Samples("no records".into()))?;
    let layouts: Vec<Layout> = first
        .beliefs
        .iter()
        .map(|b| match b {
            BeliefRepr::Dense(v) => Layout::Dense { dim: v.len() },
            BeliefRepr::Set(s) => Layout::Set {
                dim: s.features.len() / s.weights.len().max(1),
                particles: s.weights.len(),
            },
        })
        .collect();
    for (i, r) in set.records.iter().enumerate() {
        let fits = r.hidden.len() == set.hidden_dim
            && r.beliefs.len() == layouts.len()
            && r.beliefs.iter().zip(&layouts).all(|(b, l)| match (b, *l) {
                (BeliefRepr::Dense(v), Layout::Dense { dim }) => v.len() == dim,
                (BeliefRepr::Set(s), Layout::Set { dim, particles }) => {
                    s.weights.len() == particles && s.features.len() == particles * dim
                }
                _ => false,
            });
        if !fits {
            return Err(FormatError::Samples(format!(
                "record {i} does not match the shape of record 0"
            )));
        }
    }
    Ok(layouts)
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<(), FormatError> {
    let v = u32::try_from(v).map_err(|_| FormatError::Samples(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_samples<W: Write>(mut w: W, set: &SampleSet) -> Result<(), FormatError> {
    let layouts = layouts(set)?;
    if layouts.len() != set.tags.len() {
        return Err(FormatError::Samples(
            "tag count does not match beliefs per record".into(),
        ));
    }
    w.write_all(SAMPLES_MAGIC)?;
    w.write_all(&SAMPLES_VERSION.to_le_bytes())?;
    w.write_all(&set.checkpoint.to_le_bytes())?;
    w.write_all(&(set.records.len() as u64).to_le_bytes())?;
    put_u32(&mut w, set.hidden_dim)?;
    put_u32(&mut w, set.tags.len())?;
    for (tag, layout) in set.tags.iter().zip(&layouts) {
        w.write_all(&[tag_code(*tag)])?;
        match *layout {
            Layout::Dense { dim } => {
                w.write_all(&[0])?;
                put_u32(&mut w, dim)?;
                put_u32(&mut w, 0)?;
            }
            Layout::Set { dim, particles } => {
                w.write_all(&[1])?;
                put_u32(&mut w, dim)?;
                put_u32(&mut w, particles)?;
            }
        }
    }
    for r in &set.records {
        w.write_all(&r.rollout.to_le_bytes())?;
        w.write_all(&r.t.to_le_bytes())?;
        put_f64s(&mut w, &r.hidden)?;
        for b in &r.beliefs {
            match b {
                BeliefRepr::Dense(v) => put_f64s(&mut w, v)?,
                BeliefRepr::Set(s) => {
                    put_f64s(&mut w, &s.features)?;
                    put_f64s(&mut w, &s.weights)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<R> {
    r: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        let mut b = [0u8; N];
        self.r.read_exact(&mut b).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => FormatError::Samples("truncated input".into()),
            _ => FormatError::Io(e),
        })?;
        Ok(b)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        (0..n).map(|_| Ok(f64::from_le_bytes(self.bytes()?))).collect()
    }
}

pub fn read_samples<R: Read>(r: R) -> Result<SampleSet, FormatError> {
    let mut c = Cursor { r };
    if &c.bytes::<4>()? != SAMPLES_MAGIC {
        return Err(FormatError::Samples("bad magic".into()));
    }
    let version = c.u32()?;
    if version != SAMPLES_VERSION {
        return Err(FormatError::Samples(format!("unsupported version {version}")));
    }
    let checkpoint = c.u64()?;
    let count = c.u64()? as usize;
    let hidden_dim = c.u32()? as usize;
    let ntags = c.u32()? as usize;
    let mut tags = Vec::with_capacity(ntags);
    let mut layouts = Vec::with_capacity(ntags);
    for _ in 0..ntags {
        let code = c.u8()?;
        tags.push(tag_from_code(code).ok_or_else(|| FormatError::Samples(format!("unknown tag {code}")))?);
        let kind = c.u8()?;
        let dim = c.u32()? as usize;
        let particles = c.u32()? as usize;
        layouts.push(match kind {
            0 => Layout::Dense { dim },
            1 => Layout::Set { dim, particles },
            k => return Err(FormatError::Samples(format!("unknown belief kind {k}"))),
        });
    }
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let rollout = c.u32()?;
        let t = c.u32()?;
        let hidden = c.f64s(hidden_dim)?;
        let beliefs = layouts
            .iter()
            .map(|l| match *l {
                Layout::Dense { dim } => Ok(BeliefRepr::Dense(c.f64s(dim)?)),
                Layout::Set { dim, particles } => Ok(BeliefRepr::Set(ParticleBlock {
                    features: c.f64s(dim * particles)?,
                    weights: c.f64s(particles)?,
                })),
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        records.push(SampleRecord {
            rollout,
            t,
            hidden,
            beliefs,
        });
    }
    if c.r.read(&mut [0u8; 1])? != 0 {
        return Err(FormatError::Samples("trailing data".into()));
    }
    Ok(SampleSet {
        checkpoint,
        tags,
        hidden_dim,
        records,
    })
}

pub fn write_metrics<W: Write>(w: W, records: &[MetricRecord]) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| FormatError::Io(e.into());
    out.write_record(METRICS_HEADER).map_err(csv_err)?;
    for r in records {
        out.write_record([
            r.env.clone(),
            r.cell.to_string(),
            r.seed.to_string(),
            r.episode.to_string(),
            r.metric.name().to_string(),
            r.tag.name().to_string(),
            r.epsilon.map(|e| format!("{e:?}")).unwrap_or_default(),
            format!("{:?}", r.value),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricRecord>, FormatError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let bad = |row: usize, reason: String| FormatError::Metrics { row, reason };
    let header = reader.headers().map_err(|e| bad(0, e.to_string()))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(bad(0, format!("expected header `{}`", METRICS_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| bad(row, e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| -> Result<u64, FormatError> {
            field(k)
                .parse()
                .map_err(|_| bad(row, format!("`{}` is not an integer", METRICS_HEADER[k])))
        };
        let real = |s: &str, k: usize| -> Result<f64, FormatError> {
            s.parse()
                .map_err(|_| bad(row, format!("`{}` is not a number", METRICS_HEADER[k])))
        };
        let metric = Metric::parse(field(4)).ok_or_else(|| bad(row, format!("unknown metric `{}`", field(4))))?;
        let tag = Tag::parse(field(5)).ok_or_else(|| bad(row, format!("unknown tag `{}`", field(5))))?;
        let epsilon = match field(6) {
            "" => None,
            s => Some(real(s, 6)?),
        };
        out.push(MetricRecord {
            env: field(0).to_string(),
            cell: field(1)
                .parse()
                .map_err(|_| bad(row, format!("unknown cell `{}`", field(1))))?,
            seed: num(2)?,
            episode: num(3)?,
            metric,
            tag,
            epsilon,
            value: real(field(7), 7)?,
        });
    }
    Ok(out)
}

/// Sidecar written next to the outputs of one training job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobMetadata {
    pub env: String,
    pub cell: CellKind,
    pub seed: u64,
    /// Hash of the configuration that determines this job's outputs.
    pub config_hash: String,
    /// The resolved configuration, as TOML.
    pub config: String,
    /// Episodes of the stored checkpoints.
    pub checkpoints: Vec<usize>,
}

pub fn write_metadata<W: Write>(mut w: W, meta: &JobMetadata) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, meta)?;
    writeln!(w)?;
    w.flush()
}

pub fn read_metadata<R: Read>(r: R) -> io::Result<JobMetadata> {
    Ok(serde_json::from_reader(r)?)
}
