//! Feature assembly: Betti curves of the selected heads, concatenated.
//!
//! Layout of a feature vector is head-major in the order the heads were
//! given, thresholds ascending within a head, and β0 before β1 within a
//! threshold. Exported matrices name each column
//! `L{layer}H{head}_t{threshold}_{b0|b1}` so the layout can be recovered
//! from the header alone.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filtration::{betti_curve, AttentionMap, ThresholdSchedule};

/// Position of an attention head, zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HeadId {
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub const fn new(layer: usize, head: usize) -> Self {
        Self { layer, head }
    }

    /// All heads of an `layers x heads` model in (layer, head) order.
    pub fn all(layers: usize, heads: usize) -> Vec<HeadId> {
        (0..layers)
            .flat_map(|l| (0..heads).map(move |h| HeadId::new(l, h)))
            .collect()
    }
}

impl fmt::Display for HeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.layer, self.head)
    }
}

impl FromStr for HeadId {
    type Err = Error;

    /// Parses `layer.head`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse head {s:?}, expected layer.head"));
        let (l, h) = s.trim().split_once('.').ok_or_else(bad)?;
        Ok(HeadId::new(l.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?))
    }
}

/// Head selection as given on the command line: `all` or a list of `layer.head`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HeadSelection {
    All,
    List(Vec<HeadId>),
}

impl HeadSelection {
    pub fn resolve(&self, layers: usize, heads: usize) -> Vec<HeadId> {
        match self {
            HeadSelection::All => HeadId::all(layers, heads),
            HeadSelection::List(list) => list.clone(),
        }
    }
}

impl FromStr for HeadSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            return Ok(HeadSelection::All);
        }
        let list = s.split(',').map(str::parse).collect::<Result<Vec<HeadId>>>()?;
        if list.is_empty() {
            return Err(Error::Config("empty head list".into()));
        }
        Ok(HeadSelection::List(list))
    }
}

/// Attention maps of one sample for every (layer, head).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTensor {
    sample_id: String,
    layers: usize,
    heads: usize,
    seq_len: usize,
    maps: Vec<AttentionMap>,
}

impl AttentionTensor {
    /// `maps` is ordered layer-major: index `layer * heads + head`.
    pub fn new(
        sample_id: impl Into<String>,
        layers: usize,
        heads: usize,
        maps: Vec<AttentionMap>,
    ) -> Result<Self> {
        if layers == 0 || heads == 0 {
            return Err(Error::InvalidTensor("layer and head counts must be positive".into()));
        }
        if maps.len() != layers * heads {
            return Err(Error::InvalidTensor(format!(
                "expected {} maps for {layers} layers x {heads} heads, got {}",
                layers * heads,
                maps.len()
            )));
        }
        let seq_len = maps[0].size();
        if let Some(pos) = maps.iter().position(|m| m.size() != seq_len) {
            return Err(Error::InvalidTensor(format!(
                "map {pos} has size {}, expected {seq_len}",
                maps[pos].size()
            )));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            layers,
            heads,
            seq_len,
            maps,
        })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn maps(&self) -> &[AttentionMap] {
        &self.maps
    }

    pub fn map(&self, id: HeadId) -> Result<&AttentionMap> {
        if id.layer >= self.layers || id.head >= self.heads {
            return Err(Error::HeadOutOfRange {
                layer: id.layer,
                head: id.head,
                layers: self.layers,
                heads: self.heads,
            });
        }
        Ok(&self.maps[id.layer * self.heads + id.head])
    }
}

/// Flattened Betti curves of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

/// Betti curves of `heads`, laid out head-major.
pub fn features_for_sample(
    tensor: &AttentionTensor,
    heads: &[HeadId],
    schedule: &ThresholdSchedule,
) -> Result<FeatureVector> {
    if heads.is_empty() {
        return Err(Error::Config("head list must not be empty".into()));
    }
    let mut values = Vec::with_capacity(heads.len() * schedule.len() * 2);
    for &h in heads {
        let curve = betti_curve(tensor.map(h)?, schedule);
        for p in curve.points() {
            values.push(p.beta0 as f64);
            values.push(p.beta1 as f64);
        }
    }
    Ok(FeatureVector { values })
}

/// Identifier and binary label of one sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleLabel {
    pub sample_id: String,
    pub label: u8,
}

/// Labeled feature rows sharing one head list and schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    heads: Vec<HeadId>,
    schedule: ThresholdSchedule,
    sample_ids: Vec<String>,
    labels: Vec<u8>,
    values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(
        heads: Vec<HeadId>,
        schedule: ThresholdSchedule,
        rows: Vec<(SampleLabel, FeatureVector)>,
    ) -> Result<Self> {
        let width = heads.len() * schedule.len() * 2;
        let mut sample_ids = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        let mut flat = Vec::with_capacity(rows.len() * width);
        for (meta, fv) in rows {
            if fv.values.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    found: fv.values.len(),
                });
            }
            if meta.label > 1 {
                return Err(Error::InvalidLabel(meta.label.to_string()));
            }
            sample_ids.push(meta.sample_id);
            labels.push(meta.label);
            flat.extend(fv.values);
        }
        let values = Array2::from_shape_vec((labels.len(), width), flat)
            .expect("row widths checked above");
        Ok(Self {
            heads,
            schedule,
            sample_ids,
            labels,
            values,
        })
    }

    pub fn heads(&self) -> &[HeadId] {
        &self.heads
    }

    pub fn schedule(&self) -> &ThresholdSchedule {
        &self.schedule
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    /// Columns per head (two per threshold).
    pub fn head_width(&self) -> usize {
        self.schedule.len() * 2
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_cols());
        for h in &self.heads {
            for t in self.schedule.values() {
                for b in ["b0", "b1"] {
                    names.push(format!("L{}H{}_t{}_{}", h.layer, h.head, t, b));
                }
            }
        }
        names
    }

    /// Keeps only the columns of `heads`, in the given order.
    pub fn select_heads(&self, heads: &[HeadId]) -> Result<FeatureMatrix> {
        let w = self.head_width();
        let mut cols = Vec::with_capacity(heads.len() * w);
        for h in heads {
            let pos = self.heads.iter().position(|x| x == h).ok_or_else(|| {
                Error::Config(format!("head {h} is not present in the feature matrix"))
            })?;
            cols.extend(pos * w..(pos + 1) * w);
        }
        Ok(FeatureMatrix {
            heads: heads.to_vec(),
            schedule: self.schedule.clone(),
            sample_ids: self.sample_ids.clone(),
            labels: self.labels.clone(),
            values: self.values.select(Axis(1), &cols),
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# layout: head-major, thresholds ascending, b0 then b1 per threshold"
        )?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sample_id".to_string(), "label".to_string()];
        header.extend(self.column_names());
        w.write_record(&header)?;
        for (i, row) in self.values.rows().into_iter().enumerate() {
            let mut rec = Vec::with_capacity(row.len() + 2);
            rec.push(self.sample_ids[i].clone());
            rec.push(self.labels[i].to_string());
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file).map_err(|e| Error::io(path, e))
    }

    /// Parses a matrix written by [`FeatureMatrix::write_csv`]. The head list
    /// and schedule are recovered from the column names.
    pub fn read_csv<R: Read>(input: R, path: &Path) -> Result<FeatureMatrix> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let header = rdr
            .headers()
            .map_err(|e| Error::format(path, e.to_string()))?
            .clone();
        if header.len() < 2 || &header[0] != "sample_id" || &header[1] != "label" {
            return Err(Error::format(path, "header must start with sample_id,label"));
        }
        let (heads, schedule) = parse_layout(header.iter().skip(2), path)?;

        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
            if rec.len() != header.len() {
                return Err(Error::format(
                    path,
                    format!("row {} has {} fields, header has {}", line + 1, rec.len(), header.len()),
                ));
            }
            let label = parse_label(&rec[1]).map_err(|e| Error::format(path, e.to_string()))?;
            let values = rec
                .iter()
                .skip(2)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::format(path, format!("row {}: bad value {v:?}", line + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push((
                SampleLabel {
                    sample_id: rec[0].to_string(),
                    label,
                },
                FeatureVector { values },
            ));
        }
        FeatureMatrix::new(heads, schedule, rows)
    }

    pub fn load(path: &Path) -> Result<FeatureMatrix> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, path)
    }
}

pub(crate) fn parse_label(s: &str) -> Result<u8> {
    match s.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::InvalidLabel(other.to_string())),
    }
}

fn parse_column(name: &str) -> Option<(HeadId, f64, usize)> {
    let rest = name.strip_prefix('L')?;
    let (layer, rest) = rest.split_once('H')?;
    let (head, rest) = rest.split_once("_t")?;
    let (t, b) = rest.rsplit_once('_')?;
    let beta = match b {
        "b0" => 0,
        "b1" => 1,
        _ => return None,
    };
    Some((HeadId::new(layer.parse().ok()?, head.parse().ok()?), t.parse().ok()?, beta))
}

fn parse_layout<'a>(
    names: impl Iterator<Item = &'a str>,
    path: &Path,
) -> Result<(Vec<HeadId>, ThresholdSchedule)> {
    let cols = names
        .map(|n| parse_column(n).ok_or_else(|| Error::format(path, format!("bad column name {n:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if cols.is_empty() {
        return Err(Error::format(path, "no feature columns"));
    }
    let first = cols[0].0;
    let thresholds: Vec<f64> = cols
        .iter()
        .take_while(|c| c.0 == first)
        .filter(|c| c.2 == 0)
        .map(|c| c.1)
        .collect();
    let schedule = ThresholdSchedule::new(thresholds).map_err(|e| Error::format(path, e.to_string()))?;
    let width = schedule.len() * 2;
    if cols.len() % width != 0 {
        return Err(Error::format(path, "column count is not a multiple of the per-head width"));
    }
    let mut heads = Vec::with_capacity(cols.len() / width);
    for chunk in cols.chunks(width) {
        let head = chunk[0].0;
        for (k, c) in chunk.iter().enumerate() {
            if c.0 != head || c.1 != schedule.values()[k / 2] || c.2 != k % 2 {
                return Err(Error::format(path, "columns do not follow the head-major layout"));
            }
        }
        if heads.contains(&head) {
            return Err(Error::format(path, format!("head {head} appears twice")));
        }
        heads.push(head);
    }
    Ok((heads, schedule))
}

/// Feature rows for in-memory samples, in `labels` order.
///
/// `samples[i]` must carry the id of `labels[i]`. Extraction runs in
/// parallel; assembly order does not depend on scheduling.
pub fn features_for_dataset(
    samples: &[AttentionTensor],
    labels: &[SampleLabel],
    heads: &[HeadId],
    schedule: &ThresholdSchedule,
) -> Result<FeatureMatrix> {
    if samples.len() != labels.len() {
        return Err(Error::LabelMismatch(format!(
            "{} tensors but {} labels",
            samples.len(),
            labels.len()
        )));
    }
    if let Some((t, l)) = samples
        .iter()
        .zip(labels)
        .find(|(t, l)| t.sample_id() != l.sample_id)
    {
        return Err(Error::LabelMismatch(format!(
            "tensor {:?} paired with label for {:?}",
            t.sample_id(),
            l.sample_id
        )));
    }
    if heads.is_empty() {
        return Err(Error::Config("head list must not be empty".into()));
    }
    let rows = samples
        .par_iter()
        .zip(labels.par_iter())
        .map(|(t, l)| features_for_sample(t, heads, schedule).map(|fv| (l.clone(), fv)))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::new(heads.to_vec(), schedule.clone(), rows)
}
