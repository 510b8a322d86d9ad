//! Per-head relevance: a classifier per head, its Matthews score, and a ranking.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::classifier::{train, TrainParams};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, HeadId};
use crate::metrics::{matthews, ConfusionCounts};

/// Layer x head matrix of Matthews scores. Heads whose classifier could not
/// be built hold `NaN`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadScoreGrid {
    scores: Array2<f64>,
    pub split_tag: String,
}

impl HeadScoreGrid {
    pub fn new(scores: Array2<f64>, split_tag: impl Into<String>) -> Result<Self> {
        if scores.nrows() == 0 || scores.ncols() == 0 {
            return Err(Error::Config("score grid must have at least one layer and head".into()));
        }
        if let Some(v) = scores.iter().find(|v| !v.is_nan() && !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("score {v} outside [-1, 1]")));
        }
        Ok(Self {
            scores,
            split_tag: split_tag.into(),
        })
    }

    pub fn layers(&self) -> usize {
        self.scores.nrows()
    }

    pub fn heads_per_layer(&self) -> usize {
        self.scores.ncols()
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn get(&self, id: HeadId) -> f64 {
        self.scores[[id.layer, id.head]]
    }

    /// CSV with a `layer` column followed by one column per head index.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# split: {}", self.split_tag)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["layer".to_string()];
        header.extend((0..self.heads_per_layer()).map(|h| h.to_string()));
        w.write_record(&header)?;
        for (l, row) in self.scores.rows().into_iter().enumerate() {
            let mut rec = vec![l.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()
    }

    pub fn read_csv<R: Read>(mut input: R, path: &Path) -> Result<Self> {
        let mut text = String::new();
        input
            .read_to_string(&mut text)
            .map_err(|e| Error::io(path, e))?;
        let split_tag = text
            .lines()
            .find_map(|l| l.strip_prefix("# split: "))
            .unwrap_or("")
            .to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| Error::format(path, e.to_string()))?
            .clone();
        let width = header.len().saturating_sub(1);
        if header.get(0) != Some("layer")
            || header.iter().skip(1).enumerate().any(|(i, h)| h != i.to_string())
        {
            return Err(Error::format(path, "grid header must be layer,0,1,..."));
        }
        let mut flat = Vec::new();
        let mut layers = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
            if rec.get(0) != Some(layers.to_string().as_str()) || rec.len() != width + 1 {
                return Err(Error::format(path, format!("malformed grid row for layer {layers}")));
            }
            for v in rec.iter().skip(1) {
                flat.push(
                    v.parse::<f64>()
                        .map_err(|_| Error::format(path, format!("bad score {v:?}")))?,
                );
            }
            layers += 1;
        }
        let scores = Array2::from_shape_vec((layers, width), flat)
            .map_err(|e| Error::format(path, e.to_string()))?;
        Self::new(scores, split_tag).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, path)
    }
}

/// Grid plus one message per head that could not be scored.
#[derive(Clone, Debug)]
pub struct HeadScores {
    pub grid: HeadScoreGrid,
    pub warnings: Vec<String>,
}

/// Trains one classifier per head on `train` and scores it on `eval`.
///
/// Both matrices must share head list and schedule. The grid covers
/// `layers x heads_per_layer`; heads without feature columns, or whose
/// training fails, are recorded as `NaN` with a warning.
pub fn score_heads(
    train_set: &FeatureMatrix,
    eval_set: &FeatureMatrix,
    layers: usize,
    heads_per_layer: usize,
    params: &TrainParams,
    split_tag: &str,
) -> Result<HeadScores> {
    if train_set.heads() != eval_set.heads() || train_set.schedule() != eval_set.schedule() {
        return Err(Error::Config(
            "train and eval feature matrices have different head lists or schedules".into(),
        ));
    }
    if let Some(h) = train_set
        .heads()
        .iter()
        .find(|h| h.layer >= layers || h.head >= heads_per_layer)
    {
        return Err(Error::HeadOutOfRange {
            layer: h.layer,
            head: h.head,
            layers,
            heads: heads_per_layer,
        });
    }

    let all = HeadId::all(layers, heads_per_layer);
    let results: Vec<std::result::Result<f64, String>> = all
        .par_iter()
        .map(|&h| {
            if !train_set.heads().contains(&h) {
                return Err(format!("head {h}: no feature columns"));
            }
            score_one(train_set, eval_set, h, params).map_err(|e| format!("head {h}: {e}"))
        })
        .collect();

    let mut warnings = Vec::new();
    let flat: Vec<f64> = results
        .into_iter()
        .map(|r| r.unwrap_or_else(|w| {
            warnings.push(w);
            f64::NAN
        }))
        .collect();
    let scores = Array2::from_shape_vec((layers, heads_per_layer), flat)
        .expect("one score per head");
    Ok(HeadScores {
        grid: HeadScoreGrid::new(scores, split_tag)?,
        warnings,
    })
}

fn score_one(
    train_set: &FeatureMatrix,
    eval_set: &FeatureMatrix,
    head: HeadId,
    params: &TrainParams,
) -> Result<f64> {
    let tr = train_set.select_heads(&[head])?;
    let ev = eval_set.select_heads(&[head])?;
    let model = train(tr.values().view(), tr.labels(), params)?;
    let predicted = model.predict(ev.values().view())?;
    let counts = ConfusionCounts::from_labels(ev.labels(), &predicted)?;
    Ok(matthews(&counts))
}

/// All heads by descending score; ties and `NaN`s fall back to (layer, head) order,
/// with `NaN` entries last.
pub fn rank_heads(grid: &HeadScoreGrid) -> Vec<HeadId> {
    let mut heads = HeadId::all(grid.layers(), grid.heads_per_layer());
    heads.sort_by(|a, b| {
        let (sa, sb) = (grid.get(*a), grid.get(*b));
        match (sa.is_nan(), sb.is_nan()) {
            (false, false) => sb.total_cmp(&sa),
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            (true, true) => std::cmp::Ordering::Equal,
        }
        .then_with(|| a.cmp(b))
    });
    heads
}

pub fn top_k(grid: &HeadScoreGrid, k: usize) -> Vec<HeadId> {
    let mut ranked = rank_heads(grid);
    ranked.truncate(k);
    ranked
}
