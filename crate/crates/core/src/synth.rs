//! Scaled dot-product attention and a labeled synthetic attention dataset.
//!
//! The dataset has two classes that differ only on designated signal heads:
//!
//! * class 0, near-diagonal: each token keeps most of its weight on itself
//!   and splits the rest between its neighbours, so mid thresholds leave an
//!   edgeless graph (β0 = m);
//! * class 1, hub: every token sends most of its weight to one hub token,
//!   giving a star (β0 = 1, β1 = 0) below the hub weight.
//!
//! Every other head is plain softmax attention over random token embeddings
//! with fixed random projections, identical in distribution for both classes.
//! Noise is added as a non-negative perturbation of every entry followed by
//! row renormalization, and weights are rounded to `f32` so that in-memory
//! tensors equal what the tensor files hold.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::features::{AttentionTensor, HeadId};
use crate::filtration::AttentionMap;
use crate::manifest::{Manifest, ManifestEntry, Split};
use crate::tensor_file::write_tensor;

/// Query, key and value projections of one head, each `d x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSet {
    query: Array2<f64>,
    key: Array2<f64>,
    value: Array2<f64>,
}

impl ProjectionSet {
    pub fn new(query: Array2<f64>, key: Array2<f64>, value: Array2<f64>) -> Result<Self> {
        let d = query.nrows();
        for (name, m) in [("query", &query), ("key", &key), ("value", &value)] {
            if m.nrows() != d || m.ncols() != d || d == 0 {
                return Err(Error::Config(format!(
                    "{name} projection is {}x{}, expected {d}x{d} with d >= 1",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("{name} projection has non-finite entries")));
            }
        }
        Ok(Self { query, key, value })
    }

    /// Entries drawn from N(0, 1/d).
    pub fn random<R: Rng>(d: usize, rng: &mut R) -> Result<Self> {
        let scale = 1.0 / (d as f64).sqrt();
        let mut draw = || Array2::from_shape_fn((d, d), |_| scale * rng.sample::<f64, _>(StandardNormal));
        let (q, k, v) = (draw(), draw(), draw());
        Self::new(q, k, v)
    }

    pub fn dim(&self) -> usize {
        self.query.nrows()
    }
}

/// Row-wise softmax of a square logit matrix, with the row maximum subtracted first.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Result<AttentionMap> {
    let m = logits.nrows();
    if logits.ncols() != m {
        return Err(Error::Config(format!("logits are {}x{}, expected square", m, logits.ncols())));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("logits contain non-finite values".into()));
    }
    let mut out = Vec::with_capacity(m * m);
    for row in logits.axis_iter(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|v| (v - max).exp()));
        let sum: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|v| *v /= sum);
    }
    AttentionMap::new(m, out)
}

/// `softmax((X Wq)(X Wk)^T / sqrt(d))` and the head output `W_attn (X Wv)`.
pub fn attention(x: ArrayView2<f64>, p: &ProjectionSet) -> Result<(AttentionMap, Array2<f64>)> {
    let d = p.dim();
    if x.ncols() != d || x.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.ncols(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("input embeddings contain non-finite values".into()));
    }
    let q = x.dot(&p.query);
    let k = x.dot(&p.key);
    let v = x.dot(&p.value);
    let logits = q.dot(&k.t()) / (d as f64).sqrt();
    let map = softmax_rows(logits.view())?;
    let m = map.size();
    let w = ArrayView2::from_shape((m, m), map.weights()).expect("square map");
    let out = w.dot(&v);
    Ok((map, out))
}

/// A head that carries class signal, optionally with its own noise level.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SignalHead {
    pub layer: usize,
    pub head: usize,
    #[serde(default)]
    pub noise: Option<f64>,
}

/// Generator configuration, readable from TOML.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub samples_per_class: usize,
    pub seq_len: usize,
    pub layers: usize,
    pub heads: usize,
    /// Embedding width of the background heads.
    pub embed_dim: usize,
    /// Perturbation strength on signal heads: each entry gains `noise * U(0, 2/m)`
    /// before renormalization, so on average a row gains `noise` in mass.
    pub noise: f64,
    /// Weight a class-0 token keeps on itself.
    pub self_weight: f64,
    /// Weight a class-1 token sends to the hub.
    pub hub_weight: f64,
    pub signal_heads: Vec<SignalHead>,
    /// Train, dev and test fractions per class.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            samples_per_class: 400,
            seq_len: 32,
            layers: 2,
            heads: 4,
            embed_dim: 8,
            noise: 0.5,
            self_weight: 0.6,
            hub_weight: 0.7,
            signal_heads: vec![SignalHead {
                layer: 0,
                head: 1,
                noise: None,
            }],
            split: [0.6, 0.2, 0.2],
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(text).map_err(|e| Error::Config(format!("synth spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("synth spec: {m}")));
        if self.seq_len < 2 {
            return fail(format!("seq_len {} must be at least 2", self.seq_len));
        }
        if self.samples_per_class == 0 {
            return fail("samples_per_class must be positive".into());
        }
        if self.layers == 0 || self.heads == 0 || self.embed_dim == 0 {
            return fail("layers, heads and embed_dim must be positive".into());
        }
        for w in [self.self_weight, self.hub_weight] {
            if !(w > 0.0 && w < 1.0) {
                return fail(format!("structure weight {w} must lie in (0, 1)"));
            }
        }
        for s in &self.signal_heads {
            if s.layer >= self.layers || s.head >= self.heads {
                return fail(format!("signal head {}.{} out of range", s.layer, s.head));
            }
            let noise = s.noise.unwrap_or(self.noise);
            if !(noise >= 0.0 && noise.is_finite()) {
                return fail(format!("noise {noise} must be finite and non-negative"));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail(format!("noise {} must be finite and non-negative", self.noise));
        }
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return fail("split fractions must be non-negative and sum to 1".into());
        }
        if self.split[0] <= 0.0 {
            return fail("train fraction must be positive".into());
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        2 * self.samples_per_class
    }

    /// Class of sample `index`; classes alternate.
    pub fn label_of(&self, index: usize) -> u8 {
        (index % 2) as u8
    }

    pub fn sample_id(index: usize) -> String {
        format!("s{index:05}")
    }

    fn signal_noise(&self, h: HeadId) -> Option<f64> {
        self.signal_heads
            .iter()
            .find(|s| s.layer == h.layer && s.head == h.head)
            .map(|s| s.noise.unwrap_or(self.noise))
    }
}

/// Class-0 structure without noise.
pub fn diagonal_map(m: usize, self_weight: f64) -> Result<AttentionMap> {
    let side = (1.0 - self_weight) / 2.0;
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        let mut own = self_weight;
        if i > 0 {
            w[i * m + i - 1] = side;
        } else {
            own += side;
        }
        if i + 1 < m {
            w[i * m + i + 1] = side;
        } else {
            own += side;
        }
        w[i * m + i] = own;
    }
    AttentionMap::new(m, w)
}

/// Class-1 structure without noise: every row sends `hub_weight` to `hub`
/// and spreads the rest evenly over the other tokens.
pub fn hub_map(m: usize, hub: usize, hub_weight: f64) -> Result<AttentionMap> {
    if hub >= m {
        return Err(Error::Config(format!("hub {hub} out of range for {m} tokens")));
    }
    let rest = (1.0 - hub_weight) / (m - 1) as f64;
    let mut w = vec![rest; m * m];
    for i in 0..m {
        w[i * m + hub] = hub_weight;
    }
    AttentionMap::new(m, w)
}

fn perturb<R: Rng>(base: &AttentionMap, noise: f64, rng: &mut R) -> Result<AttentionMap> {
    let m = base.size();
    let span = 2.0 / m as f64;
    let mut w = base.weights().to_vec();
    if noise > 0.0 {
        for v in w.iter_mut() {
            *v += noise * span * rng.random::<f64>();
        }
    }
    for row in w.chunks_mut(m) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    AttentionMap::new(m, round_to_f32(w))
}

fn round_to_f32(w: Vec<f64>) -> Vec<f64> {
    w.into_iter().map(|v| v as f32 as f64).collect()
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fixed background projections for every head.
fn background_projections(spec: &SynthSpec) -> Result<Vec<ProjectionSet>> {
    let mut rng = sample_rng(spec.seed, 0);
    (0..spec.layers * spec.heads)
        .map(|_| ProjectionSet::random(spec.embed_dim, &mut rng))
        .collect()
}

fn build_sample(spec: &SynthSpec, projections: &[ProjectionSet], index: usize) -> Result<AttentionTensor> {
    let label = spec.label_of(index);
    let m = spec.seq_len;
    let mut rng = sample_rng(spec.seed, index as u64 + 1);
    let hub = rng.random_range(0..m);
    let mut maps = Vec::with_capacity(spec.layers * spec.heads);
    for h in HeadId::all(spec.layers, spec.heads) {
        let map = match spec.signal_noise(h) {
            Some(noise) => {
                let base = if label == 0 {
                    diagonal_map(m, spec.self_weight)?
                } else {
                    hub_map(m, hub, spec.hub_weight)?
                };
                perturb(&base, noise, &mut rng)?
            }
            None => {
                let x = Array2::from_shape_fn((m, spec.embed_dim), |_| rng.sample::<f64, _>(StandardNormal));
                let (map, _) = attention(x.view(), &projections[h.layer * spec.heads + h.head])?;
                AttentionMap::with_tolerance(m, round_to_f32(map.weights().to_vec()), 1e-5)?
            }
        };
        maps.push(map);
    }
    AttentionTensor::new(SynthSpec::sample_id(index), spec.layers, spec.heads, maps)
}

/// Split of every sample: a seeded shuffle per class, cut by the configured fractions.
fn assign_splits(spec: &SynthSpec) -> Vec<Split> {
    let n = spec.samples_per_class;
    let n_train = (spec.split[0] * n as f64).round() as usize;
    let n_dev = ((spec.split[1] * n as f64).round() as usize).min(n - n_train.min(n));
    let mut splits = vec![Split::Test; spec.sample_count()];
    let mut rng = sample_rng(spec.seed ^ 0x5EED_5EED, 0);
    for class in 0..2 {
        let mut members: Vec<usize> = (0..spec.sample_count()).filter(|i| i % 2 == class).collect();
        members.shuffle(&mut rng);
        for (rank, idx) in members.into_iter().enumerate() {
            splits[idx] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_dev {
                Split::Dev
            } else {
                Split::Test
            };
        }
    }
    splits
}

/// All samples in memory, with labels and splits. Intended for small specs and tests.
pub fn generate_samples(spec: &SynthSpec) -> Result<Vec<(AttentionTensor, u8, Split)>> {
    spec.validate()?;
    let projections = background_projections(spec)?;
    let splits = assign_splits(spec);
    (0..spec.sample_count())
        .into_par_iter()
        .map(|i| build_sample(spec, &projections, i).map(|t| (t, spec.label_of(i), splits[i])))
        .collect()
}

/// Writes one tensor file per sample under `out_dir/tensors/` and
/// `out_dir/manifest.csv`. Returns the manifest.
pub fn generate_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let tensor_dir = out_dir.join("tensors");
    std::fs::create_dir_all(&tensor_dir).map_err(|e| Error::io(&tensor_dir, e))?;
    let projections = background_projections(spec)?;
    let splits = assign_splits(spec);

    let entries = (0..spec.sample_count())
        .into_par_iter()
        .map(|i| {
            let tensor = build_sample(spec, &projections, i)?;
            let rel = Path::new("tensors").join(format!("{}.atng", tensor.sample_id()));
            write_tensor(&out_dir.join(&rel), &tensor)?;
            Ok(ManifestEntry {
                sample_id: tensor.sample_id().to_string(),
                tensor_path: rel,
                label: spec.label_of(i),
                split: splits[i],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest::new(entries, out_dir)?;
    let signal: Vec<String> = spec
        .signal_heads
        .iter()
        .map(|s| format!("{}.{}", s.layer, s.head))
        .collect();
    let comment = format!(
        "synthetic attention dataset: seed={} seq_len={} layers={} heads={} noise={} signal_heads={}",
        spec.seed,
        spec.seq_len,
        spec.layers,
        spec.heads,
        spec.noise,
        signal.join(",")
    );
    manifest.save(&out_dir.join("manifest.csv"), Some(&comment))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtration::{betti_curve, ThresholdSchedule};
    use crate::graph::BettiPair;
    use ndarray::array;

    #[test]
    fn zero_input_gives_uniform_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ProjectionSet::random(4, &mut rng).unwrap();
        let x = Array2::zeros((5, 4));
        let (map, out) = attention(x.view(), &p).unwrap();
        assert!(map.weights().iter().all(|w| (w - 0.2).abs() < 1e-7));
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_token_logits_match_direct_softmax() {
        let one = array![[1.0]];
        let p = ProjectionSet::new(one.clone(), one.clone(), one).unwrap();
        let c = 1.3f64;
        let x = array![[0.0], [c]];
        let (map, _) = attention(x.view(), &p).unwrap();
        // Row 1 logits are [0, c^2].
        let e = (c * c).exp();
        assert!((map.get(1, 0) - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((map.get(1, 1) - e / (1.0 + e)).abs() < 1e-12);
        assert!((map.get(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let logits = array![[0.3, -2.0, 5.0], [1.0, 1.0, 1.0], [-40.0, 0.0, 40.0]];
        let shifted = &logits + &array![[10.0], [-3.5], [700.0]];
        let a = softmax_rows(logits.view()).unwrap();
        let b = softmax_rows(shifted.view()).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_non_finite_inputs() {
        let one = array![[1.0]];
        let p = ProjectionSet::new(one.clone(), one.clone(), one).unwrap();
        assert!(attention(array![[f64::NAN]].view(), &p).is_err());
        assert!(ProjectionSet::new(array![[f64::INFINITY]], array![[1.0]], array![[1.0]]).is_err());
        assert!(ProjectionSet::new(array![[1.0, 0.0]], array![[1.0]], array![[1.0]]).is_err());
        assert!(attention(array![[1.0, 2.0]].view(), &p).is_err());
    }

    #[test]
    fn pure_hub_is_a_star() {
        let m = 32;
        let map = hub_map(m, 5, 0.7).unwrap();
        let s = ThresholdSchedule::new(vec![0.05, 0.1, 0.25, 0.5]).unwrap();
        let c = betti_curve(&map, &s);
        assert!(c.points().iter().all(|p| *p == BettiPair::new(1, 0)));
    }

    #[test]
    fn pure_diagonal_is_edgeless_above_neighbour_weight() {
        let m = 16;
        let map = diagonal_map(m, 0.6).unwrap();
        let s = ThresholdSchedule::new(vec![0.25, 0.5, 0.9]).unwrap();
        let c = betti_curve(&map, &s);
        assert!(c.points().iter().all(|p| *p == BettiPair::new(m, 0)));
        // Below the neighbour weight the path graph appears.
        let low = ThresholdSchedule::new(vec![0.1]).unwrap();
        assert_eq!(betti_curve(&map, &low).points()[0], BettiPair::new(1, 0));
    }

    #[test]
    fn noisy_maps_remain_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = hub_map(8, 0, 0.7).unwrap();
        for noise in [0.0, 0.5, 3.0] {
            let map = perturb(&base, noise, &mut rng).unwrap();
            assert!(map.first_bad_row(1e-5).is_none());
        }
    }

    fn small_spec(seed: u64) -> SynthSpec {
        SynthSpec {
            samples_per_class: 10,
            seq_len: 8,
            layers: 1,
            heads: 2,
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let a = generate_samples(&small_spec(4)).unwrap();
        let b = generate_samples(&small_spec(4)).unwrap();
        assert_eq!(a, b);
        let c = generate_samples(&small_spec(5)).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 20);
        assert_eq!(a.iter().filter(|s| s.1 == 1).count(), 10);
    }

    #[test]
    fn splits_are_stratified() {
        let spec = small_spec(2);
        let splits = assign_splits(&spec);
        for class in 0..2 {
            let count = |s: Split| (0..20).filter(|i| i % 2 == class && splits[*i] == s).count();
            assert_eq!((count(Split::Train), count(Split::Dev), count(Split::Test)), (6, 2, 2));
        }
    }

    #[test]
    fn spec_validation_and_toml() {
        let spec = SynthSpec::from_toml(
            "samples_per_class = 5\nseq_len = 6\nsignal_heads = [{ layer = 1, head = 3, noise = 0.2 }]\n",
        )
        .unwrap();
        assert_eq!(spec.signal_heads[0].noise, Some(0.2));
        assert_eq!(spec.layers, 2);
        assert!(SynthSpec::from_toml("seq_len = 1").is_err());
        assert!(SynthSpec::from_toml("unknown = 3").is_err());
        assert!(SynthSpec::from_toml("split = [0.5, 0.5, 0.5]").is_err());
        assert!(SynthSpec::from_toml("signal_heads = [{ layer = 9, head = 0 }]").is_err());
    }
}
