//! L2-regularized logistic regression on standardized features.
//!
//! The objective is the mean logistic loss plus `l2_coeff * ||w||²`, with
//! the bias left unpenalized. Features are z-scored with training-set
//! statistics; a constant column keeps std 1, so its weight only feels the
//! penalty and goes to zero. Minimization is deterministic: limited-memory
//! BFGS directions with a backtracking Armijo line search, stopping when the
//! gradient norm drops to [`GRADIENT_TOLERANCE`] or `max_iters` is reached.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const GRADIENT_TOLERANCE: f64 = 1e-6;

const MODEL_MAGIC: &str = "attn-topo-logreg";
const MODEL_VERSION: u32 = 1;
const HISTORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainParams {
    pub l2_coeff: f64,
    pub max_iters: usize,
    /// Seeds the initial weights.
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            l2_coeff: 1.0,
            max_iters: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    weights: Array1<f64>,
    bias: f64,
    feature_means: Array1<f64>,
    feature_stds: Array1<f64>,
    l2_coeff: f64,
    max_iters: usize,
}

/// How the optimizer stopped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub final_loss: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Regularized logistic loss over an already standardized design matrix.
///
/// Parameters are packed as `[w_0, .., w_{d-1}, bias]`.
pub struct LogisticObjective<'a> {
    z: ArrayView2<'a, f64>,
    y: Array1<f64>,
    l2_coeff: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(z: ArrayView2<'a, f64>, labels: &[u8], l2_coeff: f64) -> Result<Self> {
        if z.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: z.nrows(),
                found: labels.len(),
            });
        }
        let y = labels
            .iter()
            .map(|&l| match l {
                0 | 1 => Ok(l as f64),
                other => Err(Error::InvalidLabel(other.to_string())),
            })
            .collect::<Result<Array1<f64>>>()?;
        Ok(Self { z, y, l2_coeff })
    }

    pub fn dim(&self) -> usize {
        self.z.ncols() + 1
    }

    fn margins(&self, params: ArrayView1<f64>) -> Array1<f64> {
        let d = self.z.ncols();
        self.z.dot(&params.slice(ndarray::s![..d])) + params[d]
    }

    pub fn value(&self, params: ArrayView1<f64>) -> f64 {
        let d = self.z.ncols();
        let n = self.y.len() as f64;
        let data: f64 = self
            .margins(params)
            .iter()
            .zip(&self.y)
            .map(|(&m, &y)| softplus(m) - y * m)
            .sum();
        let w = params.slice(ndarray::s![..d]);
        data / n + self.l2_coeff * w.dot(&w)
    }

    pub fn value_and_gradient(&self, params: ArrayView1<f64>) -> (f64, Array1<f64>) {
        let d = self.z.ncols();
        let n = self.y.len() as f64;
        let margins = self.margins(params);
        let mut data = 0.0;
        let mut residual = Array1::zeros(margins.len());
        for (k, (&m, &y)) in margins.iter().zip(&self.y).enumerate() {
            data += softplus(m) - y * m;
            residual[k] = sigmoid(m) - y;
        }
        let w = params.slice(ndarray::s![..d]);
        let mut grad = Array1::zeros(d + 1);
        let gw = self.z.t().dot(&residual) / n + &w * (2.0 * self.l2_coeff);
        grad.slice_mut(ndarray::s![..d]).assign(&gw);
        grad[d] = residual.sum() / n;
        (data / n + self.l2_coeff * w.dot(&w), grad)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn column_stats(x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let means = x.sum_axis(Axis(0)) / n;
    let mut stds = Array1::zeros(x.ncols());
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let var = col.iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        stds[j] = if sd > 1e-12 * means[j].abs().max(1.0) { sd } else { 1.0 };
    }
    (means, stds)
}

fn standardize(x: ArrayView2<f64>, means: &Array1<f64>, stds: &Array1<f64>) -> Array2<f64> {
    (&x - means) / stds
}

/// Fits a model. See [`train_with_report`] for optimizer diagnostics.
pub fn train(x: ArrayView2<f64>, labels: &[u8], params: &TrainParams) -> Result<LinearModel> {
    train_with_report(x, labels, params).map(|(m, _)| m)
}

pub fn train_with_report(
    x: ArrayView2<f64>,
    labels: &[u8],
    params: &TrainParams,
) -> Result<(LinearModel, FitReport)> {
    if x.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: labels.len(),
        });
    }
    if !(params.l2_coeff >= 0.0 && params.l2_coeff.is_finite()) {
        return Err(Error::Config(format!("l2 coefficient {} must be finite and non-negative", params.l2_coeff)));
    }
    if params.max_iters == 0 {
        return Err(Error::Config("max_iters must be positive".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidLabel(bad.to_string()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        let class = labels.first().copied().unwrap_or(0);
        return Err(Error::SingleClass(class));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("feature matrix contains non-finite values".into()));
    }

    let (means, stds) = column_stats(x);
    let z = standardize(x, &means, &stds);
    let objective = LogisticObjective::new(z.view(), labels, params.l2_coeff)?;

    let d = x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut start = Array1::zeros(d + 1);
    for w in start.iter_mut().take(d) {
        *w = init.sample(&mut rng);
    }

    let (theta, report) = minimize(&objective, start, params.max_iters);
    let model = LinearModel {
        weights: theta.slice(ndarray::s![..d]).to_owned(),
        bias: theta[d],
        feature_means: means,
        feature_stds: stds,
        l2_coeff: params.l2_coeff,
        max_iters: params.max_iters,
    };
    Ok((model, report))
}

fn minimize(obj: &LogisticObjective, mut x: Array1<f64>, max_iters: usize) -> (Array1<f64>, FitReport) {
    let (mut f, mut g) = obj.value_and_gradient(x.view());
    let mut history: VecDeque<(Array1<f64>, Array1<f64>, f64)> = VecDeque::with_capacity(HISTORY);
    let mut iterations = 0;

    while iterations < max_iters {
        let gnorm = g.dot(&g).sqrt();
        if gnorm <= GRADIENT_TOLERANCE {
            break;
        }
        let mut dir = two_loop(&g, &history);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            history.clear();
            dir = -&g;
            slope = -gnorm * gnorm;
        }
        let mut step = if history.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };

        let mut accepted = None;
        while step > 1e-16 {
            let candidate = &x + &(&dir * step);
            let fc = obj.value(candidate.view());
            if fc <= f + ARMIJO_C1 * step * slope {
                accepted = Some(candidate);
                break;
            }
            step *= 0.5;
        }
        // No decrease representable in floating point: the iterate is optimal to rounding.
        let Some(next) = accepted else { break };

        let (fn_, gn) = obj.value_and_gradient(next.view());
        let s = &next - &x;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.dot(&s).sqrt() * yv.dot(&yv).sqrt() {
            if history.len() == HISTORY {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        x = next;
        f = fn_;
        g = gn;
        iterations += 1;
    }

    let gradient_norm = g.dot(&g).sqrt();
    let report = FitReport {
        iterations,
        final_loss: f,
        gradient_norm,
        converged: gradient_norm <= GRADIENT_TOLERANCE,
    };
    (x, report)
}

/// L-BFGS two-loop recursion: returns `-H g`.
fn two_loop(g: &Array1<f64>, history: &VecDeque<(Array1<f64>, Array1<f64>, f64)>) -> Array1<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.dot(&q);
        q.scaled_add(-a, y);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        q *= s.dot(y) / y.dot(y);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.scaled_add(a - b, s);
    }
    -q
}

impl LinearModel {
    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn feature_means(&self) -> &Array1<f64> {
        &self.feature_means
    }

    pub fn feature_stds(&self) -> &Array1<f64> {
        &self.feature_stds
    }

    pub fn l2_coeff(&self) -> f64 {
        self.l2_coeff
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Model with all-zero weights and bias, unit scaling.
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: Array1::zeros(dim),
            bias: 0.0,
            feature_means: Array1::zeros(dim),
            feature_stds: Array1::ones(dim),
            l2_coeff: 0.0,
            max_iters: 1,
        }
    }

    fn check_dim(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Sigmoid scores, one per row.
    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_dim(&x)?;
        let z = standardize(x, &self.feature_means, &self.feature_stds);
        Ok((z.dot(&self.weights) + self.bias).mapv(sigmoid))
    }

    /// Labels at the 0.5 cut; a score of exactly 0.5 predicts 1.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<u8>> {
        Ok(self.scores(x)?.iter().map(|&p| u8::from(p >= 0.5)).collect())
    }

    /// Regularized training objective evaluated on `(x, labels)` with this model's scaling.
    pub fn objective(&self, x: ArrayView2<f64>, labels: &[u8]) -> Result<f64> {
        self.check_dim(&x)?;
        let z = standardize(x, &self.feature_means, &self.feature_stds);
        let obj = LogisticObjective::new(z.view(), labels, self.l2_coeff)?;
        let mut theta = Array1::zeros(self.dim() + 1);
        theta.slice_mut(ndarray::s![..self.dim()]).assign(&self.weights);
        theta[self.dim()] = self.bias;
        Ok(obj.value(theta.view()))
    }

    /// Text serialization: a header line then one line each for means,
    /// stds, weights and bias, every float written with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{MODEL_MAGIC} version={MODEL_VERSION} dim={} l2={:.16e} max_iters={}",
            self.dim(),
            self.l2_coeff,
            self.max_iters
        );
        for (tag, row) in [
            ("means", &self.feature_means),
            ("stds", &self.feature_stds),
            ("weights", &self.weights),
        ] {
            out.push_str(tag);
            for v in row {
                let _ = write!(out, " {v:.16e}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "bias {:.16e}", self.bias);
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format(path, msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty model file".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MODEL_MAGIC) {
            return Err(bad(format!("not a model file (expected header {MODEL_MAGIC})")));
        }
        let mut field = |key: &str| -> Result<String> {
            let kv = parts.next().ok_or_else(|| bad(format!("header missing {key}")))?;
            kv.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("header field {kv:?}, expected {key}=")))
        };
        let version: u32 = field("version")?.parse().map_err(|_| bad("bad version".into()))?;
        if version != MODEL_VERSION {
            return Err(bad(format!("unsupported model version {version}")));
        }
        let dim: usize = field("dim")?.parse().map_err(|_| bad("bad dim".into()))?;
        let l2_coeff: f64 = field("l2")?.parse().map_err(|_| bad("bad l2".into()))?;
        let max_iters: usize = field("max_iters")?.parse().map_err(|_| bad("bad max_iters".into()))?;

        let mut row = |tag: &str, len: usize| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {tag} line")))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(tag) {
                return Err(bad(format!("expected {tag} line")));
            }
            let vals = it
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad number {v:?} in {tag}"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != len {
                return Err(bad(format!("{tag} has {} values, expected {len}", vals.len())));
            }
            Ok(vals)
        };
        let feature_means = Array1::from(row("means", dim)?);
        let feature_stds = Array1::from(row("stds", dim)?);
        let weights = Array1::from(row("weights", dim)?);
        let bias = row("bias", 1)?[0];
        if feature_stds.iter().any(|s| !(*s > 0.0)) {
            return Err(bad("stds must be positive".into()));
        }
        Ok(Self {
            weights,
            bias,
            feature_means,
            feature_stds,
            l2_coeff,
            max_iters,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params(l2: f64) -> TrainParams {
        TrainParams {
            l2_coeff: l2,
            max_iters: 1000,
            seed: 7,
        }
    }

    #[test]
    fn separable_one_dimensional() {
        let x = array![[-3.0], [-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0], [3.0]];
        let y = [0, 0, 0, 0, 1, 1, 1, 1];
        let m = train(x.view(), &y, &params(1e-6)).unwrap();
        assert_eq!(m.predict(x.view()).unwrap(), y.to_vec());
    }

    #[test]
    fn heavy_penalty_predicts_majority() {
        let x = array![[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0], [4.0]];
        let y = [0, 0, 0, 1, 1, 1, 1];
        let m = train(x.view(), &y, &params(1e6)).unwrap();
        assert!(m.weights().iter().all(|w| w.abs() < 1e-5));
        assert_eq!(m.predict(x.view()).unwrap(), vec![1; 7]);
    }

    #[test]
    fn zero_model_ties_to_one() {
        let m = LinearModel::zeros(3);
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.0, 5.0]];
        assert_eq!(m.scores(x.view()).unwrap().to_vec(), vec![0.5, 0.5]);
        assert_eq!(m.predict(x.view()).unwrap(), vec![1, 1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[1.0], [2.0]];
        assert!(matches!(
            train(x.view(), &[1, 1], &params(1.0)),
            Err(Error::SingleClass(1))
        ));
        assert!(matches!(
            train(x.view(), &[0], &params(1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(train(x.view(), &[0, 2], &params(1.0)).is_err());
        let m = train(x.view(), &[0, 1], &params(1.0)).unwrap();
        let wide = array![[1.0, 2.0]];
        assert!(matches!(
            m.predict(wide.view()),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn constant_feature_gets_unit_std_and_zero_weight() {
        let x = array![[5.0, -1.0], [5.0, -2.0], [5.0, 1.0], [5.0, 2.0]];
        let y = [0, 0, 1, 1];
        let m = train(x.view(), &y, &params(0.1)).unwrap();
        assert_eq!(m.feature_stds()[0], 1.0);
        assert!(m.weights()[0].abs() < 1e-6);
    }

    #[test]
    fn predict_is_repeatable() {
        let x = array![[0.1, 3.0], [1.0, -2.0], [0.3, 0.0], [2.0, 1.0]];
        let y = [0, 1, 0, 1];
        let m = train(x.view(), &y, &params(0.5)).unwrap();
        assert_eq!(m.predict(x.view()).unwrap(), m.predict(x.view()).unwrap());
        let again = train(x.view(), &y, &params(0.5)).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let x = array![[0.1, 3.0], [1.0, -2.0], [0.3, 0.0], [2.0, 1.0], [0.7, 0.2]];
        let y = [0, 1, 0, 1, 1];
        let m = train(x.view(), &y, &params(0.01)).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("attn-topo-logreg version=1 dim=2 "));
        let back = LinearModel::from_text(&text, Path::new("mem")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn text_rejects_corruption() {
        let m = LinearModel::zeros(2);
        let text = m.to_text();
        let p = Path::new("mem");
        assert!(LinearModel::from_text(&text.replace("dim=2", "dim=3"), p).is_err());
        assert!(LinearModel::from_text(&text.replace("version=1", "version=9"), p).is_err());
        assert!(LinearModel::from_text("garbage", p).is_err());
        let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(LinearModel::from_text(&truncated, p).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((softplus(-800.0)).abs() < 1e-300);
        assert_eq!(softplus(800.0), 800.0);
    }
}
