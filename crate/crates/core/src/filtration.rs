//! Threshold filtrations of attention graphs.
//!
//! An attention map is a complete weighted digraph with loops: entry
//! `w[i][j]` weighs the edge `j -> i`. Cutting it at a threshold `t` keeps
//! the edges of weight at least `t`, forgets directions and drops loops,
//! which leaves an undirected simple graph. Raising `t` only removes edges,
//! so along an ascending schedule β0 never decreases and β1 never increases.
//!
//! [`betti_curve`] computes the whole curve in one pass: symmetrized edges
//! are sorted by weight and inserted into a single union-find while the
//! schedule is walked from the top threshold down. [`betti_curve_naive`]
//! rebuilds every graph independently and is kept as the reference.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{betti, BettiPair, UndirectedGraph};
use crate::union_find::UnionFind;

/// Row-sum tolerance for maps built in memory.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

/// Square, row-stochastic matrix of attention weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    size: usize,
    weights: Vec<f64>,
}

impl AttentionMap {
    /// Validates with the in-memory row-sum tolerance.
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(size, weights, ROW_SUM_TOLERANCE)
    }

    pub fn with_tolerance(size: usize, weights: Vec<f64>, tolerance: f64) -> Result<Self> {
        let map = Self::unchecked(size, weights)?;
        if let Some((row, sum)) = map.first_bad_row(tolerance) {
            return Err(Error::InvalidMap(format!(
                "row {row} sums to {sum}, outside tolerance {tolerance}"
            )));
        }
        Ok(map)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::InvalidMap("rows must all have length equal to the row count".into()));
        }
        Self::new(size, rows.concat())
    }

    /// Checks shape, finiteness and sign but not row sums.
    pub(crate) fn unchecked(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidMap("size must be positive".into()));
        }
        if weights.len() != size * size {
            return Err(Error::InvalidMap(format!(
                "expected {} weights for size {size}, got {}",
                size * size,
                weights.len()
            )));
        }
        if let Some(pos) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMap(format!(
                "entry ({}, {}) = {} is negative or not finite",
                pos / size,
                pos % size,
                weights[pos]
            )));
        }
        Ok(Self { size, weights })
    }

    /// First row whose sum lies outside `1 ± tolerance`, with that sum.
    pub(crate) fn first_bad_row(&self, tolerance: f64) -> Option<(usize, f64)> {
        (0..self.size)
            .map(|i| (i, self.row(i).iter().sum::<f64>()))
            .find(|(_, s)| (s - 1.0).abs() > tolerance)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Weight of the edge `j -> i`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.size..(i + 1) * self.size]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Undirected edges `(i, j, max(w[i][j], w[j][i]))` for `i < j`.
    pub fn symmetrized_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.size;
        (0..n).flat_map(move |i| {
            (i + 1..n).map(move |j| (i, j, self.get(i, j).max(self.get(j, i))))
        })
    }
}

/// Strictly ascending thresholds inside `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSchedule {
    values: Vec<f64>,
}

impl ThresholdSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSchedule("at least one threshold is required".into()));
        }
        if let Some(t) = values.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::InvalidSchedule(format!(
                "threshold {t} is outside the open interval (0, 1)"
            )));
        }
        if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule(format!(
                "thresholds must be strictly ascending ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for ThresholdSchedule {
    /// Six thresholds concentrated where weights of rows summing to one tend to sit.
    fn default() -> Self {
        Self {
            values: vec![0.01, 0.025, 0.05, 0.1, 0.25, 0.5],
        }
    }
}

impl FromStr for ThresholdSchedule {
    type Err = Error;

    /// Parses a comma-separated list such as `0.05,0.1,0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidSchedule(format!("cannot parse threshold {part:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }
}

impl fmt::Display for ThresholdSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.values.iter().map(|t| t.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// (β0, β1) at each threshold of a schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct BettiCurve {
    schedule: ThresholdSchedule,
    points: Vec<BettiPair>,
}

impl BettiCurve {
    /// Pairs points with thresholds. Monotonicity is not enforced here so that
    /// corrupted curves can still be represented and rejected downstream.
    pub fn new(schedule: ThresholdSchedule, points: Vec<BettiPair>) -> Result<Self> {
        if points.len() != schedule.len() {
            return Err(Error::DimensionMismatch {
                expected: schedule.len(),
                found: points.len(),
            });
        }
        Ok(Self { schedule, points })
    }

    pub fn schedule(&self) -> &ThresholdSchedule {
        &self.schedule
    }

    pub fn points(&self) -> &[BettiPair] {
        &self.points
    }

    /// Confirms β0 is non-decreasing and β1 non-increasing along the schedule.
    pub fn check_monotone(&self) -> Result<()> {
        for (step, w) in self.points.windows(2).enumerate() {
            let t = self.schedule.values[step + 1];
            if w[1].beta0 < w[0].beta0 {
                return Err(Error::NonMonotoneCurve(format!(
                    "beta0 drops from {} to {} at threshold {t}",
                    w[0].beta0, w[1].beta0
                )));
            }
            if w[1].beta1 > w[0].beta1 {
                return Err(Error::NonMonotoneCurve(format!(
                    "beta1 rises from {} to {} at threshold {t}",
                    w[0].beta1, w[1].beta1
                )));
            }
        }
        Ok(())
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::ThresholdOutOfRange(t))
    }
}

/// Undirected graph of the edges that survive threshold `t` in either direction.
pub fn threshold_graph(map: &AttentionMap, t: f64) -> Result<UndirectedGraph> {
    check_threshold(t)?;
    let mut g = UndirectedGraph::empty(map.size())?;
    for (i, j, w) in map.symmetrized_edges() {
        if w >= t {
            g.add_edge(i, j)?;
        }
    }
    Ok(g)
}

/// Single-sweep Betti curve.
pub fn betti_curve(map: &AttentionMap, schedule: &ThresholdSchedule) -> BettiCurve {
    let n = map.size();
    let lowest = schedule.values[0];
    let mut edges: Vec<(f64, usize, usize)> = map
        .symmetrized_edges()
        .filter(|&(_, _, w)| w >= lowest)
        .map(|(i, j, w)| (w, i, j))
        .collect();
    edges.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));

    let mut uf = UnionFind::new(n);
    let mut inserted = 0usize;
    let mut next = 0usize;
    let mut points = vec![BettiPair::new(0, 0); schedule.len()];
    for (slot, &t) in schedule.values.iter().enumerate().rev() {
        while next < edges.len() && edges[next].0 >= t {
            let (_, i, j) = edges[next];
            uf.union(i, j);
            inserted += 1;
            next += 1;
        }
        let beta0 = uf.components();
        points[slot] = BettiPair::new(beta0, inserted + beta0 - n);
    }
    BettiCurve {
        schedule: schedule.clone(),
        points,
    }
}

/// Betti curve recomputed graph by graph.
pub fn betti_curve_naive(map: &AttentionMap, schedule: &ThresholdSchedule) -> Result<BettiCurve> {
    let points = schedule
        .values
        .iter()
        .map(|&t| threshold_graph(map, t).map(|g| betti(&g)))
        .collect::<Result<Vec<_>>>()?;
    BettiCurve::new(schedule.clone(), points)
}

/// One persistence interval of a graph filtration, located on the schedule.
///
/// `change_at` is the threshold of the ascending step at which the class
/// count changed, or `None` for a class present across the whole schedule.
/// An H0 bar splits off at `change_at` and stays alive for every threshold
/// at or above it. An H1 bar is alive below `change_at` and gone from it on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bar {
    pub change_at: Option<f64>,
}

impl Bar {
    pub const FULL_RANGE: Bar = Bar { change_at: None };

    pub fn is_full_range(&self) -> bool {
        self.change_at.is_none()
    }

    fn h0_alive_at(&self, t: f64) -> bool {
        self.change_at.is_none_or(|c| c <= t)
    }

    fn h1_alive_at(&self, t: f64) -> bool {
        self.change_at.is_none_or(|c| t < c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Barcode {
    pub schedule: ThresholdSchedule,
    pub h0: Vec<Bar>,
    pub h1: Vec<Bar>,
}

impl Barcode {
    /// Counts the bars alive at `t`.
    pub fn betti_at(&self, t: f64) -> BettiPair {
        BettiPair {
            beta0: self.h0.iter().filter(|b| b.h0_alive_at(t)).count(),
            beta1: self.h1.iter().filter(|b| b.h1_alive_at(t)).count(),
        }
    }

    /// Recounts the bars at every schedule threshold.
    pub fn to_curve(&self) -> BettiCurve {
        let points = self.schedule.values.iter().map(|&t| self.betti_at(t)).collect();
        BettiCurve {
            schedule: self.schedule.clone(),
            points,
        }
    }
}

/// Recovers the barcode of a graph filtration from its Betti curve.
pub fn barcode_from_curve(curve: &BettiCurve) -> Result<Barcode> {
    curve.check_monotone()?;
    let ts = curve.schedule.values();
    let pts = &curve.points;

    let mut h0 = vec![Bar::FULL_RANGE; pts[0].beta0];
    let mut h1 = Vec::new();
    for step in 1..pts.len() {
        let t = Some(ts[step]);
        let born = pts[step].beta0 - pts[step - 1].beta0;
        h0.extend(std::iter::repeat_n(Bar { change_at: t }, born));
        let died = pts[step - 1].beta1 - pts[step].beta1;
        h1.extend(std::iter::repeat_n(Bar { change_at: t }, died));
    }
    h1.extend(std::iter::repeat_n(Bar::FULL_RANGE, pts[pts.len() - 1].beta1));

    Ok(Barcode {
        schedule: curve.schedule.clone(),
        h0,
        h1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sched(v: &[f64]) -> ThresholdSchedule {
        ThresholdSchedule::new(v.to_vec()).unwrap()
    }

    fn two_by_two() -> AttentionMap {
        AttentionMap::from_rows(&[vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap()
    }

    #[test]
    fn threshold_drops_loops() {
        let g = threshold_graph(&two_by_two(), 0.5).unwrap();
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn threshold_keeps_either_direction() {
        let g = threshold_graph(&two_by_two(), 0.3).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn threshold_rejects_out_of_range() {
        for t in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(threshold_graph(&two_by_two(), t).is_err(), "t = {t}");
        }
    }

    #[test]
    fn half_half_map() {
        let m = AttentionMap::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let c = betti_curve(&m, &sched(&[0.25, 0.75]));
        assert_eq!(c.points(), &[BettiPair::new(1, 0), BettiPair::new(2, 0)]);
    }

    #[test]
    fn uniform_three_map() {
        let third = 1.0 / 3.0;
        let m = AttentionMap::new(3, vec![third; 9]).unwrap();
        let c = betti_curve(&m, &sched(&[0.1, 0.5]));
        assert_eq!(c.points(), &[BettiPair::new(1, 1), BettiPair::new(3, 0)]);
    }

    #[test]
    fn map_validation() {
        assert!(AttentionMap::from_rows(&[vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(AttentionMap::from_rows(&[vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
        assert!(AttentionMap::from_rows(&[vec![f64::NAN, 1.0], vec![0.5, 0.5]]).is_err());
        assert!(AttentionMap::new(2, vec![0.5; 3]).is_err());
        assert!(AttentionMap::new(0, vec![]).is_err());
        // Within tolerance.
        assert!(AttentionMap::from_rows(&[vec![0.5, 0.500_004], vec![0.5, 0.5]]).is_ok());
    }

    #[test]
    fn schedule_validation() {
        assert!(ThresholdSchedule::new(vec![]).is_err());
        assert!(ThresholdSchedule::new(vec![0.1, 0.1]).is_err());
        assert!(ThresholdSchedule::new(vec![0.2, 0.1]).is_err());
        assert!(ThresholdSchedule::new(vec![0.0, 0.5]).is_err());
        assert!(ThresholdSchedule::new(vec![0.5, 1.0]).is_err());
        assert!(ThresholdSchedule::new(vec![f64::NAN]).is_err());
        let s: ThresholdSchedule = "0.01, 0.25,0.5".parse().unwrap();
        assert_eq!(s.values(), &[0.01, 0.25, 0.5]);
        assert_eq!(s.to_string(), "0.01,0.25,0.5");
        assert!("0.1,x".parse::<ThresholdSchedule>().is_err());
        assert_eq!(ThresholdSchedule::default().len(), 6);
    }

    #[test]
    fn barcode_examples() {
        let c = BettiCurve::new(
            sched(&[0.25, 0.75]),
            vec![BettiPair::new(1, 0), BettiPair::new(2, 0)],
        )
        .unwrap();
        let b = barcode_from_curve(&c).unwrap();
        assert_eq!(b.h0, vec![Bar::FULL_RANGE, Bar { change_at: Some(0.75) }]);
        assert!(b.h1.is_empty());

        let c = BettiCurve::new(
            sched(&[0.1, 0.5]),
            vec![BettiPair::new(1, 1), BettiPair::new(3, 0)],
        )
        .unwrap();
        let b = barcode_from_curve(&c).unwrap();
        assert_eq!(
            b.h0,
            vec![
                Bar::FULL_RANGE,
                Bar { change_at: Some(0.5) },
                Bar { change_at: Some(0.5) }
            ]
        );
        assert_eq!(b.h1, vec![Bar { change_at: Some(0.5) }]);
        assert_eq!(b.to_curve(), c);
    }

    #[test]
    fn barcode_rejects_non_monotone() {
        let c = BettiCurve::new(
            sched(&[0.1, 0.5]),
            vec![BettiPair::new(3, 0), BettiPair::new(1, 0)],
        )
        .unwrap();
        assert!(matches!(barcode_from_curve(&c), Err(Error::NonMonotoneCurve(_))));
        let c = BettiCurve::new(
            sched(&[0.1, 0.5]),
            vec![BettiPair::new(1, 0), BettiPair::new(1, 2)],
        )
        .unwrap();
        assert!(matches!(barcode_from_curve(&c), Err(Error::NonMonotoneCurve(_))));
    }

    #[test]
    fn curve_length_must_match_schedule() {
        assert!(BettiCurve::new(sched(&[0.1, 0.5]), vec![BettiPair::new(1, 0)]).is_err());
    }

    fn arb_map(max_n: usize) -> impl Strategy<Value = AttentionMap> {
        (2..=max_n)
            .prop_flat_map(|n| (Just(n), proptest::collection::vec(0.0f64..1.0, n * n)))
            .prop_map(|(n, mut raw)| {
                // Sharpen so that weights spread across the schedule range.
                for v in raw.iter_mut() {
                    *v = v.powi(6) + 1e-9;
                }
                for row in raw.chunks_mut(n) {
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= s);
                }
                AttentionMap::with_tolerance(n, raw, 1e-9).unwrap()
            })
    }

    fn arb_schedule() -> impl Strategy<Value = ThresholdSchedule> {
        proptest::collection::btree_set(1u32..999, 1..8).prop_map(|set| {
            ThresholdSchedule::new(set.into_iter().map(|k| k as f64 / 1000.0).collect()).unwrap()
        })
    }

    fn arb_monotone_curve() -> impl Strategy<Value = BettiCurve> {
        arb_schedule().prop_flat_map(|s| {
            let k = s.len();
            (
                Just(s),
                1usize..20,
                proptest::collection::vec(0usize..5, k),
                0usize..20,
                proptest::collection::vec(0usize..5, k),
            )
                .prop_map(|(s, b0, d0, b1, d1)| {
                    let mut beta0 = b0;
                    let mut beta1 = b1 + d1.iter().sum::<usize>();
                    let mut pts = Vec::new();
                    for i in 0..s.len() {
                        if i > 0 {
                            beta0 += d0[i];
                            beta1 -= d1[i];
                        }
                        pts.push(BettiPair::new(beta0, beta1));
                    }
                    BettiCurve::new(s, pts).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn sweep_equals_naive(m in arb_map(12), s in arb_schedule()) {
            prop_assert_eq!(betti_curve(&m, &s), betti_curve_naive(&m, &s).unwrap());
        }

        #[test]
        fn curves_are_monotone(m in arb_map(12), s in arb_schedule()) {
            prop_assert!(betti_curve(&m, &s).check_monotone().is_ok());
        }

        #[test]
        fn graphs_are_nested(m in arb_map(10), a in 1u32..999, b in 1u32..999) {
            let (lo, hi) = (a.min(b) as f64 / 1000.0, a.max(b) as f64 / 1000.0);
            let g_lo = threshold_graph(&m, lo).unwrap();
            let g_hi = threshold_graph(&m, hi).unwrap();
            prop_assert!(g_hi.is_subgraph_of(&g_lo));
        }

        #[test]
        fn barcode_round_trip(c in arb_monotone_curve()) {
            let bars = barcode_from_curve(&c).unwrap();
            prop_assert_eq!(bars.to_curve(), c);
        }
    }
}
