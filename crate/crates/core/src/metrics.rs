//! Binary confusion counts, Matthews correlation and accuracy.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub const fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    /// Tallies paired labels; class 1 is the positive class.
    pub fn from_labels(truth: &[u8], predicted: &[u8]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: predicted.len(),
            });
        }
        let mut c = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (1, 1) => c.tp += 1,
                (0, 1) => c.fp += 1,
                (0, 0) => c.tn += 1,
                (1, 0) => c.fn_ += 1,
                _ => return Err(Error::InvalidLabel(format!("({t}, {p})"))),
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Matthews correlation coefficient. A zero factor in the denominator gives 0.
pub fn matthews(c: &ConfusionCounts) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    let mcc = (tp * tn - fp * fn_) / denom.sqrt();
    mcc.clamp(-1.0, 1.0)
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::EmptyConfusion);
    }
    Ok((c.tp + c.tn) as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let c = ConfusionCounts::new(50, 0, 50, 0);
        assert_eq!(matthews(&c), 1.0);
        assert_eq!(accuracy(&c).unwrap(), 1.0);
    }

    #[test]
    fn chance_level() {
        let c = ConfusionCounts::new(25, 25, 25, 25);
        assert_eq!(matthews(&c), 0.0);
        assert_eq!(accuracy(&c).unwrap(), 0.5);
    }

    #[test]
    fn mixed_counts() {
        let c = ConfusionCounts::new(45, 10, 40, 5);
        // 1750 / sqrt(55 * 50 * 50 * 45)
        assert!((matthews(&c) - 0.703_526).abs() < 1e-6);
        assert!((accuracy(&c).unwrap() - 0.85).abs() < 1e-15);
    }

    #[test]
    fn degenerate_denominators() {
        assert_eq!(matthews(&ConfusionCounts::new(10, 5, 0, 0)), 0.0);
        assert_eq!(matthews(&ConfusionCounts::new(0, 0, 10, 5)), 0.0);
        assert_eq!(matthews(&ConfusionCounts::default()), 0.0);
        assert!(matches!(
            accuracy(&ConfusionCounts::default()),
            Err(Error::EmptyConfusion)
        ));
    }

    #[test]
    fn tally_from_labels() {
        let c = ConfusionCounts::from_labels(&[1, 1, 0, 0, 1], &[1, 0, 0, 1, 1]).unwrap();
        assert_eq!(c, ConfusionCounts::new(2, 1, 1, 1));
        assert!(ConfusionCounts::from_labels(&[1], &[]).is_err());
        assert!(ConfusionCounts::from_labels(&[2], &[1]).is_err());
    }

    #[test]
    fn symmetric_under_class_swap() {
        for (tp, fp, tn, fn_) in [(3, 1, 7, 2), (10, 0, 1, 4), (0, 3, 3, 0)] {
            let a = matthews(&ConfusionCounts::new(tp, fp, tn, fn_));
            let b = matthews(&ConfusionCounts::new(tn, fn_, tp, fp));
            assert!((a - b).abs() < 1e-15);
        }
    }
}
