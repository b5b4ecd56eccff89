use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `(y_nag − y_sus) / y_nag`; `None` when the baseline value is not positive.
pub fn relative_improvement(y_nag: f64, y_sus: f64) -> Option<f64> {
    if y_nag > 0.0 {
        Some((y_nag - y_sus) / y_nag)
    } else {
        log::warn!("relative improvement undefined for baseline objective {y_nag}; record excluded");
        None
    }
}

/// `(k_nag − k_sus) / k_nag`
pub fn runtime_reduction(k_nag: usize, k_sus: usize) -> f64 {
    assert!(k_nag >= 1, "iteration count must be positive");
    (k_nag as f64 - k_sus as f64) / k_nag as f64
}

/// Quantile with linear interpolation between order statistics at
/// position `q (n − 1)` of the sorted values.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("quantile of empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Mean, sample standard deviation and quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Summary> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("summary of empty sample".into()));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Summary {
            count: n,
            mean,
            std,
            q25: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q75: quantile_sorted(&sorted, 0.75),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_values() {
        assert_eq!(relative_improvement(2.0, 1.0), Some(0.5));
        assert_eq!(relative_improvement(2.0, 2.0), Some(0.0));
        assert_eq!(relative_improvement(2.0, 0.0), Some(1.0));
        assert_eq!(relative_improvement(0.0, 1.0), None);
    }

    #[test]
    fn reduction_values() {
        assert!((runtime_reduction(100, 60) - 0.4).abs() < 1e-15);
        assert_eq!(runtime_reduction(7, 7), 0.0);
    }

    #[test]
    fn quantile_values() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
        assert_eq!(quantile(&[3.0, 1.0], 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&[4.0, -1.0, 2.0], 0.0).unwrap(), -1.0);
        assert_eq!(quantile(&[4.0, -1.0, 2.0], 1.0).unwrap(), 4.0);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&[1.0], 1.5).is_err());
    }

    #[test]
    fn summary_values() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.q25, 1.75);
        assert_eq!(Summary::of(&[7.0]).unwrap().std, 0.0);
    }
}
