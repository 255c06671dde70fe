//! Average accuracy and average forgetting over the task-accuracy matrix.
//!
//! `r[t][i]` is the accuracy on task `i` after training task `t` (both
//! zero-based); row `t` holds `t + 1` entries. The functions below take the
//! one-based task count `t` used in the usual definitions.

use alloc::vec::Vec;

use crate::error::{Error, Result};

fn row(r: &[Vec<f64>], t: usize) -> Result<&[f64]> {
    if t == 0 {
        return Err(Error::InvalidParameter("task count starts at 1".into()));
    }
    let row = r.get(t - 1).ok_or_else(|| Error::InvalidParameter(alloc::format!("row {t} of R is missing")))?;
    if row.len() < t {
        return Err(Error::InvalidParameter(alloc::format!("row {t} of R has {} entries", row.len())));
    }
    Ok(&row[..t])
}

/// `A_t = (1/t) Σ_{i≤t} R_{t,i}`
pub fn avg_accuracy(r: &[Vec<f64>], t: usize) -> Result<f64> {
    let row = row(r, t)?;
    Ok(row.iter().sum::<f64>() / t as f64)
}

/// `F_t = 1/(t−1) Σ_{i<t} max_{t'<t} (R_{t',i} − R_{t,i})`; undefined for `t < 2`.
pub fn avg_forgetting(r: &[Vec<f64>], t: usize) -> Result<f64> {
    if t < 2 {
        return Err(Error::InvalidParameter("forgetting needs at least two tasks".into()));
    }
    let last = row(r, t)?;
    let mut total = 0.0;
    for (i, &now) in last.iter().enumerate().take(t - 1) {
        let mut worst = f64::NEG_INFINITY;
        for tp in i + 1..t {
            let earlier = row(r, tp)?[i];
            worst = worst.max(earlier - now);
        }
        total += worst;
    }
    Ok(total / (t - 1) as f64)
}

/// `A_1 … A_T`
pub fn accuracy_curve(r: &[Vec<f64>]) -> Result<Vec<f64>> {
    (1..=r.len()).map(|t| avg_accuracy(r, t)).collect()
}

/// `F_1 … F_T`, with `None` where forgetting is undefined.
pub fn forgetting_curve(r: &[Vec<f64>]) -> Result<Vec<Option<f64>>> {
    (1..=r.len()).map(|t| if t < 2 { Ok(None) } else { avg_forgetting(r, t).map(Some) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn hand() -> Vec<Vec<f64>> {
        vec![vec![1.0], vec![0.9, 0.8], vec![0.7, 0.75, 0.8]]
    }

    #[test]
    fn accuracy_examples() {
        assert!((avg_accuracy(&[vec![0.5], vec![0.8, 0.6]], 2).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(avg_accuracy(&[vec![1.0], vec![1.0, 1.0]], 2).unwrap(), 1.0);
        assert!((avg_accuracy(&hand(), 3).unwrap() - 0.75).abs() < 1e-12);
        assert!(avg_accuracy(&hand(), 0).is_err());
        assert!(avg_accuracy(&hand(), 4).is_err());
    }

    #[test]
    fn forgetting_examples() {
        assert_eq!(avg_forgetting(&[vec![0.9], vec![0.9, 0.3]], 2).unwrap(), 0.0);
        assert!((avg_forgetting(&[vec![0.9], vec![0.7, 0.5]], 2).unwrap() - 0.2).abs() < 1e-12);
        assert!((avg_forgetting(&hand(), 3).unwrap() - 0.175).abs() < 1e-12);
        assert!(avg_forgetting(&hand(), 1).is_err());
        assert!(avg_forgetting(&[vec![0.5], vec![0.9, 0.5]], 2).unwrap() < 0.0);
    }

    #[test]
    fn curves() {
        let a = accuracy_curve(&hand()).unwrap();
        assert_eq!(a.len(), 3);
        let f = forgetting_curve(&hand()).unwrap();
        assert_eq!(f[0], None);
        assert!((f[1].unwrap() - 0.1).abs() < 1e-12);
    }
}
