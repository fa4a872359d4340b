use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EarlyStop {
    Continue,
    /// `best_epoch` is 1-based.
    Stop {
        best_epoch: usize,
    },
}

/// Stops once each of the last `patience` validation losses is no lower than
/// the minimum of all earlier epochs. Only a strict decrease counts as
/// improvement.
pub fn early_stop_check(val_losses: &[f64], patience: usize) -> Result<EarlyStop> {
    if val_losses.is_empty() {
        return Err(Error::Config("early stopping needs at least one epoch".into()));
    }
    if patience == 0 {
        return Err(Error::Config("patience must be >= 1".into()));
    }
    let n = val_losses.len();
    if n <= patience {
        return Ok(EarlyStop::Continue);
    }
    let prior_min = val_losses[..n - patience].iter().copied().fold(f64::INFINITY, f64::min);
    if val_losses[n - patience..].iter().all(|&l| l >= prior_min) {
        Ok(EarlyStop::Stop {
            best_epoch: best_epoch(val_losses),
        })
    } else {
        Ok(EarlyStop::Continue)
    }
}

/// 1-based index of the first strict minimum.
pub fn best_epoch(val_losses: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in val_losses.iter().enumerate() {
        if l < val_losses[best] {
            best = i;
        }
    }
    best + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Runs the check after every epoch and reports where it first stops.
    fn stop_point(losses: &[f64], patience: usize) -> Option<(usize, usize)> {
        (1..=losses.len()).find_map(|n| match early_stop_check(&losses[..n], patience).unwrap() {
            EarlyStop::Stop { best_epoch } => Some((n, best_epoch)),
            EarlyStop::Continue => None,
        })
    }

    #[test]
    fn scripted_sequences() {
        let a = [0.5, 0.4, 0.4, 0.41, 0.42, 0.43, 0.44, 0.45, 0.46, 0.47];
        assert_eq!(stop_point(&a, 7), Some((9, 2)));
        assert_eq!(stop_point(&[0.3, 0.2, 0.25, 0.25, 0.25], 3), Some((5, 2)));
        assert_eq!(stop_point(&[1.0; 6], 3), Some((4, 1)));
        let falling: Vec<f64> = (0..30).map(|i| 1.0 / (i + 1) as f64).collect();
        assert_eq!(stop_point(&falling, 2), None);
    }

    #[test]
    fn empty_history_is_an_error() {
        assert!(early_stop_check(&[], 3).is_err());
    }
}
