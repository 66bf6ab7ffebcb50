//! Gate deciding whether earlier learned stages help on the real stream.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmStartSample {
    pub reference: [f64; 3],
    /// Base kinematic prediction.
    pub kinematic: [f64; 3],
    /// Kinematic prediction plus the earlier learned stages.
    pub informed: [f64; 3],
}

fn mean_abs(window: &[WarmStartSample], pick: impl Fn(&WarmStartSample) -> [f64; 3]) -> f64 {
    let total: f64 = window
        .iter()
        .map(|s| {
            let p = pick(s);
            (0..3).map(|c| (s.reference[c] - p[c]).abs()).sum::<f64>() / 3.0
        })
        .sum();
    total / window.len() as f64
}

/// True iff the informed model's mean absolute error (channel-averaged) is
/// strictly below the kinematic model's over the window.
pub fn check_warm_start(window: &[WarmStartSample]) -> Result<bool> {
    if window.is_empty() {
        return Err(Error::invalid("window", "warm-start window is empty"));
    }
    let kin = mean_abs(window, |s| s.kinematic);
    let informed = mean_abs(window, |s| s.informed);
    if !kin.is_finite() || !informed.is_finite() {
        return Err(Error::NonFinite("warm-start window"));
    }
    Ok(kin > informed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(reference: [f64; 3], kinematic: [f64; 3], informed: [f64; 3]) -> WarmStartSample {
        WarmStartSample {
            reference,
            kinematic,
            informed,
        }
    }

    #[test]
    fn exact_informed_model_wins() {
        let w = [s([1.0, 2.0, 3.0], [0.0; 3], [1.0, 2.0, 3.0])];
        assert!(check_warm_start(&w).unwrap());
        let both = [s([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0])];
        assert!(!check_warm_start(&both).unwrap());
    }

    #[test]
    fn identical_models_fail() {
        let w = [s([1.0; 3], [0.5; 3], [0.5; 3]), s([0.0; 3], [0.2; 3], [0.2; 3])];
        assert!(!check_warm_start(&w).unwrap());
    }

    #[test]
    fn halved_error_passes() {
        // kinematic error 0.4 everywhere, informed error 0.2
        let w: Vec<_> = (0..10)
            .map(|k| {
                let r = [k as f64, -(k as f64), 0.5];
                s(r, r.map(|v| v + 0.4), r.map(|v| v - 0.2))
            })
            .collect();
        assert!(check_warm_start(&w).unwrap());
        let worse: Vec<_> = w.iter().map(|x| s(x.reference, x.informed, x.kinematic)).collect();
        assert!(!check_warm_start(&worse).unwrap());
    }

    #[test]
    fn empty_window_errors() {
        assert!(check_warm_start(&[]).is_err());
    }
}
