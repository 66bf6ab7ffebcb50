//! Ground-truth residuals injected into synthetic reference plants.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::param_net::{forward_into, init_params, MlpSpec, ParamVector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ResidualKind {
    None,
    ConstantBias {
        bias: [f64; 3],
    },
    /// A fixed random network of the learner's architecture. With
    /// `relative = true`, `magnitude` is a fraction of the base-rate RMS and
    /// is resolved against the trajectory before streaming.
    Network {
        #[serde(default = "default_hidden")]
        hidden: usize,
        seed: u64,
        #[serde(default = "default_weight_scale")]
        weight_scale: f64,
        magnitude: f64,
        #[serde(default)]
        relative: bool,
    },
    /// `δ_c = magnitude · sin(Σ_j w_cj · z_j)` with fixed alternating weights.
    Analytic {
        magnitude: f64,
    },
}

fn default_hidden() -> usize {
    super::HIDDEN_WIDTH
}

fn default_weight_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    None,
    Gaussian {
        sigma: [f64; 3],
    },
    /// Per channel: with probability `outlier_prob` the draw uses
    /// `outlier_sigma`, otherwise `sigma`.
    Mixture {
        sigma: [f64; 3],
        outlier_sigma: [f64; 3],
        outlier_prob: f64,
    },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |s: &[f64; 3]| {
            if s.iter().all(|v| *v >= 0.0 && v.is_finite()) {
                Ok(())
            } else {
                Err(Error::invalid("sigma", format!("must be >= 0, got {s:?}")))
            }
        };
        match self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::Gaussian { sigma } => check(sigma),
            NoiseSpec::Mixture {
                sigma,
                outlier_sigma,
                outlier_prob,
            } => {
                check(sigma)?;
                check(outlier_sigma)?;
                if !(0.0..=1.0).contains(outlier_prob) {
                    return Err(Error::invalid(
                        "outlier_prob",
                        format!("must lie in [0, 1], got {outlier_prob}"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Draws one noise triplet. Always consumes the same number of random
    /// values so streams stay aligned regardless of the spec.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let pick: f64 = rng.random();
            let n: f64 = rng.sample(StandardNormal);
            *o = match self {
                NoiseSpec::None => 0.0,
                NoiseSpec::Gaussian { sigma } => sigma[c] * n,
                NoiseSpec::Mixture {
                    sigma,
                    outlier_sigma,
                    outlier_prob,
                } => {
                    if pick < *outlier_prob {
                        outlier_sigma[c] * n
                    } else {
                        sigma[c] * n
                    }
                }
            };
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthResidual {
    #[serde(rename = "shape", default = "default_kind")]
    pub kind: ResidualKind,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
}

fn default_kind() -> ResidualKind {
    ResidualKind::None
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::None
}

impl Default for GroundTruthResidual {
    fn default() -> Self {
        GroundTruthResidual::zero()
    }
}

impl GroundTruthResidual {
    pub fn zero() -> Self {
        GroundTruthResidual {
            kind: ResidualKind::None,
            noise: NoiseSpec::None,
        }
    }

    pub fn constant(bias: [f64; 3], noise: NoiseSpec) -> Self {
        GroundTruthResidual {
            kind: ResidualKind::ConstantBias { bias },
            noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        match &self.kind {
            ResidualKind::None => Ok(()),
            ResidualKind::ConstantBias { bias } => {
                if bias.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::NonFinite("residual bias"))
                }
            }
            ResidualKind::Network {
                hidden,
                weight_scale,
                magnitude,
                ..
            } => {
                if *hidden == 0 {
                    return Err(Error::invalid("hidden", "must be >= 1"));
                }
                if !(*weight_scale >= 0.0 && magnitude.is_finite()) {
                    return Err(Error::invalid("weight_scale", "must be >= 0"));
                }
                Ok(())
            }
            ResidualKind::Analytic { magnitude } => {
                if magnitude.is_finite() {
                    Ok(())
                } else {
                    Err(Error::NonFinite("residual magnitude"))
                }
            }
        }
    }

    pub fn needs_calibration(&self) -> bool {
        matches!(self.kind, ResidualKind::Network { relative: true, .. })
    }

    /// Builds the evaluable model for inputs of width `n_in`. Relative
    /// network magnitudes are taken as absolute here; see
    /// [`ResidualModel::with_scale`].
    pub fn build(&self, n_in: usize) -> Result<ResidualModel> {
        self.validate()?;
        let eval = match &self.kind {
            ResidualKind::None => ResidualEval::Zero,
            ResidualKind::ConstantBias { bias } => ResidualEval::Constant(*bias),
            ResidualKind::Network {
                hidden,
                seed,
                weight_scale,
                magnitude,
                ..
            } => {
                let spec = MlpSpec::new(n_in, *hidden, 3);
                ResidualEval::Network {
                    params: init_params(&spec, *seed, *weight_scale)?,
                    spec,
                    scale: *magnitude,
                }
            }
            ResidualKind::Analytic { magnitude } => ResidualEval::Analytic {
                weights: analytic_weights(n_in),
                magnitude: *magnitude,
            },
        };
        Ok(ResidualModel {
            eval,
            noise: self.noise.clone(),
        })
    }
}

fn analytic_weights(n_in: usize) -> Vec<[f64; 3]> {
    (0..n_in)
        .map(|j| {
            let mut w = [0.0; 3];
            for (c, v) in w.iter_mut().enumerate() {
                let sign = if (j + c) % 2 == 0 { 1.0 } else { -1.0 };
                *v = sign * (((j + 2 * c) % 3) as f64 + 1.0) / n_in as f64;
            }
            w
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
enum ResidualEval {
    Zero,
    Constant([f64; 3]),
    Network {
        params: ParamVector,
        spec: MlpSpec,
        scale: f64,
    },
    Analytic {
        weights: Vec<[f64; 3]>,
        magnitude: f64,
    },
    Sum(Vec<ResidualEval>),
}

impl ResidualEval {
    fn evaluate(&self, z: &[f64]) -> Result<[f64; 3]> {
        match self {
            ResidualEval::Zero => Ok([0.0; 3]),
            ResidualEval::Constant(b) => Ok(*b),
            ResidualEval::Network {
                params,
                spec,
                scale,
            } => {
                let mut out = [0.0; 3];
                forward_into(params.as_slice(), spec, z, &mut out)?;
                Ok(out.map(|v| v * scale))
            }
            ResidualEval::Analytic { weights, magnitude } => {
                if z.len() != weights.len() {
                    return Err(Error::DimensionMismatch {
                        what: "residual input",
                        expected: weights.len(),
                        got: z.len(),
                    });
                }
                let mut out = [0.0; 3];
                for (c, o) in out.iter_mut().enumerate() {
                    let arg: f64 = z.iter().zip(weights).map(|(zj, w)| zj * w[c]).sum();
                    *o = magnitude * arg.sin();
                }
                Ok(out)
            }
            ResidualEval::Sum(parts) => {
                let mut out = [0.0; 3];
                for p in parts {
                    let r = p.evaluate(z)?;
                    for c in 0..3 {
                        out[c] += r[c];
                    }
                }
                Ok(out)
            }
        }
    }
}

/// A ground-truth residual ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualModel {
    eval: ResidualEval,
    pub noise: NoiseSpec,
}

impl ResidualModel {
    pub fn zero() -> Self {
        ResidualModel {
            eval: ResidualEval::Zero,
            noise: NoiseSpec::None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.eval, ResidualEval::Zero)
    }

    /// Replaces the output scale of a network residual.
    pub fn with_scale(mut self, new_scale: f64) -> Self {
        if let ResidualEval::Network { scale, .. } = &mut self.eval {
            *scale = new_scale;
        }
        self
    }

    /// Noise-free residual at input `z`.
    pub fn evaluate(&self, z: &[f64]) -> Result<[f64; 3]> {
        self.eval.evaluate(z)
    }

    /// Sum of two residuals carrying `other`'s noise.
    pub fn plus(self, other: ResidualModel) -> ResidualModel {
        let eval = match (self.eval, other.eval) {
            (ResidualEval::Zero, e) | (e, ResidualEval::Zero) => e,
            (a, b) => ResidualEval::Sum(vec![a, b]),
        };
        ResidualModel {
            eval,
            noise: other.noise,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn noise_is_seeded() {
        let spec = NoiseSpec::Mixture {
            sigma: [0.01; 3],
            outlier_sigma: [0.1; 3],
            outlier_prob: 0.1,
        };
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert_eq!(spec.sample(&mut a), spec.sample(&mut b));
        }
    }

    #[test]
    fn zero_noise_is_exactly_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(NoiseSpec::Gaussian { sigma: [0.0; 3] }.sample(&mut rng), [0.0; 3]);
        assert_eq!(NoiseSpec::None.sample(&mut rng), [0.0; 3]);
    }

    #[test]
    fn constant_bias_ignores_input() {
        let m = GroundTruthResidual::constant([0.0, 0.0, 0.2], NoiseSpec::None)
            .build(5)
            .unwrap();
        assert_eq!(m.evaluate(&[1.0; 5]).unwrap(), [0.0, 0.0, 0.2]);
    }

    #[test]
    fn network_residual_scales() {
        let gt = GroundTruthResidual {
            kind: ResidualKind::Network {
                hidden: 10,
                seed: 3,
                weight_scale: 1.0,
                magnitude: 1.0,
                relative: false,
            },
            noise: NoiseSpec::None,
        };
        let m = gt.build(5).unwrap();
        let z = [0.1, 0.2, -0.3, 0.5, -0.5];
        let a = m.evaluate(&z).unwrap();
        let b = m.clone().with_scale(2.0).evaluate(&z).unwrap();
        for c in 0..3 {
            assert_eq!(b[c], 2.0 * a[c]);
        }
    }

    #[test]
    fn analytic_residual_bounded() {
        let m = GroundTruthResidual {
            kind: ResidualKind::Analytic { magnitude: 0.3 },
            noise: NoiseSpec::None,
        }
        .build(6)
        .unwrap();
        let r = m.evaluate(&[1.0, -2.0, 0.5, 0.1, 3.0, -1.0]).unwrap();
        assert!(r.iter().all(|v| v.abs() <= 0.3));
        assert!(m.evaluate(&[0.0; 5]).is_err());
    }

    #[test]
    fn bad_noise_rejected() {
        let gt = GroundTruthResidual::constant(
            [0.0; 3],
            NoiseSpec::Mixture {
                sigma: [0.01; 3],
                outlier_sigma: [0.1; 3],
                outlier_prob: 1.5,
            },
        );
        assert!(gt.validate().is_err());
    }
}
