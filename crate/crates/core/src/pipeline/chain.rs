//! Base model plus an ordered list of additive residual networks.

use serde::{Deserialize, Serialize};

use crate::param_net::{forward_into, MlpSpec, ParamSnapshot, ParamVector};
use crate::plants::StepSample;
use crate::{Error, Result};

/// Where the chain's base rate comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseSource {
    /// The base kinematic model.
    Kinematic,
    /// The live or recorded simulator stream.
    SimStream,
}

impl BaseSource {
    pub fn rate(self, sample: &StepSample) -> Result<[f64; 3]> {
        match self {
            BaseSource::Kinematic => Ok(sample.kinematic),
            BaseSource::SimStream => sample
                .sim
                .ok_or_else(|| Error::invalid("base", "chain needs a simulator stream but the source has none")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainStage {
    pub label: String,
    pub spec: MlpSpec,
    pub params: ParamVector,
    pub frozen: bool,
    pub seed: u64,
}

impl ChainStage {
    pub fn output(&self, z: &[f64]) -> Result<[f64; 3]> {
        stage_output(&self.spec, self.params.as_slice(), z)
    }
}

pub(crate) fn stage_output(spec: &MlpSpec, params: &[f64], z: &[f64]) -> Result<[f64; 3]> {
    if spec.n_out != 3 {
        return Err(Error::DimensionMismatch {
            what: "stage output",
            expected: 3,
            got: spec.n_out,
        });
    }
    let mut out = [0.0; 3];
    forward_into(params, spec, z, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualChain {
    pub base: BaseSource,
    pub stages: Vec<ChainStage>,
}

impl ResidualChain {
    pub fn new(base: BaseSource) -> Self {
        ResidualChain {
            base,
            stages: Vec::new(),
        }
    }

    pub fn with_stage(mut self, stage: ChainStage) -> Self {
        self.stages.push(stage);
        self
    }

    /// Index of the single trainable stage, which must be the last one.
    pub fn trainable_index(&self) -> Result<usize> {
        let trainable: Vec<usize> = self
            .stages
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.frozen)
            .map(|(i, _)| i)
            .collect();
        match trainable.as_slice() {
            [i] if *i + 1 == self.stages.len() => Ok(*i),
            [_] => Err(Error::invalid("chain", "the trainable stage must be the last stage")),
            other => Err(Error::invalid(
                "chain",
                format!("exactly one trainable stage required, found {}", other.len()),
            )),
        }
    }

    /// Sum of all frozen stage outputs, in stage order, starting from zero.
    pub fn frozen_sum(&self, z: &[f64]) -> Result<[f64; 3]> {
        let mut acc = [0.0; 3];
        for s in self.stages.iter().filter(|s| s.frozen) {
            let o = s.output(z)?;
            for c in 0..3 {
                acc[c] += o[c];
            }
        }
        Ok(acc)
    }

    pub fn freeze_all(&mut self) {
        for s in &mut self.stages {
            s.frozen = true;
        }
    }

    pub fn snapshot(&self) -> Result<ChainSnapshot> {
        Ok(ChainSnapshot {
            base: self.base,
            stages: self
                .stages
                .iter()
                .map(|s| {
                    Ok(StageSnapshot {
                        label: s.label.clone(),
                        frozen: s.frozen,
                        params: ParamSnapshot::new(s.spec, s.seed, s.params.clone())?,
                    })
                })
                .collect::<Result<_>>()?,
        })
    }
}

/// `base_rate + Σ stage outputs`; the stage outputs are summed first, in
/// order, and then added to the base.
pub fn chain_eval(chain: &ResidualChain, z: &[f64], base_rate: [f64; 3]) -> Result<[f64; 3]> {
    let mut acc = [0.0; 3];
    for s in &chain.stages {
        let o = s.output(z)?;
        for c in 0..3 {
            acc[c] += o[c];
        }
    }
    Ok([base_rate[0] + acc[0], base_rate[1] + acc[1], base_rate[2] + acc[2]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSnapshot {
    pub label: String,
    pub frozen: bool,
    pub params: ParamSnapshot,
}

/// Serialized chain, stage by stage with specs and frozen flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSnapshot {
    pub base: BaseSource,
    pub stages: Vec<StageSnapshot>,
}

impl ChainSnapshot {
    pub fn into_chain(self) -> ResidualChain {
        ResidualChain {
            base: self.base,
            stages: self
                .stages
                .into_iter()
                .map(|s| ChainStage {
                    label: s.label,
                    spec: s.params.header.spec(),
                    seed: s.params.header.seed,
                    params: s.params.values,
                    frozen: s.frozen,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_net::init_params;

    fn stage(seed: u64, frozen: bool) -> ChainStage {
        let spec = MlpSpec::DIFF_DRIVE;
        ChainStage {
            label: format!("s{seed}"),
            spec,
            params: init_params(&spec, seed, 0.5).unwrap(),
            frozen,
            seed,
        }
    }

    const Z: [f64; 5] = [0.1, -0.2, 0.3, 0.5, -0.4];

    #[test]
    fn empty_chain_is_base() {
        let c = ResidualChain::new(BaseSource::Kinematic);
        assert_eq!(chain_eval(&c, &Z, [1.0, 2.0, 3.0]).unwrap(), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_stage_is_base() {
        let spec = MlpSpec::DIFF_DRIVE;
        let c = ResidualChain::new(BaseSource::Kinematic).with_stage(ChainStage {
            label: "zero".into(),
            spec,
            params: ParamVector::zeros(198),
            frozen: false,
            seed: 0,
        });
        assert_eq!(chain_eval(&c, &Z, [1.0, 2.0, 3.0]).unwrap(), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_stages_add() {
        let (a, b) = (stage(1, true), stage(2, false));
        let p = a.output(&Z).unwrap();
        let q = b.output(&Z).unwrap();
        let c = ResidualChain::new(BaseSource::Kinematic).with_stage(a).with_stage(b);
        let got = chain_eval(&c, &Z, [0.5, 0.0, -1.0]).unwrap();
        assert_eq!(got, [0.5 + (p[0] + q[0]), 0.0 + (p[1] + q[1]), -1.0 + (p[2] + q[2])]);
    }

    #[test]
    fn trainable_stage_rules() {
        let c = ResidualChain::new(BaseSource::Kinematic)
            .with_stage(stage(1, true))
            .with_stage(stage(2, false));
        assert_eq!(c.trainable_index().unwrap(), 1);
        let two = c.clone().with_stage(stage(3, false));
        assert!(two.trainable_index().is_err());
        let first = ResidualChain::new(BaseSource::Kinematic)
            .with_stage(stage(1, false))
            .with_stage(stage(2, true));
        assert!(first.trainable_index().is_err());
        assert!(ResidualChain::new(BaseSource::Kinematic).trainable_index().is_err());
    }

    #[test]
    fn width_mismatch() {
        let c = ResidualChain::new(BaseSource::Kinematic).with_stage(stage(1, false));
        assert!(chain_eval(&c, &[0.0; 6], [0.0; 3]).is_err());
    }

    #[test]
    fn snapshot_roundtrip() {
        let c = ResidualChain::new(BaseSource::SimStream)
            .with_stage(stage(1, true))
            .with_stage(stage(2, false));
        let json = serde_json::to_string(&c.snapshot().unwrap()).unwrap();
        let back: ChainSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_chain(), c);
    }
}
