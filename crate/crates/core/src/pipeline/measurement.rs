//! Teacher-forced measurement stacks over the horizon history.

use serde::{Deserialize, Serialize};

use super::chain::{stage_output, ResidualChain};
use super::history::HistorySnapshot;
use crate::param_net::MlpSpec;
use crate::ukf_tuner::MeasurementStack;
use crate::{Error, Result};

/// Per-channel cost weights `(C_ẋ, C_ẏ, C_Θ̇ | C_ż)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Costs(pub [f64; 3]);

impl Default for Costs {
    fn default() -> Self {
        Costs([1.0; 3])
    }
}

impl Costs {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|c| *c > 0.0 && c.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("costs", format!("all costs must be > 0, got {:?}", self.0)))
        }
    }
}

/// Reference rates of a full snapshot, cost-weighted, timestep-major.
pub fn reference_stack(snapshot: &HistorySnapshot, costs: Costs) -> Result<MeasurementStack> {
    snapshot.ensure_full()?;
    let mut out = Vec::with_capacity(3 * snapshot.len());
    for r in snapshot.records() {
        for c in 0..3 {
            out.push(r.reference[c] * costs.0[c]);
        }
    }
    Ok(MeasurementStack(out))
}

/// Precomputed rollout for one snapshot: base and frozen contributions are
/// fixed, only the trainable stage varies between sigma points.
#[derive(Debug, Clone)]
pub struct Rollout {
    spec: MlpSpec,
    costs: Costs,
    /// `(z, base, frozen_sum)` per record.
    rows: Vec<(Vec<f64>, [f64; 3], [f64; 3])>,
}

impl Rollout {
    pub fn new(snapshot: &HistorySnapshot, chain: &ResidualChain, costs: Costs) -> Result<Self> {
        snapshot.ensure_full()?;
        costs.validate()?;
        let idx = chain.trainable_index()?;
        let spec = chain.stages[idx].spec;
        let rows = snapshot
            .records()
            .iter()
            .map(|r| Ok((r.z.clone(), r.base, chain.frozen_sum(&r.z)?)))
            .collect::<Result<_>>()?;
        Ok(Rollout { spec, costs, rows })
    }

    pub fn len(&self) -> usize {
        3 * self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn measure(&self, params: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        for (z, base, frozen) in &self.rows {
            let t = stage_output(&self.spec, params, z)?;
            for c in 0..3 {
                out.push((base[c] + (frozen[c] + t[c])) * self.costs.0[c]);
            }
        }
        Ok(out)
    }
}

/// Predicted stack with the trainable stage set to `params`.
pub fn build_measurement(
    snapshot: &HistorySnapshot,
    params: &[f64],
    chain: &ResidualChain,
    costs: Costs,
) -> Result<MeasurementStack> {
    Rollout::new(snapshot, chain, costs)?
        .measure(params)
        .map(MeasurementStack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_net::{init_params, ParamVector};
    use crate::pipeline::chain::{chain_eval, BaseSource, ChainStage};
    use crate::pipeline::history::{HistoryBuffer, HistoryRecord};
    use proptest::prelude::*;

    fn chain(trainable_seed: u64, frozen: bool) -> ResidualChain {
        let spec = MlpSpec::DIFF_DRIVE;
        let mut c = ResidualChain::new(BaseSource::Kinematic);
        if frozen {
            c = c.with_stage(ChainStage {
                label: "prior".into(),
                spec,
                params: init_params(&spec, 77, 0.3).unwrap(),
                frozen: true,
                seed: 77,
            });
        }
        c.with_stage(ChainStage {
            label: "train".into(),
            spec,
            params: init_params(&spec, trainable_seed, 0.3).unwrap(),
            frozen: false,
            seed: trainable_seed,
        })
    }

    fn history(n: usize, offset: f64) -> HistorySnapshot {
        let mut h = HistoryBuffer::new(n).unwrap();
        for k in 0..n {
            let x = k as f64 * 0.1;
            h.push(HistoryRecord {
                t: offset + x,
                z: vec![x.sin(), x.cos(), 0.1 * x, 0.5, -0.5],
                base: [0.1 * x, 0.2, -x],
                reference: [x, 0.3 * x, 1.0],
            })
            .unwrap();
        }
        h.snapshot()
    }

    #[test]
    fn not_full_is_an_error() {
        let mut h = HistoryBuffer::new(3).unwrap();
        h.push(HistoryRecord {
            t: 0.0,
            z: vec![0.0; 5],
            base: [0.0; 3],
            reference: [0.0; 3],
        })
        .unwrap();
        let c = chain(1, false);
        let p = c.stages[0].params.clone();
        assert!(matches!(
            build_measurement(&h.snapshot(), p.as_slice(), &c, Costs::default()),
            Err(Error::HistoryNotFull { have: 1, need: 3 })
        ));
    }

    #[test]
    fn unit_costs_concatenate_chain_predictions() {
        let c = chain(3, true);
        let snap = history(5, 0.0);
        let p = c.stages[1].params.clone();
        let stack = build_measurement(&snap, p.as_slice(), &c, Costs::default()).unwrap();
        let mut want = Vec::new();
        for r in snap.records() {
            want.extend(chain_eval(&c, &r.z, r.base).unwrap());
        }
        assert_eq!(stack.0, want);
    }

    #[test]
    fn zero_truth_matches_reference() {
        let spec = MlpSpec::DIFF_DRIVE;
        let c = ResidualChain::new(BaseSource::Kinematic).with_stage(ChainStage {
            label: "t".into(),
            spec,
            params: ParamVector::zeros(spec.param_count()),
            frozen: false,
            seed: 0,
        });
        let mut h = HistoryBuffer::new(4).unwrap();
        for k in 0..4 {
            let r = [k as f64, 0.5, -0.25];
            h.push(HistoryRecord {
                t: k as f64,
                z: vec![0.1; 5],
                base: r,
                reference: r,
            })
            .unwrap();
        }
        let snap = h.snapshot();
        let pred = build_measurement(&snap, c.stages[0].params.as_slice(), &c, Costs::default()).unwrap();
        assert_eq!(pred, reference_stack(&snap, Costs::default()).unwrap());
    }

    #[test]
    fn doubling_one_cost_doubles_that_channel() {
        let c = chain(5, false);
        let snap = history(6, 0.0);
        let p = c.stages[0].params.as_slice();
        let a = build_measurement(&snap, p, &c, Costs([1.0, 1.0, 1.0])).unwrap();
        let b = build_measurement(&snap, p, &c, Costs([2.0, 1.0, 1.0])).unwrap();
        let ra = reference_stack(&snap, Costs([1.0, 1.0, 1.0])).unwrap();
        let rb = reference_stack(&snap, Costs([2.0, 1.0, 1.0])).unwrap();
        for i in 0..a.len() {
            let f = if i % 3 == 0 { 2.0 } else { 1.0 };
            assert_eq!(b.0[i], f * a.0[i]);
            assert_eq!(rb.0[i], f * ra.0[i]);
        }
    }

    #[test]
    fn bad_costs_rejected() {
        assert!(Costs([1.0, 0.0, 1.0]).validate().is_err());
        assert!(Costs([1.0, -1.0, 1.0]).validate().is_err());
    }

    proptest! {
        #[test]
        fn stacks_ignore_time_and_pose(offset in 0.0f64..100.0, seed in 0u64..1000) {
            // records carry no pose; shifting the start changes nothing
            let c = chain(seed, true);
            let p = c.stages[1].params.clone();
            let a = build_measurement(&history(5, 0.0), p.as_slice(), &c, Costs::default()).unwrap();
            let b = build_measurement(&history(5, offset), p.as_slice(), &c, Costs::default()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn common_cost_scale(k in 0.1f64..10.0, seed in 0u64..1000) {
            let c = chain(seed, false);
            let snap = history(4, 0.0);
            let p = c.stages[0].params.as_slice();
            let one = Costs::default();
            let kk = Costs([k; 3]);
            let (a, b) = (build_measurement(&snap, p, &c, one).unwrap(), build_measurement(&snap, p, &c, kk).unwrap());
            let (ra, rb) = (reference_stack(&snap, one).unwrap(), reference_stack(&snap, kk).unwrap());
            for i in 0..a.len() {
                prop_assert_eq!(b.0[i], a.0[i] * k);
                let innov_a = ra.0[i] - a.0[i];
                let innov_b = rb.0[i] - b.0[i];
                prop_assert!((innov_b - k * innov_a).abs() <= 1e-12 * (1.0 + rb.0[i].abs() + b.0[i].abs()));
            }
        }
    }
}
