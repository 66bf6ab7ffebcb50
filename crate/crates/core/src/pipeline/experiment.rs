//! A sequence of stages over synthetic sim/real reference plants.

use std::fmt;
use std::time::{Duration, Instant};

use super::chain::{ChainStage, ResidualChain};
use super::stage::{run_stage, ExecutionMode, StageConfig, StageFailure, StageKind, StageOutput};
use crate::param_net::init_params;
use crate::plants::{
    derive_seed, resolve_relative, GroundTruthResidual, Robot, StreamTarget, SyntheticSource, TrajectorySpec,
};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub robot: Robot,
    /// Residual the simulator carries over the kinematic model.
    pub sim_residual: GroundTruthResidual,
    /// Residual the real plant carries on top of the simulator's.
    pub real_residual: GroundTruthResidual,
    pub trajectory: TrajectorySpec,
    pub stages: Vec<StageConfig>,
    pub seed: u64,
    pub mode: ExecutionMode,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.sim_residual.validate()?;
        self.real_residual.validate()?;
        self.trajectory.validate()?;
        if self.stages.is_empty() {
            return Err(crate::Error::invalid("stages", "at least one stage is required"));
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.validate()?;
            let traj = self.stage_trajectory(i);
            traj.validate()?;
            if !traj.supports(self.robot.kind()) {
                return Err(crate::Error::Unsupported(format!(
                    "stage {}: trajectory {:?} on {}",
                    s.label(),
                    traj.kind,
                    self.robot.kind().as_str()
                )));
            }
        }
        Ok(())
    }

    pub fn stage_trajectory(&self, index: usize) -> TrajectorySpec {
        let s = &self.stages[index];
        let mut t = s.trajectory.unwrap_or(self.trajectory);
        if let Some(d) = s.duration {
            t.duration = d;
        }
        t
    }

    /// Seed for stage `index`: its own if set, else derived from the
    /// experiment seed.
    pub fn stage_seed(&self, index: usize) -> u64 {
        self.stages[index]
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, 100 + index as u64))
    }
}

#[derive(Debug, Clone)]
pub struct StageResult {
    pub index: usize,
    pub label: String,
    pub kind: StageKind,
    pub target: StreamTarget,
    pub has_sim: bool,
    pub output: StageOutput,
    pub wall_clock: Duration,
}

#[derive(Debug)]
pub struct ExperimentFailure {
    pub completed: Vec<StageResult>,
    pub index: usize,
    pub label: String,
    pub failure: StageFailure,
}

impl fmt::Display for ExperimentFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} ({}): {}", self.index, self.label, self.failure)
    }
}

impl std::error::Error for ExperimentFailure {}

/// Frozen stages a new stage of `kind` may build on.
fn priors(kind: StageKind, done: &[StageResult]) -> Vec<ChainStage> {
    let from = match kind {
        StageKind::SimToKin => return Vec::new(),
        StageKind::RealToKin => StageKind::SimToKin,
        StageKind::RealToSim => StageKind::RealToKin,
    };
    done.iter()
        .filter(|r| r.kind == from)
        .filter_map(|r| r.output.chain.stages.last().cloned())
        .collect()
}

/// Runs every stage in order. `on_stage` sees each result as it completes.
///
/// Relative residual magnitudes are resolved once against the experiment
/// trajectory, so every stage sees the same plants.
pub fn run_experiment(
    spec: &ExperimentSpec,
    mut on_stage: impl FnMut(&StageResult) -> Result<()>,
) -> std::result::Result<Vec<StageResult>, ExperimentFailure> {
    let mut done: Vec<StageResult> = Vec::new();
    let plants = resolve_relative(&spec.sim_residual, &spec.robot, &spec.trajectory).and_then(|sim| {
        Ok((sim, resolve_relative(&spec.real_residual, &spec.robot, &spec.trajectory)?))
    });
    let (sim_gt, real_gt) = match plants {
        Ok(p) => p,
        Err(e) => {
            return Err(ExperimentFailure {
                completed: Vec::new(),
                index: 0,
                label: spec.stages.first().map(|s| s.label()).unwrap_or_default(),
                failure: StageFailure {
                    error: e,
                    log: Vec::new(),
                    updates: Vec::new(),
                    samples: Vec::new(),
                },
            })
        }
    };
    for (index, cfg) in spec.stages.iter().enumerate() {
        let label = cfg.label();
        let fail = |done: Vec<StageResult>, failure: StageFailure| ExperimentFailure {
            completed: done,
            index,
            label: label.clone(),
            failure,
        };
        let started = Instant::now();
        let seed = spec.stage_seed(index);
        let net = spec.robot.kind().net_spec();
        let traj = spec.stage_trajectory(index);
        let needs_sim = cfg.kind == StageKind::RealToSim;
        let setup = (|| -> Result<(ResidualChain, SyntheticSource)> {
            let params = init_params(&net, seed, cfg.init_scale)?;
            let mut chain = ResidualChain::new(cfg.kind.base());
            for p in priors(cfg.kind, &done) {
                chain = chain.with_stage(p);
            }
            chain = chain.with_stage(ChainStage {
                label: label.clone(),
                spec: net,
                params,
                frozen: false,
                seed,
            });
            let source = SyntheticSource::new(
                spec.robot.clone(),
                traj,
                &sim_gt,
                &real_gt,
                cfg.kind.target(),
                needs_sim,
                derive_seed(spec.seed, 200 + index as u64),
            )?;
            Ok((chain, source))
        })();
        let (chain, mut source) = match setup {
            Ok(v) => v,
            Err(e) => {
                return Err(fail(
                    done,
                    StageFailure {
                        error: e,
                        log: Vec::new(),
                        updates: Vec::new(),
                        samples: Vec::new(),
                    },
                ))
            }
        };
        log::info!("stage {index} ({label}): {} steps", source.steps());
        let output = match run_stage(cfg, chain, &mut source, spec.mode) {
            Ok(o) => o,
            Err(f) => return Err(fail(done, f)),
        };
        let result = StageResult {
            index,
            label: label.clone(),
            kind: cfg.kind,
            target: cfg.kind.target(),
            has_sim: needs_sim,
            output,
            wall_clock: started.elapsed(),
        };
        if let Err(e) = on_stage(&result) {
            let StageOutput {
                log, updates, samples, ..
            } = result.output;
            return Err(fail(
                done,
                StageFailure {
                    error: e,
                    log,
                    updates,
                    samples,
                },
            ));
        }
        done.push(result);
    }
    Ok(done)
}
