//! One staged learning run: stream the reference, keep the horizon history,
//! tune the trainable stage and log per-step metrics.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Mutex, PoisonError};
use std::thread;

use crossbeam_channel::{bounded, Sender, TrySendError};
use serde::{Deserialize, Serialize};

use super::chain::{stage_output, BaseSource, ResidualChain};
use super::history::{HistoryBuffer, HistoryRecord, HistorySnapshot};
use super::measurement::{reference_stack, Costs, Rollout};
use super::metrics::{LowPassState, MetricRecord, UpdateRecord};
use super::warm_start::{check_warm_start, WarmStartSample};
use crate::param_net::ParamVector;
use crate::plants::{ReferenceSource, StepSample, StreamTarget, TrajectorySpec};
use crate::ukf_tuner::{ukf_update, TunerConfig, TunerState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    SimToKin,
    RealToKin,
    RealToSim,
}

impl StageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::SimToKin => "sim-to-kin",
            StageKind::RealToKin => "real-to-kin",
            StageKind::RealToSim => "real-to-sim",
        }
    }

    pub fn base(self) -> BaseSource {
        match self {
            StageKind::RealToSim => BaseSource::SimStream,
            _ => BaseSource::Kinematic,
        }
    }

    pub fn target(self) -> StreamTarget {
        match self {
            StageKind::SimToKin => StreamTarget::Sim,
            _ => StreamTarget::Real,
        }
    }
}

/// How the tuning worker runs alongside the streaming loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutionMode {
    /// Updates run inline at their scheduled step; fully deterministic.
    #[default]
    Interleaved,
    /// Updates run on a worker thread; the streaming loop never waits and
    /// skips a scheduled update while the worker is busy.
    Threaded,
}

fn default_horizon() -> usize {
    20
}

fn default_filter_alpha() -> f64 {
    0.2
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub kind: StageKind,
    #[serde(default)]
    pub name: Option<String>,
    /// Overrides the experiment trajectory.
    #[serde(default)]
    pub trajectory: Option<TrajectorySpec>,
    /// Overrides the trajectory duration, seconds.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub tuner: TunerConfig,
    #[serde(default)]
    pub costs: Costs,
    /// History length `N`.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Steps between updates; defaults to the horizon.
    #[serde(default)]
    pub stride: Option<usize>,
    #[serde(default = "default_filter_alpha")]
    pub filter_alpha: f64,
    /// Keep earlier stages in the base when they pass the warm-start check.
    #[serde(default = "yes")]
    pub warm_start: bool,
    /// Samples used by the warm-start check; defaults to the horizon.
    #[serde(default)]
    pub warm_start_window: Option<usize>,
    /// Half-width of the uniform initial weights; 0 starts from zeros.
    #[serde(default)]
    pub init_scale: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl StageConfig {
    pub fn new(kind: StageKind) -> Self {
        StageConfig {
            kind,
            name: None,
            trajectory: None,
            duration: None,
            tuner: TunerConfig::default(),
            costs: Costs::default(),
            horizon: default_horizon(),
            stride: None,
            filter_alpha: default_filter_alpha(),
            warm_start: true,
            warm_start_window: None,
            init_scale: 0.0,
            seed: None,
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.as_str().to_string())
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        self.costs.validate()?;
        self.tuner.validate()?;
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        if self.stride() == 0 {
            return Err(Error::invalid("stride", "must be >= 1"));
        }
        if self.warm_start_window == Some(0) {
            return Err(Error::invalid("warm_start_window", "must be >= 1"));
        }
        LowPassState::new(self.filter_alpha)?;
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::invalid("init_scale", "must be finite and >= 0"));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid("duration", format!("must be > 0, got {d}")));
            }
        }
        if let Some(t) = &self.trajectory {
            t.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StageOutput {
    /// Input chain (minus rejected priors) with the trained stage frozen.
    pub chain: ResidualChain,
    pub log: Vec<MetricRecord>,
    pub updates: Vec<UpdateRecord>,
    pub samples: Vec<StepSample>,
    /// Outcome of the warm-start check; `None` without prior stages.
    pub warm_start: Option<bool>,
    pub skipped_updates: u64,
    pub final_trace: f64,
}

/// A stage that aborted; logs up to the failure are kept.
#[derive(Debug)]
pub struct StageFailure {
    pub error: Error,
    pub log: Vec<MetricRecord>,
    pub updates: Vec<UpdateRecord>,
    pub samples: Vec<StepSample>,
}

impl fmt::Display for StageFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stage aborted after {} steps and {} updates: {}",
            self.log.len(),
            self.updates.len(),
            self.error
        )
    }
}

impl std::error::Error for StageFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl StageFailure {
    fn bare(error: Error) -> Self {
        StageFailure {
            error,
            log: Vec::new(),
            updates: Vec::new(),
            samples: Vec::new(),
        }
    }
}

/// Parameters visible to the streaming loop.
#[derive(Debug, Clone)]
struct Published {
    params: Arc<ParamVector>,
    update_index: u64,
    innovation_norm: f64,
    trace_p: f64,
}

struct Tuner {
    state: TunerState,
    chain: ResidualChain,
    costs: Costs,
    updates: u64,
}

impl Tuner {
    fn update(&mut self, snap: &HistorySnapshot) -> Result<(Published, UpdateRecord)> {
        let rollout = Rollout::new(snap, &self.chain, self.costs)?;
        let x_ref = reference_stack(snap, self.costs)?;
        let step = ukf_update(&self.state, |p| rollout.measure(p), &x_ref)?;
        self.state = step.state;
        self.updates += 1;
        let d = &step.diagnostics;
        let published = Published {
            params: Arc::new(self.state.estimate.clone()),
            update_index: self.updates,
            innovation_norm: d.innovation_norm,
            trace_p: d.trace_posterior,
        };
        let record = UpdateRecord {
            update_index: self.updates,
            t: snap.last_t().unwrap_or(f64::NAN),
            innovation_norm: d.innovation_norm,
            delta_norm: d.delta_norm,
            trace_p: d.trace_posterior,
            s_condition: d.s_condition,
            p_jitter: d.p_jitter,
            s_jitter: d.s_jitter,
            elapsed_ms: d.elapsed.as_secs_f64() * 1e3,
        };
        Ok((published, record))
    }
}

trait Dispatch {
    fn published(&self) -> Result<Published>;
    /// Hands a snapshot to the tuner; false when it was not accepted.
    fn offer(&mut self, snap: HistorySnapshot) -> Result<bool>;
}

struct Inline<'a> {
    tuner: &'a mut Tuner,
    current: Published,
    updates: &'a mut Vec<UpdateRecord>,
}

impl Dispatch for Inline<'_> {
    fn published(&self) -> Result<Published> {
        Ok(self.current.clone())
    }

    fn offer(&mut self, snap: HistorySnapshot) -> Result<bool> {
        let (p, u) = self.tuner.update(&snap)?;
        self.current = p;
        self.updates.push(u);
        Ok(true)
    }
}

struct Shared {
    current: Mutex<Published>,
    updates: Mutex<Vec<UpdateRecord>>,
    error: Mutex<Option<Error>>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

struct Threaded<'a> {
    tx: Sender<HistorySnapshot>,
    shared: &'a Shared,
}

impl Dispatch for Threaded<'_> {
    fn published(&self) -> Result<Published> {
        if let Some(e) = lock(&self.shared.error).take() {
            return Err(e);
        }
        Ok(lock(&self.shared.current).clone())
    }

    fn offer(&mut self, snap: HistorySnapshot) -> Result<bool> {
        match self.tx.try_send(snap) {
            Ok(()) => Ok(true),
            Err(TrySendError::Full(_)) => Ok(false),
            Err(TrySendError::Disconnected(_)) => Err(lock(&self.shared.error)
                .take()
                .unwrap_or_else(|| Error::invalid("tuner", "tuning worker stopped"))),
        }
    }
}

struct LoopState<'a> {
    label: &'a str,
    chain: &'a ResidualChain,
    filter: LowPassState,
    history: HistoryBuffer,
    stride: usize,
    step: usize,
    last_dispatch: Option<usize>,
    skipped: u64,
    log: Vec<MetricRecord>,
    samples: Vec<StepSample>,
}

impl LoopState<'_> {
    fn step(&mut self, s: StepSample, tuner: &mut dyn Dispatch) -> Result<()> {
        let idx = self.chain.stages.len() - 1;
        let spec = self.chain.stages[idx].spec;
        let base = self.chain.base.rate(&s)?;
        let frozen = self.chain.frozen_sum(&s.z)?;
        let published = tuner.published()?;
        let raw = stage_output(&spec, published.params.as_slice(), &s.z)?;
        let out = self.filter.apply(raw);
        let predicted = [
            base[0] + (frozen[0] + out[0]),
            base[1] + (frozen[1] + out[1]),
            base[2] + (frozen[2] + out[2]),
        ];
        let mut rec = MetricRecord::new(s.t, self.label, s.reference, predicted);
        rec.update_index = published.update_index;
        rec.innovation_norm = published.innovation_norm;
        rec.trace_p = published.trace_p;
        if !rec.h2.is_finite() {
            return Err(Error::NonFinite("prediction"));
        }
        self.log.push(rec);
        self.history.push(HistoryRecord {
            t: s.t,
            z: s.z.clone(),
            base,
            reference: s.reference,
        })?;
        self.samples.push(s);
        let due = self.history.is_full()
            && self
                .last_dispatch
                .is_none_or(|last| self.step - last >= self.stride);
        if due {
            if tuner.offer(self.history.snapshot())? {
                self.last_dispatch = Some(self.step);
            } else {
                self.skipped += 1;
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Runs one stage. `chain_in` holds frozen earlier stages followed by the
/// single trainable stage; the returned chain has that stage frozen.
pub fn run_stage(
    config: &StageConfig,
    chain_in: ResidualChain,
    source: &mut dyn ReferenceSource,
    mode: ExecutionMode,
) -> std::result::Result<StageOutput, StageFailure> {
    config.validate().map_err(StageFailure::bare)?;
    let idx = chain_in.trainable_index().map_err(StageFailure::bare)?;
    let trainable = chain_in.stages[idx].clone();
    let n_in = source.robot().kind().net_input_dim();
    if trainable.spec.n_in != n_in {
        return Err(StageFailure::bare(Error::DimensionMismatch {
            what: "trainable stage input width",
            expected: n_in,
            got: trainable.spec.n_in,
        }));
    }
    trainable.params.check_spec(&trainable.spec).map_err(StageFailure::bare)?;

    // warm-start gate over the first window of the stream
    let mut chain = chain_in;
    let mut pending = VecDeque::new();
    let mut warm = None;
    if idx > 0 {
        let keep = if config.warm_start {
            let window = config.warm_start_window.unwrap_or(config.horizon);
            let mut samples = Vec::with_capacity(window);
            while pending.len() < window {
                match source.next_sample().map_err(StageFailure::bare)? {
                    Some(s) => pending.push_back(s),
                    None => break,
                }
            }
            for s in &pending {
                let base = chain.base.rate(s).map_err(StageFailure::bare)?;
                let f = chain.frozen_sum(&s.z).map_err(StageFailure::bare)?;
                samples.push(WarmStartSample {
                    reference: s.reference,
                    kinematic: base,
                    informed: [base[0] + f[0], base[1] + f[1], base[2] + f[2]],
                });
            }
            check_warm_start(&samples).map_err(StageFailure::bare)?
        } else {
            false
        };
        if !keep {
            chain.stages.drain(..idx);
        }
        log::info!(
            "{}: warm start {}",
            config.label(),
            if keep { "kept prior stages" } else { "dropped prior stages" }
        );
        warm = Some(keep);
    }

    let state = TunerState::new(trainable.params.clone(), &config.tuner, 3 * config.horizon)
        .map_err(StageFailure::bare)?;
    let initial = Published {
        params: Arc::new(trainable.params.clone()),
        update_index: 0,
        innovation_norm: 0.0,
        trace_p: state.trace(),
    };
    let mut tuner = Tuner {
        state,
        chain: chain.clone(),
        costs: config.costs,
        updates: 0,
    };
    let label = config.label();
    let mut ls = LoopState {
        label: &label,
        chain: &chain,
        filter: LowPassState::new(config.filter_alpha).map_err(StageFailure::bare)?,
        history: HistoryBuffer::new(config.horizon).map_err(StageFailure::bare)?,
        stride: config.stride(),
        step: 0,
        last_dispatch: None,
        skipped: 0,
        log: Vec::new(),
        samples: Vec::new(),
    };
    let mut updates = Vec::new();

    let mut drive = |ls: &mut LoopState, d: &mut dyn Dispatch| -> Result<()> {
        while let Some(s) = pending.pop_front() {
            ls.step(s, d)?;
        }
        while let Some(s) = source.next_sample()? {
            ls.step(s, d)?;
        }
        Ok(())
    };

    let outcome = match mode {
        ExecutionMode::Interleaved => {
            let mut d = Inline {
                tuner: &mut tuner,
                current: initial,
                updates: &mut updates,
            };
            drive(&mut ls, &mut d)
        }
        ExecutionMode::Threaded => {
            let shared = Shared {
                current: Mutex::new(initial),
                updates: Mutex::new(Vec::new()),
                error: Mutex::new(None),
            };
            let (tx, rx) = bounded::<HistorySnapshot>(1);
            let result = thread::scope(|scope| {
                let shared = &shared;
                let tuner = &mut tuner;
                let worker = scope.spawn(move || {
                    for snap in rx {
                        match tuner.update(&snap) {
                            Ok((p, u)) => {
                                *lock(&shared.current) = p;
                                lock(&shared.updates).push(u);
                            }
                            Err(e) => {
                                *lock(&shared.error) = Some(e);
                                break;
                            }
                        }
                    }
                });
                let mut d = Threaded { tx, shared };
                let r = drive(&mut ls, &mut d);
                drop(d);
                let joined = worker.join();
                r.and_then(|()| {
                    joined.map_err(|_| Error::invalid("tuner", "tuning worker panicked"))
                })
            });
            updates = std::mem::take(&mut *lock(&shared.updates));
            let late = lock(&shared.error).take();
            result.and_then(|()| late.map_or(Ok(()), Err))
        }
    };

    if let Err(error) = outcome {
        return Err(StageFailure {
            error,
            log: ls.log,
            updates,
            samples: ls.samples,
        });
    }

    let skipped = ls.skipped;
    let (log, samples) = (ls.log, ls.samples);
    let last = chain.stages.len() - 1;
    chain.stages[last].params = tuner.state.estimate.clone();
    chain.freeze_all();
    Ok(StageOutput {
        chain,
        log,
        updates,
        samples,
        warm_start: warm,
        skipped_updates: skipped,
        final_trace: tuner.state.trace(),
    })
}
