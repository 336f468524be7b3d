//! Truncated stochastic SSPRK3 integrator, the cutoff `θ_R`, and the
//! trajectory loop.
//!
//! With `L(g) = Δt 𝒜_R(g) g + Σ_i ΔW^i 𝒢_i g`, where the drift operator and
//! the cutoff are re-evaluated at each stage state, one step is
//!
//! ```text
//! g¹      = gⁿ + L(gⁿ)
//! g²      = ¾ gⁿ + ¼ (g¹ + L(g¹))
//! gⁿ⁺¹    = ⅓ gⁿ + ⅔ (g² + L(g²))
//! ```
//!
//! with the same increments `ΔW` in all three stages. It is evaluated in the
//! algebraically identical increment form `g² = gⁿ + ¼(L₀ + L₁)`,
//! `gⁿ⁺¹ = gⁿ + (L₀ + L₁)/6 + ⅔ L₂`, so a step with vanishing `L` returns
//! `gⁿ` bit for bit.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{record_for, DiagnosticsRecord};
use crate::error::{Result, StqgError};
use crate::model::{DriftTerms, ModelData, State};
use crate::noise::BrownianPath;
use crate::torus::Field;
use crate::transport::{cfl_number, drift_with_theta, TransportConfig};

/// Third argument of the cutoff monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMonitor {
    /// `‖∇b‖∞ + ‖∇u‖∞ + ‖q‖∞`
    #[default]
    Q,
    /// `‖∇b‖∞ + ‖∇u‖∞ + ‖∇q‖∞`
    GradQ,
}

/// Truncation radius `R` (possibly `+∞`) and monitor choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    radius: f64,
    pub monitor: ThetaMonitor,
}

impl Truncation {
    pub fn new(radius: f64, monitor: ThetaMonitor) -> Result<Self> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(StqgError::InvalidArgument(format!(
                "truncation radius {radius} must be positive"
            )));
        }
        Ok(Truncation { radius, monitor })
    }

    /// `R = +∞`: the untruncated system.
    pub fn none() -> Self {
        Truncation {
            radius: f64::INFINITY,
            monitor: ThetaMonitor::Q,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn is_active(&self) -> bool {
        self.radius.is_finite()
    }
}

/// Quintic cutoff profile: 1 on `z ≤ R`, 0 on `z ≥ R + 1`, and
/// `1 − (6s⁵ − 15s⁴ + 10s³)` with `s = z − R` in between.
pub fn cutoff(z: f64, radius: f64) -> f64 {
    let s = z - radius;
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * s * (s * (6.0 * s - 15.0) + 10.0)
    }
}

/// Cutoff monitor `z` of a state.
pub fn monitor_value(state: &State, monitor: ThetaMonitor) -> f64 {
    let (gb, gu, q) = crate::diagnostics::bkm_monitors(state);
    match monitor {
        ThetaMonitor::Q => gb + gu + q,
        ThetaMonitor::GradQ => gb + gu + crate::diagnostics::sup_gradient(&state.q),
    }
}

/// `θ_R` of a state; identically 1 for `R = +∞`.
pub fn theta_r(state: &State, truncation: &Truncation) -> Result<f64> {
    if !truncation.is_active() {
        return Ok(1.0);
    }
    let z = monitor_value(state, truncation.monitor);
    if !z.is_finite() {
        return Err(StqgError::NonFinite("cutoff monitor".into()));
    }
    Ok(cutoff(z, truncation.radius))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub truncation: Truncation,
    pub transport: TransportConfig,
    pub drift: DriftTerms,
}

impl StepperConfig {
    pub fn new(dt: f64) -> Result<Self> {
        let cfg = StepperConfig {
            dt,
            truncation: Truncation::none(),
            transport: TransportConfig::default(),
            drift: DriftTerms::Full,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(StqgError::InvalidArgument(format!("dt = {} must be positive", self.dt)));
        }
        self.transport.validate()
    }
}

/// Result of one step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub state: State,
    /// `θ_R` at the three stage states.
    pub thetas: [f64; 3],
    /// Courant number at the first stage.
    pub cfl: f64,
}

/// `L(g)` at a stage state.
fn stage_increment(st: &State, dw: &[f64], cfg: &StepperConfig, data: &ModelData) -> Result<(Field, Field, f64)> {
    let theta = match cfg.drift {
        DriftTerms::Full => theta_r(st, &cfg.truncation)?,
        _ => 0.0,
    };
    let (mut lb, mut lq, _) = drift_with_theta(st, data, theta, cfg.drift, &cfg.transport);
    if cfg.drift != DriftTerms::Off {
        lb = lb.scaled(cfg.dt);
        lq = lq.scaled(cfg.dt);
    }
    for (i, &w) in dw.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let (gb, gq) = data.noise.apply_g_unchecked(i, &st.b, &st.q, &cfg.transport);
        lb.axpy(w, &gb)?;
        lq.axpy(w, &gq)?;
    }
    Ok((lb, lq, theta))
}

fn combine(base: &Field, terms: &[(f64, &Field)]) -> Field {
    let mut out = base.clone();
    for k in 0..out.values().len() {
        let mut acc = 0.0;
        for (c, f) in terms {
            acc += c * f.values()[k];
        }
        out.values_mut()[k] += acc;
    }
    out
}

fn stage_state(b: Field, q: Field, data: &ModelData, t: f64, stage: usize) -> Result<State> {
    if !(b.is_finite() && q.is_finite()) {
        return Err(StqgError::BlowUp { stage });
    }
    State::new(b, q, &data.f, t)
}

/// One SSPRK3 step with increments `dw` (one per noise field).
pub fn ssprk3_step(state: &State, dw: &[f64], cfg: &StepperConfig, data: &ModelData) -> Result<StepReport> {
    cfg.validate()?;
    state.spec().ensure_same(&data.spec)?;
    if dw.len() != data.noise.len() {
        return Err(StqgError::InvalidArgument(format!(
            "{} increments for {} noise fields",
            dw.len(),
            data.noise.len()
        )));
    }
    if dw.iter().any(|w| !w.is_finite()) {
        return Err(StqgError::NonFinite("Brownian increments".into()));
    }
    let u_max = state.u.faces.as_ref().map_or(0.0, |f| f.max_speed());
    let cfl = cfl_number(state.spec(), cfg.dt, u_max, &data.noise.sup_speeds(), dw);

    let t1 = state.t + cfg.dt;
    let (lb0, lq0, th0) = stage_increment(state, dw, cfg, data)?;
    let s1 = stage_state(
        combine(&state.b, &[(1.0, &lb0)]),
        combine(&state.q, &[(1.0, &lq0)]),
        data,
        t1,
        1,
    )?;
    let (lb1, lq1, th1) = stage_increment(&s1, dw, cfg, data)?;
    let s2 = stage_state(
        combine(&state.b, &[(0.25, &lb0), (0.25, &lb1)]),
        combine(&state.q, &[(0.25, &lq0), (0.25, &lq1)]),
        data,
        state.t + 0.5 * cfg.dt,
        2,
    )?;
    let (lb2, lq2, th2) = stage_increment(&s2, dw, cfg, data)?;
    let sixth = 1.0 / 6.0;
    let two_thirds = 2.0 / 3.0;
    let next = stage_state(
        combine(&state.b, &[(sixth, &lb0), (sixth, &lb1), (two_thirds, &lb2)]),
        combine(&state.q, &[(sixth, &lq0), (sixth, &lq1), (two_thirds, &lq2)]),
        data,
        t1,
        3,
    )?;
    Ok(StepReport {
        state: next,
        thetas: [th0, th1, th2],
        cfl,
    })
}

// ---------------------------------------------------------------------------
// Trajectories

/// Early-termination thresholds and output cadence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Snapshot every `snapshot_stride` steps (0: only first and last).
    pub snapshot_stride: usize,
    /// Threshold `M` on `∫₀ᵗ (‖∇b‖∞ + ‖q‖∞) ds`.
    pub bkm_integral_max: f64,
    /// Threshold `N` on `‖b‖_{3,2} + ‖q‖_{2,2}`.
    pub sobolev_max: f64,
    /// Courant number above which a warning is reported.
    pub cfl_max: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            snapshot_stride: 0,
            bkm_integral_max: f64::INFINITY,
            sobolev_max: 1e6,
            cfl_max: 0.4,
        }
    }
}

/// Why a trajectory stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlowUpReason {
    BkmIntegral { value: f64, threshold: f64 },
    Sobolev { value: f64, threshold: f64 },
    NonFinite { stage: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    #[serde(rename = "BLOWUP")]
    BlowUp { step: usize, reason: BlowUpReason },
}

/// Receives snapshots and per-step diagnostics of a trajectory.
pub trait TrajectorySink {
    fn snapshot(&mut self, step: usize, state: &State) -> Result<()>;
    fn record(&mut self, record: &DiagnosticsRecord) -> Result<()>;
    fn cfl_warning(&mut self, _step: usize, _cfl: f64) -> Result<()> {
        Ok(())
    }
}

/// Sink that keeps everything in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub snapshots: Vec<(usize, State)>,
    pub records: Vec<DiagnosticsRecord>,
    pub cfl_warnings: Vec<(usize, f64)>,
}

impl TrajectorySink for MemorySink {
    fn snapshot(&mut self, step: usize, state: &State) -> Result<()> {
        self.snapshots.push((step, state.clone()));
        Ok(())
    }

    fn record(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }

    fn cfl_warning(&mut self, step: usize, cfl: f64) -> Result<()> {
        self.cfl_warnings.push((step, cfl));
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub status: RunStatus,
    pub steps_taken: usize,
    pub final_state: State,
    pub last_record: DiagnosticsRecord,
}

fn threshold_crossing(rec: &DiagnosticsRecord, opts: &RunOptions) -> Option<BlowUpReason> {
    if rec.bkm_integral >= opts.bkm_integral_max || rec.bkm_integral.is_nan() {
        return Some(BlowUpReason::BkmIntegral {
            value: rec.bkm_integral,
            threshold: opts.bkm_integral_max,
        });
    }
    let sob = rec.sobolev_b3 + rec.sobolev_q2;
    if sob >= opts.sobolev_max || sob.is_nan() {
        return Some(BlowUpReason::Sobolev {
            value: sob,
            threshold: opts.sobolev_max,
        });
    }
    None
}

/// Advances `initial` over every fine interval of `path`, whose fine step
/// must equal `cfg.dt`.
///
/// A record is emitted for every step (step 0 included) and a snapshot at
/// step 0, every `snapshot_stride` steps and at the last step. The run stops
/// with [`RunStatus::BlowUp`] at the first step whose monitors reach a
/// threshold, or whose stages turn non-finite.
pub fn run(
    initial: &State,
    path: &BrownianPath,
    cfg: &StepperConfig,
    data: &ModelData,
    opts: &RunOptions,
    sink: &mut dyn TrajectorySink,
) -> Result<RunSummary> {
    cfg.validate()?;
    if path.n_noise() != data.noise.len() {
        return Err(StqgError::InvalidArgument(format!(
            "path has {} noise indices, model has {}",
            path.n_noise(),
            data.noise.len()
        )));
    }
    if (path.fine_dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(StqgError::InvalidArgument(format!(
            "path step {} differs from dt {}",
            path.fine_dt(),
            cfg.dt
        )));
    }
    let n = path.n_fine();
    let mut state = initial.clone();
    let mut rec = record_for(0, &state, data, &cfg.truncation, 0.0)?;
    sink.record(&rec)?;
    sink.snapshot(0, &state)?;
    if let Some(reason) = threshold_crossing(&rec, opts) {
        return Ok(RunSummary {
            status: RunStatus::BlowUp { step: 0, reason },
            steps_taken: 0,
            final_state: state,
            last_record: rec,
        });
    }
    for m in 0..n {
        let step = m + 1;
        let dw = path.fine_increments(m);
        let report = match ssprk3_step(&state, &dw, cfg, data) {
            Ok(r) => r,
            Err(StqgError::BlowUp { stage }) => {
                return Ok(RunSummary {
                    status: RunStatus::BlowUp {
                        step,
                        reason: BlowUpReason::NonFinite { stage },
                    },
                    steps_taken: m,
                    final_state: state,
                    last_record: rec,
                });
            }
            Err(e) => return Err(e),
        };
        if report.cfl > opts.cfl_max {
            sink.cfl_warning(step, report.cfl)?;
        }
        state = report.state;
        let integrand_prev = rec.sup_grad_b + rec.sup_q;
        let partial = rec.bkm_integral;
        let mut next = record_for(step, &state, data, &cfg.truncation, 0.0)?;
        next.bkm_integral = partial + 0.5 * cfg.dt * (integrand_prev + next.sup_grad_b + next.sup_q);
        rec = next;
        sink.record(&rec)?;
        let crossing = threshold_crossing(&rec, opts);
        let stride_hit = opts.snapshot_stride > 0 && step % opts.snapshot_stride == 0;
        if stride_hit || step == n || crossing.is_some() {
            sink.snapshot(step, &state)?;
        }
        if let Some(reason) = crossing {
            return Ok(RunSummary {
                status: RunStatus::BlowUp { step, reason },
                steps_taken: step,
                final_state: state,
                last_record: rec,
            });
        }
    }
    Ok(RunSummary {
        status: RunStatus::Completed,
        steps_taken: n,
        final_state: state,
        last_record: rec,
    })
}
