//! Strong local-error and Stratonovich-compatibility experiments for the
//! stochastic SSPRK3 step.
//!
//! Paths are indexed by realization id and evaluated in parallel; every
//! reduction runs over fixed chunks in realization order, so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StqgError};
use crate::model::{DriftTerms, ModelData, State};
use crate::noise::{sample_path, BrownianPath, NormalStream};
use crate::stepper::{ssprk3_step, StepperConfig};
use crate::torus::Field;

const CHUNK: usize = 64;

/// Squared `L²` distance `‖b₁ − b₂‖² + ‖q₁ − q₂‖²`.
pub fn squared_distance(a: &State, b: &State) -> f64 {
    let area = a.spec().cell_area();
    let d = |x: &Field, y: &Field| -> f64 {
        x.values()
            .iter()
            .zip(y.values())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
    };
    (d(&a.b, &b.b) + d(&a.q, &b.q)) * area
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Advances `state` over every fine interval of `path` with step `dt`.
/// Returns `None` if a stage turns non-finite.
fn advance(state: &State, path: &BrownianPath, cfg: &StepperConfig, data: &ModelData) -> Result<Option<State>> {
    let mut cfg = *cfg;
    cfg.dt = path.fine_dt();
    let mut s = state.clone();
    for m in 0..path.n_fine() {
        match ssprk3_step(&s, &path.fine_increments(m), &cfg, data) {
            Ok(r) => s = r.state,
            Err(StqgError::BlowUp { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    Ok(Some(s))
}

fn validate_ladder(dt_list: &[f64]) -> Result<()> {
    if dt_list.is_empty() {
        return Err(StqgError::InvalidArgument("empty dt list".into()));
    }
    for w in dt_list.windows(2) {
        if (w[1] - 0.5 * w[0]).abs() > 1e-12 * w[0] {
            return Err(StqgError::InvalidArgument(format!(
                "dt list must halve at every entry ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if dt_list.iter().any(|dt| !(dt.is_finite() && *dt > 0.0)) {
        return Err(StqgError::InvalidArgument("dt values must be positive".into()));
    }
    Ok(())
}

/// Local-error experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalErrorConfig {
    /// Halving ladder of coarse steps.
    pub dt_list: Vec<f64>,
    pub n_paths: usize,
    /// Extra halvings of the reference trajectory (at least 4).
    pub ref_level: u32,
    pub seed: u64,
    /// Run every sample with identically zero increments.
    #[serde(default)]
    pub zero_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalErrorRow {
    pub dt: f64,
    pub mean_sq_error: f64,
    pub stderr: f64,
    pub n_effective: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalErrorTable {
    pub rows: Vec<LocalErrorRow>,
    /// Mean squared distance between the reference and a once-more refined
    /// reference, relative to the coarsest measured error.
    pub reference_ratio: f64,
}

impl LocalErrorTable {
    pub fn excluded_fraction(&self) -> f64 {
        let ex: usize = self.rows.iter().map(|r| r.excluded).sum();
        let all: usize = self.rows.iter().map(|r| r.excluded + r.n_effective).sum();
        if all == 0 {
            0.0
        } else {
            ex as f64 / all as f64
        }
    }

    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        self.rows.iter().map(|r| (r.dt, r.mean_sq_error, r.stderr)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dt,mean_sq_error,stderr,n_effective\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.dt, r.mean_sq_error, r.stderr, r.n_effective));
        }
        out
    }
}

fn local_path(data: &ModelData, exp: &LocalErrorConfig, p: usize, dt: f64) -> Result<BrownianPath> {
    if exp.zero_noise {
        Ok(BrownianPath::zero(1, dt, data.noise.len(), exp.ref_level))
    } else {
        sample_path(exp.seed, p as u64, 1, dt, data.noise.len(), exp.ref_level)
    }
}

/// Mean-square local error `E(‖Δb‖₂² + ‖Δq‖₂²)` of one coarse step against
/// `2^ref_level` fine steps on the same Brownian path, for every `Δt`.
///
/// The coarse increment is the exact sum of the fine ones. Samples whose
/// coarse or reference run blows up are excluded and counted.
pub fn local_error_samples(
    init: &State,
    data: &ModelData,
    cfg: &StepperConfig,
    exp: &LocalErrorConfig,
) -> Result<LocalErrorTable> {
    validate_ladder(&exp.dt_list)?;
    if exp.ref_level < 4 {
        return Err(StqgError::InvalidArgument(format!(
            "reference level {} below the minimum of 4",
            exp.ref_level
        )));
    }
    if exp.n_paths == 0 {
        return Err(StqgError::InvalidArgument("n_paths must be positive".into()));
    }
    let mut rows = Vec::with_capacity(exp.dt_list.len());
    for &dt in &exp.dt_list {
        let samples: Vec<Option<f64>> = (0..exp.n_paths)
            .into_par_iter()
            .map(|p| -> Result<Option<f64>> {
                let path = local_path(data, exp, p, dt)?;
                let mut coarse_cfg = *cfg;
                coarse_cfg.dt = dt;
                let coarse = match ssprk3_step(init, &path.block_increments(0, exp.ref_level), &coarse_cfg, data) {
                    Ok(r) => r.state,
                    Err(StqgError::BlowUp { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                };
                Ok(advance(init, &path, cfg, data)?.map(|fine| squared_distance(&coarse, &fine)))
            })
            .collect::<Result<_>>()?;
        let kept: Vec<f64> = samples.iter().flatten().copied().collect();
        let (mean, se) = mean_stderr(&kept);
        rows.push(LocalErrorRow {
            dt,
            mean_sq_error: mean,
            stderr: se,
            n_effective: kept.len(),
            excluded: samples.len() - kept.len(),
        });
    }

    let dt0 = exp.dt_list[0];
    let ref_err: Vec<Option<f64>> = (0..exp.n_paths)
        .into_par_iter()
        .map(|p| -> Result<Option<f64>> {
            let path = local_path(data, exp, p, dt0)?;
            let a = advance(init, &path, cfg, data)?;
            let finer = if exp.zero_noise {
                BrownianPath::zero(1, dt0, data.noise.len(), exp.ref_level + 1)
            } else {
                path.refine()
            };
            let b = advance(init, &finer, cfg, data)?;
            Ok(a.zip(b).map(|(a, b)| squared_distance(&a, &b)))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<f64> = ref_err.into_iter().flatten().collect();
    let reference_ratio = mean_stderr(&kept).0 / rows[0].mean_sq_error;
    Ok(LocalErrorTable { rows, reference_ratio })
}

// ---------------------------------------------------------------------------
// Order fits

/// Log-log least-squares slope with a bootstrap confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_points: usize,
}

fn ls_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fits `log value = slope · log dt + c` over `(dt, value, stderr)` points.
///
/// The 95% interval comes from `n_boot` resamples: values are redrawn from
/// `N(value, stderr²)` when standard errors are available, and log-residuals
/// are resampled with replacement otherwise.
pub fn fit_order(points: &[(f64, f64, f64)], n_boot: usize, seed: u64) -> Result<OrderFit> {
    if points.len() < 3 {
        return Err(StqgError::DegenerateTable(format!(
            "{} points; at least 3 are needed",
            points.len()
        )));
    }
    if points.iter().any(|(dt, v, _)| !(*dt > 0.0 && *v > 0.0 && dt.is_finite() && v.is_finite())) {
        return Err(StqgError::DegenerateTable("non-positive or non-finite entries".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let spread = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread <= 0.0 {
        return Err(StqgError::DegenerateTable("all dt values coincide".into()));
    }
    let (slope, intercept) = ls_fit(&x, &y);
    let parametric = points.iter().all(|p| p.2.is_finite() && p.2 > 0.0);
    let resid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - (slope * a + intercept)).collect();
    let mut rng = NormalStream::new(seed, u64::MAX, 0, 0, 0);
    let mut slopes = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        let yb: Vec<f64> = if parametric {
            points
                .iter()
                .map(|&(_, v, se)| (v + se * rng.next()).max(v * 1e-3).ln())
                .collect()
        } else {
            x.iter()
                .map(|a| {
                    let r = resid[(rng.next_u64() % resid.len() as u64) as usize];
                    slope * a + intercept + r
                })
                .collect()
        };
        slopes.push(ls_fit(&x, &yb).0);
    }
    slopes.sort_by(|a, b| a.total_cmp(b));
    let (ci_low, ci_high) = if slopes.is_empty() {
        (slope, slope)
    } else {
        let q = |f: f64| slopes[((f * (slopes.len() - 1) as f64).round()) as usize];
        (q(0.025).min(slope), q(0.975).max(slope))
    };
    Ok(OrderFit {
        slope,
        intercept,
        ci_low,
        ci_high,
        n_points: points.len(),
    })
}

// ---------------------------------------------------------------------------
// Stratonovich compatibility

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompatStatus {
    #[serde(rename = "OK")]
    Ok,
    /// The standard error exceeds the residual; more paths are needed to
    /// resolve it.
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatRow {
    pub dt: f64,
    pub residual: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub status: CompatStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatReport {
    pub rows: Vec<CompatRow>,
    /// Slope of `log residual` against `log Δt`, when every residual is
    /// positive and there are at least three rows.
    pub fit: Option<OrderFit>,
}

impl CompatReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dt,residual,stderr,n_paths,status\n");
        for r in &self.rows {
            let st = match r.status {
                CompatStatus::Ok => "OK",
                CompatStatus::Inconclusive => "INCONCLUSIVE",
            };
            out.push_str(&format!("{},{},{},{},{}\n", r.dt, r.residual, r.stderr, r.n_paths, st));
        }
        out
    }
}

/// Monte Carlo estimate of `‖E[S_Δt g] − g − ½ Δt Σ_i 𝒢_i𝒢_i g‖₂` with
/// `S_Δt` the SSPRK3 step with all drift removed.
///
/// Per path the estimator averages
/// `Y = S_Δt g − g − Σ_i ΔW^i 𝒢_i g − ½ Σ_ij ΔW^i ΔW^j 𝒢_i𝒢_j g`,
/// whose expectation equals the residual because `E ΔW^i = 0` and
/// `E ΔW^i ΔW^j = δ_ij Δt`; the subtracted terms are control variates for the
/// first- and second-order fluctuations. `𝒢_i` are the discrete operators
/// used by the step.
pub fn stratonovich_compat(
    state: &State,
    data: &ModelData,
    cfg: &StepperConfig,
    dt_list: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<CompatReport> {
    validate_ladder(dt_list)?;
    if n_paths < 2 {
        return Err(StqgError::InvalidArgument("need at least 2 paths".into()));
    }
    let n = data.noise.len();
    let tc = cfg.transport;
    let (b, q) = (&state.b, &state.q);
    let g1: Vec<(Field, Field)> = (0..n).map(|i| data.noise.apply_g(i, b, q, &tc)).collect::<Result<_>>()?;
    let mut g2: Vec<Vec<(Field, Field)>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for gj in &g1 {
            row.push(data.noise.apply_g(i, &gj.0, &gj.1, &tc)?);
        }
        g2.push(row);
    }
    let len = state.spec().len();
    let area = state.spec().cell_area();
    let mut step_cfg = *cfg;
    step_cfg.drift = DriftTerms::Off;

    let mut rows = Vec::with_capacity(dt_list.len());
    for &dt in dt_list {
        step_cfg.dt = dt;
        let n_chunks = n_paths.div_ceil(CHUNK);
        let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
            .into_par_iter()
            .map(|c| -> Result<(Vec<f64>, Vec<f64>)> {
                let mut sum = vec![0.0; 2 * len];
                let mut sumsq = vec![0.0; 2 * len];
                for p in c * CHUNK..((c + 1) * CHUNK).min(n_paths) {
                    let w = sample_path(seed, p as u64, 1, dt, n, 0)?.fine_increments(0);
                    let s = ssprk3_step(state, &w, &step_cfg, data)?.state;
                    let mut yb = s.b.sub(b)?;
                    let mut yq = s.q.sub(q)?;
                    for i in 0..n {
                        if w[i] == 0.0 {
                            continue;
                        }
                        yb.axpy(-w[i], &g1[i].0)?;
                        yq.axpy(-w[i], &g1[i].1)?;
                        for j in 0..n {
                            let c2 = -0.5 * w[i] * w[j];
                            yb.axpy(c2, &g2[i][j].0)?;
                            yq.axpy(c2, &g2[i][j].1)?;
                        }
                    }
                    for (k, v) in yb.values().iter().chain(yq.values()).enumerate() {
                        sum[k] += v;
                        sumsq[k] += v * v;
                    }
                }
                Ok((sum, sumsq))
            })
            .collect::<Result<_>>()?;
        let mut sum = vec![0.0; 2 * len];
        let mut sumsq = vec![0.0; 2 * len];
        for (s, sq) in &partials {
            for k in 0..2 * len {
                sum[k] += s[k];
                sumsq[k] += sq[k];
            }
        }
        let np = n_paths as f64;
        let mut res2 = 0.0;
        let mut var_mean = 0.0;
        for k in 0..2 * len {
            let m = sum[k] / np;
            res2 += m * m;
            let var = ((sumsq[k] - np * m * m) / (np - 1.0)).max(0.0);
            var_mean += var / np;
        }
        let residual = (res2 * area).sqrt();
        let stderr = (var_mean * area).sqrt();
        rows.push(CompatRow {
            dt,
            residual,
            stderr,
            n_paths,
            status: if stderr > residual {
                CompatStatus::Inconclusive
            } else {
                CompatStatus::Ok
            },
        });
    }
    let fit = if rows.len() >= 3 && rows.iter().all(|r| r.residual > 0.0) {
        let pts: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.dt, r.residual, 0.0)).collect();
        Some(fit_order(&pts, 1000, seed)?)
    } else {
        None
    };
    Ok(CompatReport { rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{NoiseBasis, NoiseMode};
    use crate::torus::TorusSpec;

    fn setup(noise: Vec<NoiseMode>) -> (State, ModelData) {
        let s = TorusSpec::square(16).unwrap();
        let basis = NoiseBasis::new(s, noise).unwrap();
        let h = Field::from_fn(s, |x, y| 0.1 * x.cos() * y.cos());
        let data = ModelData::new(h, Field::zeros(s), basis).unwrap();
        let b = Field::from_fn(s, |x, y| 0.4 * (x + y).sin() + 0.1 * (2.0 * x).cos());
        let q = Field::from_fn(s, |x, y| -0.6 * (x - 2.0 * y).cos());
        (data.state(b, q, 0.0).unwrap(), data)
    }

    #[test]
    fn fit_exact_power() {
        let pts: Vec<_> = [0.1, 0.05, 0.025, 0.0125].iter().map(|&d: &f64| (d, 3.0 * d * d, 0.0)).collect();
        let f = fit_order(&pts, 200, 1).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.ci_low - 2.0).abs() < 1e-9 && (f.ci_high - 2.0).abs() < 1e-9);
    }

    #[test]
    fn fit_noisy_power_covers_truth() {
        let mut rng = NormalStream::new(3, 0, 0, 0, 0);
        let pts: Vec<_> = (0..8)
            .map(|k| {
                let d = 0.1 / 2f64.powi(k);
                let v = 2.0 * d * d * (1.0 + 0.1 * rng.next());
                (d, v, 0.1 * 2.0 * d * d)
            })
            .collect();
        let f = fit_order(&pts, 2000, 7).unwrap();
        assert!(f.ci_low <= 2.0 && 2.0 <= f.ci_high, "{f:?}");
        assert!(f.ci_high - f.ci_low < 0.2);
    }

    #[test]
    fn fit_rejects_degenerate_tables() {
        assert!(matches!(fit_order(&[(0.1, 1.0, 0.0)], 10, 0), Err(StqgError::DegenerateTable(_))));
        let same = [(0.1, 1.0, 0.0), (0.1, 2.0, 0.0), (0.1, 3.0, 0.0)];
        assert!(fit_order(&same, 10, 0).is_err());
        let neg = [(0.1, 1.0, 0.0), (0.05, -2.0, 0.0), (0.025, 3.0, 0.0)];
        assert!(fit_order(&neg, 10, 0).is_err());
    }

    #[test]
    fn ladder_validation() {
        assert!(validate_ladder(&[0.1, 0.05, 0.025]).is_ok());
        assert!(validate_ladder(&[0.1, 0.04]).is_err());
        assert!(validate_ladder(&[]).is_err());
    }

    #[test]
    fn zero_noise_compat_residual_is_exactly_zero() {
        let (st, data) = setup(vec![]);
        let cfg = StepperConfig::new(0.01).unwrap();
        let rep = stratonovich_compat(&st, &data, &cfg, &[0.01, 0.005, 0.0025], 10, 1).unwrap();
        for r in &rep.rows {
            assert_eq!(r.residual, 0.0);
            assert_eq!(r.status, CompatStatus::Ok);
        }
        assert!(rep.fit.is_none());
    }

    #[test]
    fn compat_is_deterministic_and_small() {
        let (st, data) = setup(vec![
            NoiseMode::Fourier { k: [1, 0], amplitude: 0.3, phase: 0.0 },
            NoiseMode::Fourier { k: [1, 1], amplitude: 0.2, phase: 0.5 },
        ]);
        let cfg = StepperConfig::new(0.01).unwrap();
        let a = stratonovich_compat(&st, &data, &cfg, &[0.01, 0.005, 0.0025], 300, 5).unwrap();
        let b = stratonovich_compat(&st, &data, &cfg, &[0.01, 0.005, 0.0025], 300, 5).unwrap();
        assert_eq!(a, b);
        for r in &a.rows {
            assert!(r.residual < 0.02 * r.dt, "{r:?}");
        }
    }

    #[test]
    fn zero_noise_local_error_is_deterministic_order() {
        let (st, data) = setup(vec![NoiseMode::Constant { v: [0.3, 0.1] }]);
        let cfg = StepperConfig::new(0.1).unwrap();
        let exp = LocalErrorConfig {
            dt_list: vec![0.2, 0.1, 0.05],
            n_paths: 2,
            ref_level: 4,
            seed: 0,
            zero_noise: true,
        };
        let t = local_error_samples(&st, &data, &cfg, &exp).unwrap();
        let f = fit_order(&t.points(), 100, 0).unwrap();
        // squared local error of a third-order step: Δt⁸
        assert!((f.slope - 8.0).abs() < 0.5, "{f:?}");
        assert_eq!(t.excluded_fraction(), 0.0);
        assert!(t.reference_ratio < 1.0 / 16.0, "{t:?}");
    }

    #[test]
    fn local_error_rejects_shallow_reference() {
        let (st, data) = setup(vec![]);
        let cfg = StepperConfig::new(0.1).unwrap();
        let exp = LocalErrorConfig {
            dt_list: vec![0.1, 0.05, 0.025],
            n_paths: 2,
            ref_level: 3,
            seed: 0,
            zero_noise: false,
        };
        assert!(local_error_samples(&st, &data, &cfg, &exp).is_err());
    }

    #[test]
    fn squared_distance_of_shift() {
        let (st, data) = setup(vec![]);
        let other = data.state(st.b.map(|v| v + 1.0), st.q.clone(), 0.0).unwrap();
        let d = squared_distance(&st, &other);
        assert!((d - st.spec().area()).abs() < 1e-10);
    }
}
