//! Conserved and monitored quantities: energy, Casimirs, the PV budget,
//! blow-up monitors and Sobolev norms.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::elliptic::apply_k;
use crate::error::{Result, StqgError};
use crate::model::{ModelData, State};
use crate::stepper::{cutoff, theta_r, Truncation};
use crate::torus::{jacobian, Field};

/// Pointwise maximum of `|∇v|` with spectral derivatives.
pub fn sup_gradient(v: &Field) -> f64 {
    let (gx, gy) = v.gradient();
    gx.values()
        .iter()
        .zip(gy.values())
        .fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
}

/// `(‖∇b‖∞, ‖∇u‖∞, ‖q‖∞)` on the nodes; `|∇u|` is the Frobenius norm.
pub fn bkm_monitors(state: &State) -> (f64, f64, f64) {
    (sup_gradient(&state.b), state.u.sup_gradient(), state.q.sup_norm())
}

/// `E = ∫ ½ u·(K*u) + ¼ (b + h)²`.
pub fn energy(state: &State, h: &Field) -> Result<f64> {
    let ku = apply_k(&state.u)?;
    let kinetic = 0.5 * state.u.inner(&ku)?;
    let bh = state.b.add(h)?;
    let potential = 0.25 * bh.values().iter().map(|v| v * v).sum::<f64>() * bh.spec().cell_area();
    Ok(kinetic + potential)
}

/// Polynomial by ascending coefficients, degree at most 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub const MAX_DEGREE: usize = 4;

    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() > Self::MAX_DEGREE + 1 {
            return Err(StqgError::InvalidArgument(format!(
                "polynomial degree {} exceeds {}",
                coeffs.len() - 1,
                Self::MAX_DEGREE
            )));
        }
        Ok(Polynomial(coeffs))
    }

    /// `x^n`.
    pub fn monomial(n: usize) -> Self {
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        Polynomial(c)
    }

    pub fn zero() -> Self {
        Polynomial(Vec::new())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// `C_{Φ,Ψ} = ∫ Φ(b) + q Ψ(b)` by nodal quadrature.
pub fn casimir(state: &State, phi: &Polynomial, psi: &Polynomial) -> Result<f64> {
    for p in [phi, psi] {
        Polynomial::new(p.0.clone())?;
    }
    let s: f64 = state
        .b
        .values()
        .iter()
        .zip(state.q.values())
        .map(|(&b, &q)| phi.eval(b) + q * psi.eval(b))
        .sum();
    Ok(s * state.spec().cell_area())
}

/// The tracked Casimirs `(Φ, Ψ)`: `(0,1), (b,0), (b²,0), (0,b), (b³,0), (0,b²)`.
pub fn casimir_set() -> [(Polynomial, Polynomial); 6] {
    use Polynomial as P;
    [
        (P::zero(), P::monomial(0)),
        (P::monomial(1), P::zero()),
        (P::monomial(2), P::zero()),
        (P::zero(), P::monomial(1)),
        (P::monomial(3), P::zero()),
        (P::zero(), P::monomial(2)),
    ]
}

pub const CASIMIR_NAMES: [&str; 6] = [
    "casimir_0_1",
    "casimir_b_0",
    "casimir_b2_0",
    "casimir_0_b",
    "casimir_b3_0",
    "casimir_0_b2",
];

/// `(lhs, rhs)` of the circulation budget between two states `dt` apart:
/// `lhs = (∫q₁ − ∫q₀)/dt`, `rhs = ∫ J(ψ − h/2, b)` at the midpoint average.
pub fn pv_budget(s0: &State, s1: &State, h: &Field, dt: f64) -> Result<(f64, f64)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(StqgError::InvalidArgument(format!("dt = {dt} must be positive")));
    }
    let lhs = (s1.q.integral() - s0.q.integral()) / dt;
    let mid = |a: &Field, b: &Field| a.zip_map(b, |x, y| 0.5 * (x + y));
    let psi = mid(&s0.psi, &s1.psi)?;
    let b = mid(&s0.b, &s1.b)?;
    let stream = psi.zip_map(h, |p, h| p - 0.5 * h)?;
    let rhs = jacobian(&stream, &b)?.integral();
    Ok((lhs, rhs))
}

/// Per-step scalar diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub casimirs: [f64; 6],
    pub total_b: f64,
    pub total_q: f64,
    pub sup_grad_b: f64,
    pub sup_grad_u: f64,
    pub sup_q: f64,
    pub bkm_integral: f64,
    pub theta: f64,
    pub sobolev_b3: f64,
    pub sobolev_q2: f64,
}

/// Diagnostics of `state` with a given running BKM integral.
pub fn record_for(
    step: usize,
    state: &State,
    data: &ModelData,
    truncation: &Truncation,
    bkm_integral: f64,
) -> Result<DiagnosticsRecord> {
    let (gb, gu, sq) = bkm_monitors(state);
    let theta = if truncation.is_active() {
        match truncation.monitor {
            crate::stepper::ThetaMonitor::Q => cutoff(gb + gu + sq, truncation.radius()),
            crate::stepper::ThetaMonitor::GradQ => theta_r(state, truncation)?,
        }
    } else {
        1.0
    };
    let mut casimirs = [0.0; 6];
    for (c, (phi, psi)) in casimirs.iter_mut().zip(casimir_set().iter()) {
        *c = casimir(state, phi, psi)?;
    }
    // Energy needs a zero-mean velocity; a non-finite state has none.
    let energy = if state.is_finite() {
        energy(state, &data.h)?
    } else {
        f64::NAN
    };
    Ok(DiagnosticsRecord {
        step,
        t: state.t,
        energy,
        casimirs,
        total_b: state.b.sum(),
        total_q: state.q.sum(),
        sup_grad_b: gb,
        sup_grad_u: gu,
        sup_q: sq,
        bkm_integral,
        theta,
        sobolev_b3: state.b.sobolev_norm(3.0),
        sobolev_q2: state.q.sobolev_norm(2.0),
    })
}

impl DiagnosticsRecord {
    pub fn csv_header() -> String {
        let mut cols = vec!["step", "t", "energy"];
        cols.extend(CASIMIR_NAMES);
        cols.extend([
            "total_b",
            "total_q",
            "sup_grad_b",
            "sup_grad_u",
            "sup_q",
            "bkm_integral",
            "theta",
            "sobolev_b3",
            "sobolev_q2",
        ]);
        cols.join(",")
    }

    /// Fields in header order; floats in shortest round-trip form.
    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.step.to_string(), self.t.to_string(), self.energy.to_string()];
        cols.extend(self.casimirs.iter().map(f64::to_string));
        cols.extend(
            [
                self.total_b,
                self.total_q,
                self.sup_grad_b,
                self.sup_grad_u,
                self.sup_q,
                self.bkm_integral,
                self.theta,
                self.sobolev_b3,
                self.sobolev_q2,
            ]
            .iter()
            .map(f64::to_string),
        );
        cols.join(",")
    }

    /// Parses a row written by [`csv_row`](Self::csv_row).
    pub fn from_csv_row(line: &str) -> Result<Self> {
        let bad = || StqgError::InvalidArgument(format!("malformed diagnostics row: {line}"));
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 18 {
            return Err(bad());
        }
        let f = |k: usize| cols[k].parse::<f64>().map_err(|_| bad());
        let mut casimirs = [0.0; 6];
        for (j, c) in casimirs.iter_mut().enumerate() {
            *c = f(3 + j)?;
        }
        Ok(DiagnosticsRecord {
            step: cols[0].parse().map_err(|_| bad())?,
            t: f(1)?,
            energy: f(2)?,
            casimirs,
            total_b: f(9)?,
            total_q: f(10)?,
            sup_grad_b: f(11)?,
            sup_grad_u: f(12)?,
            sup_q: f(13)?,
            bkm_integral: f(14)?,
            theta: f(15)?,
            sobolev_b3: f(16)?,
            sobolev_q2: f(17)?,
        })
    }
}

/// CSV stream of diagnostics records preceded by a config-hash line.
pub struct CsvWriter<W: Write> {
    out: W,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, config_hash: &str) -> Result<Self> {
        writeln!(out, "# config_hash={config_hash}")?;
        writeln!(out, "{}", DiagnosticsRecord::csv_header())?;
        Ok(CsvWriter { out })
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.out, "{}", rec.csv_row())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Reads records from CSV text written by [`CsvWriter`].
pub fn read_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("step") && !l.trim().is_empty())
        .map(DiagnosticsRecord::from_csv_row)
        .collect()
}
