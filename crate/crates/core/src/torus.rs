//! Uniform periodic grid on the 2-torus.
//!
//! Fields are sampled at cell centres `x_ij = ((i + 1/2) dx, (j + 1/2) dy)` and
//! stored row-major with `x` varying fastest (`values[j * nx + i]`). The same
//! array is read as a nodal collocation field by the spectral operators and as
//! a set of cell averages by the flux-form transport.
//!
//! Spectral coefficients are normalised so that
//!
//! ```text
//! v(x_ij) = sum_k  v̂(k) exp(i k·(x_ij − x_00)),     ‖v‖₂² = |𝕋²| Σ_k |v̂(k)|²,
//! ```
//!
//! i.e. a constant field `c` has `v̂(0) = c`, and phases are referenced to the
//! first cell centre `x_00`. Wavevectors are `k = (2π m₁ / lx, 2π m₂ / ly)` with
//! integer modes `−n/2 ≤ m < n/2`; on the default `[0, 2π)²` domain they are
//! the integer wavevectors themselves.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StqgError};

/// Grid resolution and domain periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl TorusSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        let spec = TorusSpec { nx, ny, lx, ly };
        spec.validate()?;
        Ok(spec)
    }

    /// `n × n` cells on the default `[0, 2π)²` torus.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n, 2.0 * PI, 2.0 * PI)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("nx", self.nx), ("ny", self.ny)] {
            if n < 4 || n % 2 != 0 {
                return Err(StqgError::InvalidSpec(format!(
                    "{name} = {n} must be even and at least 4"
                )));
            }
        }
        for (name, l) in [("lx", self.lx), ("ly", self.ly)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(StqgError::InvalidSpec(format!(
                    "{name} = {l} must be a positive finite length"
                )));
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn min_spacing(&self) -> f64 {
        self.dx().min(self.dy())
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Domain measure `|𝕋²| = lx · ly`.
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Cell-centre coordinates of cell `(i, j)`.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy())
    }

    /// Signed integer mode for FFT index `i` along an axis of `n` points.
    #[inline]
    pub fn mode(i: usize, n: usize) -> i64 {
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Physical wavevector and Nyquist flags of spectral slot `(i, j)`.
    #[inline]
    pub fn wave(&self, i: usize, j: usize) -> Wave {
        let m1 = Self::mode(i, self.nx);
        let m2 = Self::mode(j, self.ny);
        let kx = 2.0 * PI * m1 as f64 / self.lx;
        let ky = 2.0 * PI * m2 as f64 / self.ly;
        Wave {
            m1,
            m2,
            kx,
            ky,
            nyquist_x: i == self.nx / 2,
            nyquist_y: j == self.ny / 2,
        }
    }

    /// Whether both axes keep mode `(m1, m2)` under the 2/3 rule.
    #[inline]
    pub fn dealias_keeps(&self, m1: i64, m2: i64) -> bool {
        3 * m1.unsigned_abs() < self.nx as u64 && 3 * m2.unsigned_abs() < self.ny as u64
    }

    pub fn ensure_same(&self, other: &TorusSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(StqgError::SpecMismatch)
        }
    }
}

/// One spectral slot.
#[derive(Debug, Clone, Copy)]
pub struct Wave {
    pub m1: i64,
    pub m2: i64,
    pub kx: f64,
    pub ky: f64,
    pub nyquist_x: bool,
    pub nyquist_y: bool,
}

impl Wave {
    pub fn k2(&self) -> f64 {
        self.kx * self.kx + self.ky * self.ky
    }

    /// `i kx`, with the unpaired Nyquist mode dropped.
    pub fn ddx(&self) -> Complex64 {
        if self.nyquist_x {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, self.kx)
        }
    }

    pub fn ddy(&self) -> Complex64 {
        if self.nyquist_y {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, self.ky)
        }
    }

    pub fn is_nyquist(&self) -> bool {
        self.nyquist_x || self.nyquist_y
    }
}

// ---------------------------------------------------------------------------
// FFT plans

struct Plans {
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

fn plans(nx: usize, ny: usize) -> Arc<Plans> {
    type PlanCache = Mutex<HashMap<(usize, usize), Arc<Plans>>>;
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((nx, ny))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                fwd_x: planner.plan_fft_forward(nx),
                inv_x: planner.plan_fft_inverse(nx),
                fwd_y: planner.plan_fft_forward(ny),
                inv_y: planner.plan_fft_inverse(ny),
            })
        })
        .clone()
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Unnormalised in-place 2-D transform of a row-major `ny × nx` array.
fn fft2(data: &mut [Complex64], nx: usize, ny: usize, forward: bool) {
    let p = plans(nx, ny);
    let (fx, fy) = if forward {
        (&p.fwd_x, &p.fwd_y)
    } else {
        (&p.inv_x, &p.inv_y)
    };
    fx.process(data);
    let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
    transpose(data, &mut t, ny, nx);
    fy.process(&mut t);
    transpose(&t, data, nx, ny);
}

// ---------------------------------------------------------------------------
// Fields

/// Real scalar field sampled at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    spec: TorusSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(spec: TorusSpec) -> Self {
        Field {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    pub fn constant(spec: TorusSpec, c: f64) -> Self {
        Field {
            spec,
            values: vec![c; spec.len()],
        }
    }

    /// Samples `f(x, y)` at every cell centre.
    pub fn from_fn(spec: TorusSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let (x, y) = spec.center(i, j);
                values.push(f(x, y));
            }
        }
        Field { spec, values }
    }

    pub fn from_values(spec: TorusSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(StqgError::InvalidArgument(format!(
                "expected {} samples, got {}",
                spec.len(),
                values.len()
            )));
        }
        let field = Field { spec, values };
        field.check_finite("field")?;
        Ok(field)
    }

    pub(crate) fn from_values_unchecked(spec: TorusSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Field { spec, values }
    }

    pub fn spec(&self) -> &TorusSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(StqgError::NonFinite(what.to_string()))
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// `∫ v dx dy` by the midpoint rule.
    pub fn integral(&self) -> f64 {
        self.sum() * self.spec.cell_area()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Zero-mean test used throughout: `|mean| ≤ 1e−12 · max(1, max|v|)`.
    pub fn is_zero_mean(&self) -> bool {
        self.mean().abs() <= 1e-12 * self.max_abs().max(1.0)
    }

    pub fn remove_mean(&mut self) {
        let m = self.mean();
        self.values.iter_mut().for_each(|v| *v -= m);
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.spec.cell_area()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.max_abs()
    }

    /// `‖v‖_s = ( |𝕋²| Σ (1 + |k|²)^s |v̂(k)|² )^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.spectral().sobolev_norm(s)
    }

    pub fn to_spectral(&self) -> Result<SpectralField> {
        self.check_finite("spectral transform input")?;
        Ok(self.spectral())
    }

    pub(crate) fn spectral(&self) -> SpectralField {
        let TorusSpec { nx, ny, .. } = self.spec;
        let mut data: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft2(&mut data, nx, ny, true);
        let scale = 1.0 / (nx * ny) as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        SpectralField {
            spec: self.spec,
            coeffs: data,
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.spec.ensure_same(&other.spec)?;
        Ok(Field {
            spec: self.spec,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &Field) -> Result<()> {
        self.spec.ensure_same(&other.spec)?;
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
        Ok(())
    }

    /// Spectral `(∂x v, ∂y v)`.
    pub fn gradient(&self) -> (Field, Field) {
        let s = self.spectral();
        (
            s.map_modes(|w, c| w.ddx() * c).to_field(),
            s.map_modes(|w, c| w.ddy() * c).to_field(),
        )
    }

    pub fn laplacian(&self) -> Field {
        self.spectral().map_modes(|w, c| -w.k2() * c).to_field()
    }

    /// Drops every mode outside the 2/3 band.
    pub fn dealiased(&self) -> Field {
        self.spectral().dealiased().to_field()
    }

    /// Maximum of `|v_{i+1,j} − v_{i,j}|`-style cell differences; a cheap
    /// roughness probe.
    pub fn max_cell_jump(&self) -> f64 {
        let TorusSpec { nx, ny, .. } = self.spec;
        let mut m: f64 = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let v = self.values[j * nx + i];
                m = m.max((self.values[j * nx + (i + 1) % nx] - v).abs());
                m = m.max((self.values[((j + 1) % ny) * nx + i] - v).abs());
            }
        }
        m
    }
}

/// Fourier coefficients of a real field, in FFT slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    spec: TorusSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn from_coeffs(spec: TorusSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        spec.validate()?;
        if coeffs.len() != spec.len() {
            return Err(StqgError::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                spec.len(),
                coeffs.len()
            )));
        }
        Ok(SpectralField { spec, coeffs })
    }

    pub fn spec(&self) -> &TorusSpec {
        &self.spec
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of integer mode `(m1, m2)`, `−n/2 ≤ m < n/2`.
    pub fn coeff(&self, m1: i64, m2: i64) -> Complex64 {
        let i = m1.rem_euclid(self.spec.nx as i64) as usize;
        let j = m2.rem_euclid(self.spec.ny as i64) as usize;
        self.coeffs[self.spec.index(i, j)]
    }

    /// Applies `f(wave, coefficient)` slot by slot.
    pub fn map_modes(&self, f: impl Fn(&Wave, Complex64) -> Complex64) -> SpectralField {
        let TorusSpec { nx, ny, .. } = self.spec;
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for j in 0..ny {
            for i in 0..nx {
                let w = self.spec.wave(i, j);
                coeffs.push(f(&w, self.coeffs[j * nx + i]));
            }
        }
        SpectralField {
            spec: self.spec,
            coeffs,
        }
    }

    pub fn dealiased(&self) -> SpectralField {
        let spec = self.spec;
        self.map_modes(|w, c| {
            if spec.dealias_keeps(w.m1, w.m2) {
                c
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Hermitian symmetry `v̂(−k) = conj v̂(k)` over the paired (non-Nyquist)
    /// modes, which is what makes the nodal field real.
    pub fn hermitian_defect(&self) -> f64 {
        let TorusSpec { nx, ny, .. } = self.spec;
        let mut worst: f64 = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let w = self.spec.wave(i, j);
                if w.is_nyquist() {
                    continue;
                }
                let c = self.coeffs[j * nx + i];
                let d = self.coeff(-w.m1, -w.m2);
                worst = worst.max((c - d.conj()).norm());
            }
        }
        worst
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let TorusSpec { nx, ny, .. } = self.spec;
        let mut acc = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let w = self.spec.wave(i, j);
                acc += (1.0 + w.k2()).powf(s) * self.coeffs[j * nx + i].norm_sqr();
            }
        }
        (self.spec.area() * acc).sqrt()
    }

    /// Nodal samples; the imaginary residue of a non-Hermitian input is
    /// discarded.
    pub fn to_field(&self) -> Field {
        let TorusSpec { nx, ny, .. } = self.spec;
        let mut data = self.coeffs.clone();
        fft2(&mut data, nx, ny, false);
        Field {
            spec: self.spec,
            values: data.iter().map(|c| c.re).collect(),
        }
    }

    /// Values at the cell corners `(i dx, j dy)` (half-cell shift towards the
    /// origin). Nyquist modes have no real half-cell shift and are dropped.
    pub fn corner_values(&self) -> Vec<f64> {
        let spec = self.spec;
        let (hx, hy) = (0.5 * spec.dx(), 0.5 * spec.dy());
        self.map_modes(|w, c| {
            if w.is_nyquist() {
                Complex64::new(0.0, 0.0)
            } else {
                c * Complex64::from_polar(1.0, -(w.kx * hx + w.ky * hy))
            }
        })
        .to_field()
        .values
    }
}

pub fn to_spectral(f: &Field) -> Result<SpectralField> {
    f.to_spectral()
}

pub fn from_spectral(s: &SpectralField) -> Field {
    s.to_field()
}

// ---------------------------------------------------------------------------
// Vector fields and face fluxes

/// Normal velocities on the cell faces of the grid.
///
/// `x_faces[j*nx + i]` is the x-velocity averaged over the face at
/// `x = i dx` in row `j` (the west face of cell `(i, j)`); `y_faces[j*nx + i]`
/// is the y-velocity averaged over the face at `y = j dy` (the south face).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVelocity {
    spec: TorusSpec,
    pub x_faces: Vec<f64>,
    pub y_faces: Vec<f64>,
}

impl FaceVelocity {
    /// Face velocities of `∇⊥ψ` from stream-function values at the corners
    /// `(i dx, j dy)`. Each face carries the difference of its two end
    /// corners, so every cell divergence telescopes to zero.
    pub fn from_corner_stream(spec: TorusSpec, corners: &[f64]) -> Self {
        let TorusSpec { nx, ny, .. } = spec;
        let (dx, dy) = (spec.dx(), spec.dy());
        let mut x_faces = vec![0.0; spec.len()];
        let mut y_faces = vec![0.0; spec.len()];
        for j in 0..ny {
            let jn = (j + 1) % ny;
            for i in 0..nx {
                let ie = (i + 1) % nx;
                let c = corners[j * nx + i];
                // u_x = −∂y ψ along the west face, u_y = ∂x ψ along the south face.
                x_faces[j * nx + i] = (c - corners[jn * nx + i]) / dy;
                y_faces[j * nx + i] = (corners[j * nx + ie] - c) / dx;
            }
        }
        FaceVelocity {
            spec,
            x_faces,
            y_faces,
        }
    }

    pub fn uniform(spec: TorusSpec, vx: f64, vy: f64) -> Self {
        FaceVelocity {
            spec,
            x_faces: vec![vx; spec.len()],
            y_faces: vec![vy; spec.len()],
        }
    }

    pub fn spec(&self) -> &TorusSpec {
        &self.spec
    }

    /// Discrete divergence of every cell.
    pub fn divergence(&self) -> Vec<f64> {
        let TorusSpec { nx, ny, .. } = self.spec;
        let (dx, dy) = (self.spec.dx(), self.spec.dy());
        let mut div = vec![0.0; self.spec.len()];
        for j in 0..ny {
            let jn = (j + 1) % ny;
            for i in 0..nx {
                let ie = (i + 1) % nx;
                div[j * nx + i] = (self.x_faces[j * nx + ie] - self.x_faces[j * nx + i]) / dx
                    + (self.y_faces[jn * nx + i] - self.y_faces[j * nx + i]) / dy;
            }
        }
        div
    }

    pub fn max_abs_divergence(&self) -> f64 {
        self.divergence().iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn max_speed(&self) -> f64 {
        self.x_faces
            .iter()
            .chain(&self.y_faces)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, a: f64) -> FaceVelocity {
        FaceVelocity {
            spec: self.spec,
            x_faces: self.x_faces.iter().map(|v| a * v).collect(),
            y_faces: self.y_faces.iter().map(|v| a * v).collect(),
        }
    }
}

/// Nodal vector field with an optional face-normal representation.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: Field,
    pub y: Field,
    pub faces: Option<FaceVelocity>,
}

impl VectorField {
    pub fn new(x: Field, y: Field) -> Result<Self> {
        x.spec.ensure_same(&y.spec)?;
        Ok(VectorField { x, y, faces: None })
    }

    pub fn zeros(spec: TorusSpec) -> Self {
        VectorField {
            x: Field::zeros(spec),
            y: Field::zeros(spec),
            faces: Some(FaceVelocity::uniform(spec, 0.0, 0.0)),
        }
    }

    /// Spatially constant field; divergence-free without a periodic stream
    /// function.
    pub fn uniform(spec: TorusSpec, vx: f64, vy: f64) -> Self {
        VectorField {
            x: Field::constant(spec, vx),
            y: Field::constant(spec, vy),
            faces: Some(FaceVelocity::uniform(spec, vx, vy)),
        }
    }

    /// `∇⊥ψ` from spectral stream-function coefficients.
    pub fn from_stream_spectral(psi_hat: &SpectralField) -> Self {
        let spec = *psi_hat.spec();
        let x = psi_hat.map_modes(|w, c| -(w.ddy() * c)).to_field();
        let y = psi_hat.map_modes(|w, c| w.ddx() * c).to_field();
        let faces = FaceVelocity::from_corner_stream(spec, &psi_hat.corner_values());
        VectorField {
            x,
            y,
            faces: Some(faces),
        }
    }

    pub fn spec(&self) -> &TorusSpec {
        self.x.spec()
    }

    /// Pointwise maximum of `|v|`.
    pub fn sup_norm(&self) -> f64 {
        self.x
            .values()
            .iter()
            .zip(self.y.values())
            .fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.x.sobolev_norm(s).hypot(self.y.sobolev_norm(s))
    }

    pub fn l2_norm(&self) -> f64 {
        self.x.l2_norm().hypot(self.y.l2_norm())
    }

    /// `∫ v · w dx dy`.
    pub fn inner(&self, other: &VectorField) -> Result<f64> {
        self.spec().ensure_same(other.spec())?;
        let dot: f64 = self
            .x
            .values()
            .iter()
            .zip(other.x.values())
            .chain(self.y.values().iter().zip(other.y.values()))
            .map(|(a, b)| a * b)
            .sum();
        Ok(dot * self.spec().cell_area())
    }

    /// Pointwise maximum of the Frobenius norm of the spectral gradient.
    pub fn sup_gradient(&self) -> f64 {
        let (ax, ay) = self.x.gradient();
        let (bx, by) = self.y.gradient();
        let mut m: f64 = 0.0;
        for k in 0..ax.values().len() {
            let v = ax.values[k].powi(2)
                + ay.values[k].powi(2)
                + bx.values[k].powi(2)
                + by.values[k].powi(2);
            m = m.max(v.sqrt());
        }
        m
    }
}

/// `u = ∇⊥ψ = (−∂y ψ, ∂x ψ)` evaluated spectrally, with face velocities built
/// from corner stream-function differences.
pub fn perp_gradient(psi: &Field) -> Result<VectorField> {
    Ok(VectorField::from_stream_spectral(&psi.to_spectral()?))
}

/// `J(a, b) = ∂x a ∂y b − ∂y a ∂x b`, pseudo-spectral with 2/3 dealiasing of
/// the inputs and of the product.
pub fn jacobian(a: &Field, b: &Field) -> Result<Field> {
    a.spec.ensure_same(&b.spec)?;
    let sa = a.to_spectral()?.dealiased();
    let sb = b.to_spectral()?.dealiased();
    let ax = sa.map_modes(|w, c| w.ddx() * c).to_field();
    let ay = sa.map_modes(|w, c| w.ddy() * c).to_field();
    let bx = sb.map_modes(|w, c| w.ddx() * c).to_field();
    let by = sb.map_modes(|w, c| w.ddy() * c).to_field();
    let prod: Vec<f64> = (0..a.values.len())
        .map(|k| ax.values[k] * by.values[k] - ay.values[k] * bx.values[k])
        .collect();
    Ok(Field::from_values_unchecked(a.spec, prod).dealiased())
}

/// Standard norms of a scalar field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub sup: f64,
    pub sobolev: f64,
}

/// `L²`, sup and `H^s` norms of `f`.
pub fn norms(f: &Field, s: f64) -> Norms {
    Norms {
        l2: f.l2_norm(),
        sup: f.sup_norm(),
        sobolev: f.sobolev_norm(s),
    }
}
