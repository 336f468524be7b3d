//! Transport noise: divergence-free fields `ξ_i`, the operators `𝒢_i` they
//! induce, and reproducible refinable Brownian paths.
//!
//! `𝒢_i (b, q) = (−(ξ_i·∇) b, −(ξ_i·∇)(q − b))`. For stepping it is assembled
//! in flux form with `ξ_i` held fixed, so the stochastic increment
//! `Σ ΔW^i 𝒢_i g` is linear in `ΔW`; the interface flux is
//! [`TransportConfig::noise_flux`].

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StqgError};
use crate::torus::{FaceVelocity, Field, TorusSpec, VectorField};
use crate::transport::{advect_unchecked, TransportConfig};

/// One noise field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseMode {
    /// `ζ = a cos(k·x + φ)`, `ξ = ∇⊥ζ`; `k` is an integer mode vector.
    Fourier {
        k: [i32; 2],
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Spatially constant `ξ = v`.
    Constant { v: [f64; 2] },
}

impl NoiseMode {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            NoiseMode::Fourier { amplitude, phase, .. } => amplitude.is_finite() && phase.is_finite(),
            NoiseMode::Constant { v } => v.iter().all(|c| c.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(StqgError::InvalidArgument(format!("non-finite noise mode {self:?}")))
        }
    }

    /// Term of the summability proxy `Σ a (1 + |k|)⁵`.
    pub fn weight(&self) -> f64 {
        match self {
            NoiseMode::Fourier { k, amplitude, .. } => {
                let kn = (k[0] as f64).hypot(k[1] as f64);
                amplitude.abs() * (1.0 + kn).powi(5)
            }
            NoiseMode::Constant { v } => v[0].hypot(v[1]),
        }
    }

    fn compile(&self, spec: TorusSpec) -> VectorField {
        match *self {
            NoiseMode::Constant { v } => VectorField::uniform(spec, v[0], v[1]),
            NoiseMode::Fourier { k, amplitude, phase } => {
                let kx = 2.0 * std::f64::consts::PI * k[0] as f64 / spec.lx;
                let ky = 2.0 * std::f64::consts::PI * k[1] as f64 / spec.ly;
                let arg = move |x: f64, y: f64| kx * x + ky * y + phase;
                let x = Field::from_fn(spec, |x, y| amplitude * ky * arg(x, y).sin());
                let y = Field::from_fn(spec, |x, y| -amplitude * kx * arg(x, y).sin());
                let mut corners = Vec::with_capacity(spec.len());
                for j in 0..spec.ny {
                    for i in 0..spec.nx {
                        let (cx, cy) = (i as f64 * spec.dx(), j as f64 * spec.dy());
                        corners.push(amplitude * arg(cx, cy).cos());
                    }
                }
                VectorField {
                    x,
                    y,
                    faces: Some(FaceVelocity::from_corner_stream(spec, &corners)),
                }
            }
        }
    }
}

/// Noise fields compiled onto a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBasis {
    spec: TorusSpec,
    modes: Vec<NoiseMode>,
    fields: Vec<VectorField>,
}

impl NoiseBasis {
    pub fn new(spec: TorusSpec, modes: Vec<NoiseMode>) -> Result<Self> {
        spec.validate()?;
        for m in &modes {
            m.validate()?;
        }
        let fields = modes.iter().map(|m| m.compile(spec)).collect();
        Ok(NoiseBasis { spec, modes, fields })
    }

    pub fn empty(spec: TorusSpec) -> Self {
        NoiseBasis {
            spec,
            modes: Vec::new(),
            fields: Vec::new(),
        }
    }

    pub fn spec(&self) -> &TorusSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[NoiseMode] {
        &self.modes
    }

    /// Nodal and face representation of `ξ_i`.
    pub fn field(&self, i: usize) -> Result<&VectorField> {
        self.fields.get(i).ok_or(StqgError::IndexOutOfRange {
            index: i,
            len: self.fields.len(),
        })
    }

    pub(crate) fn faces(&self, i: usize) -> &FaceVelocity {
        self.fields[i].faces.as_ref().expect("noise fields carry faces")
    }

    /// `Σ a_i (1 + |k_i|)⁵`, with `|v|` for constant entries.
    pub fn summability(&self) -> f64 {
        self.modes.iter().map(NoiseMode::weight).sum()
    }

    /// Largest face speed of each `ξ_i`.
    pub fn sup_speeds(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.faces(i).max_speed()).collect()
    }

    /// `𝒢_i (b, q)` in flux form.
    pub fn apply_g(&self, i: usize, b: &Field, q: &Field, cfg: &TransportConfig) -> Result<(Field, Field)> {
        self.field(i)?;
        self.spec.ensure_same(b.spec())?;
        self.spec.ensure_same(q.spec())?;
        cfg.validate()?;
        Ok(self.apply_g_unchecked(i, b, q, cfg))
    }

    pub(crate) fn apply_g_unchecked(&self, i: usize, b: &Field, q: &Field, cfg: &TransportConfig) -> (Field, Field) {
        let faces = self.faces(i);
        let cfg = cfg.for_noise();
        let db = advect_unchecked(b, faces, &cfg);
        let qmb = q.sub(b).expect("same grid");
        let dq = advect_unchecked(&qmb, faces, &cfg);
        (db, dq)
    }

    /// `(ξ_i·∇) v`, pseudo-spectral with a dealiased product.
    fn lie(&self, i: usize, v: &Field) -> Field {
        let xi = &self.fields[i];
        let (vx, vy) = v.gradient();
        let prod: Vec<f64> = (0..v.values().len())
            .map(|k| xi.x.values()[k] * vx.values()[k] + xi.y.values()[k] * vy.values()[k])
            .collect();
        Field::from_values_unchecked(*v.spec(), prod).dealiased()
    }

    /// `𝒢_i (b, q)` with spectral derivatives.
    pub fn apply_g_spectral(&self, i: usize, b: &Field, q: &Field) -> Result<(Field, Field)> {
        self.field(i)?;
        let qmb = q.sub(b)?;
        Ok((self.lie(i, b).scaled(-1.0), self.lie(i, &qmb).scaled(-1.0)))
    }

    /// `½ 𝒢_i² (b, q) = (½ ℒ² b, ½ ℒ² (q − 2b))` with `ℒ = ξ_i·∇`, spectral.
    pub fn apply_g2(&self, i: usize, b: &Field, q: &Field) -> Result<(Field, Field)> {
        self.field(i)?;
        let q2b = q.zip_map(b, |q, b| q - 2.0 * b)?;
        let db = self.lie(i, &self.lie(i, b)).scaled(0.5);
        let dq = self.lie(i, &self.lie(i, &q2b)).scaled(0.5);
        Ok((db, dq))
    }
}

// ---------------------------------------------------------------------------
// Brownian paths

/// Increments are rounded to multiples of this quantum so that every
/// bridge split `parent = left + right` holds exactly in floating point.
const QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

fn quantize(x: f64) -> f64 {
    (x / QUANTUM).round() * QUANTUM
}

/// Standard normal draws from a counter-addressed ChaCha stream.
pub(crate) struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub(crate) fn new(seed: u64, realization: u64, noise: usize, level: u32, position: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&realization.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(((noise as u64) << 16) | level as u64);
        rng.set_word_pos(position as u128 * 4);
        NormalStream { rng }
    }

    pub(crate) fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub(crate) fn next(&mut self) -> f64 {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Brownian increments for every noise index, refinable by bridge midpoint
/// insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub seed: u64,
    pub realization: u64,
    pub n_steps: usize,
    pub dt: f64,
    pub level: u32,
    /// `increments[i][m]`: increment of `W^i` over fine interval `m`, of
    /// length `dt / 2^level`.
    pub increments: Vec<Vec<f64>>,
}

/// Level-0 path over `n_steps` steps of size `dt`, refined `level` times.
pub fn sample_path(
    seed: u64,
    realization: u64,
    n_steps: usize,
    dt: f64,
    n_noise: usize,
    level: u32,
) -> Result<BrownianPath> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(StqgError::InvalidArgument(format!("dt = {dt} must be positive")));
    }
    if level > 24 {
        return Err(StqgError::InvalidArgument(format!("refinement level {level} too large")));
    }
    let sd = dt.sqrt();
    let increments = (0..n_noise)
        .map(|i| {
            let mut s = NormalStream::new(seed, realization, i, 0, 0);
            (0..n_steps).map(|_| quantize(sd * s.next())).collect()
        })
        .collect();
    let mut path = BrownianPath {
        seed,
        realization,
        n_steps,
        dt,
        level: 0,
        increments,
    };
    for _ in 0..level {
        path = path.refine();
    }
    Ok(path)
}

impl BrownianPath {
    /// A path with identically zero increments.
    pub fn zero(n_steps: usize, dt: f64, n_noise: usize, level: u32) -> Self {
        BrownianPath {
            seed: 0,
            realization: 0,
            n_steps,
            dt,
            level,
            increments: vec![vec![0.0; n_steps << level]; n_noise],
        }
    }

    pub fn n_noise(&self) -> usize {
        self.increments.len()
    }

    pub fn fine_dt(&self) -> f64 {
        self.dt / (1u64 << self.level) as f64
    }

    pub fn n_fine(&self) -> usize {
        self.n_steps << self.level
    }

    /// Splits every increment in two by Brownian-bridge midpoint sampling.
    /// Each parent equals the sum of its children exactly.
    pub fn refine(&self) -> BrownianPath {
        let level = self.level + 1;
        let half_sd = (self.fine_dt() / 4.0).sqrt();
        let increments = self
            .increments
            .iter()
            .enumerate()
            .map(|(i, parents)| {
                let mut s = NormalStream::new(self.seed, self.realization, i, level, 0);
                let mut out = Vec::with_capacity(2 * parents.len());
                for &p in parents {
                    let left = quantize(0.5 * p + half_sd * s.next());
                    out.push(left);
                    out.push(p - left);
                }
                out
            })
            .collect();
        BrownianPath {
            level,
            increments,
            ..*self
        }
    }

    /// Increments of all noise indices over fine interval `m`.
    pub fn fine_increments(&self, m: usize) -> Vec<f64> {
        self.increments.iter().map(|w| w[m]).collect()
    }

    /// Increments over the `n`-th block of `2^coarsen` consecutive fine
    /// intervals.
    pub fn block_increments(&self, n: usize, coarsen: u32) -> Vec<f64> {
        let width = 1usize << coarsen;
        self.increments
            .iter()
            .map(|w| w[n * width..(n + 1) * width].iter().sum())
            .collect()
    }

    /// Path value `W^i` at the end of every fine interval.
    pub fn cumulative(&self, i: usize) -> Vec<f64> {
        let mut acc = 0.0;
        self.increments[i]
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(n: usize) -> TorusSpec {
        TorusSpec::square(n).unwrap()
    }

    fn fourier_basis(s: TorusSpec) -> NoiseBasis {
        NoiseBasis::new(
            s,
            vec![
                NoiseMode::Fourier { k: [1, 2], amplitude: 0.3, phase: 0.4 },
                NoiseMode::Fourier { k: [-3, 1], amplitude: 0.1, phase: 0.0 },
                NoiseMode::Constant { v: [0.5, -0.25] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn noise_fields_are_divergence_free() {
        for n in [8, 32, 64] {
            let basis = fourier_basis(spec(n));
            for i in 0..basis.len() {
                assert!(basis.faces(i).max_abs_divergence() <= 1e-12);
            }
        }
    }

    #[test]
    fn fourier_noise_matches_perp_gradient() {
        let s = spec(32);
        let basis = fourier_basis(s);
        let zeta = Field::from_fn(s, |x, y| 0.3 * (x + 2.0 * y + 0.4).cos());
        let u = crate::torus::perp_gradient(&zeta).unwrap();
        let xi = basis.field(0).unwrap();
        assert!(xi.x.sub(&u.x).unwrap().max_abs() < 1e-13);
        assert!(xi.y.sub(&u.y).unwrap().max_abs() < 1e-13);
        let fu = u.faces.unwrap();
        let fx = xi.faces.as_ref().unwrap();
        for k in 0..s.len() {
            assert!((fu.x_faces[k] - fx.x_faces[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn summability_proxy() {
        let basis = fourier_basis(spec(8));
        let expect = 0.3 * (1.0 + 5f64.sqrt()).powi(5) + 0.1 * (1.0 + 10f64.sqrt()).powi(5) + 0.5f64.hypot(0.25);
        assert!((basis.summability() - expect).abs() < 1e-12);
    }

    #[test]
    fn index_out_of_range() {
        let s = spec(8);
        let basis = fourier_basis(s);
        let z = Field::zeros(s);
        let cfg = TransportConfig::default();
        assert!(matches!(
            basis.apply_g(3, &z, &z, &cfg),
            Err(StqgError::IndexOutOfRange { index: 3, len: 3 })
        ));
        assert!(basis.apply_g2(7, &z, &z).is_err());
    }

    #[test]
    fn centered_noise_operator_is_skew() {
        let s = spec(16);
        let basis = fourier_basis(s);
        let b = Field::from_fn(s, |x, y| (x + y).sin() + 0.3 * (2.0 * x).cos() * y.sin());
        let z = Field::zeros(s);
        for i in 0..basis.len() {
            let (db, _) = basis.apply_g(i, &b, &z, &TransportConfig::default()).unwrap();
            let inner: f64 = b.values().iter().zip(db.values()).map(|(a, c)| a * c).sum();
            assert!(inner.abs() < 1e-12);
        }
    }

    #[test]
    fn g_annihilates_constants() {
        let s = spec(16);
        let basis = fourier_basis(s);
        let b = Field::constant(s, 1.5);
        let q = Field::constant(s, -0.5);
        for i in 0..basis.len() {
            let (db, dq) = basis.apply_g(i, &b, &q, &TransportConfig::default()).unwrap();
            assert!(db.max_abs() < 1e-13 && dq.max_abs() < 1e-13);
            let (db, dq) = basis.apply_g2(i, &b, &q).unwrap();
            assert!(db.max_abs() < 1e-13 && dq.max_abs() < 1e-13);
        }
    }

    #[test]
    fn g_on_constant_q_minus_b() {
        let s = spec(16);
        let basis = fourier_basis(s);
        let b = Field::from_fn(s, |x, y| x.sin() * y.cos());
        let q = b.map(|v| v + 3.0);
        let (_, dq) = basis.apply_g(0, &b, &q, &TransportConfig::default()).unwrap();
        assert!(dq.max_abs() < 1e-13);
    }

    #[test]
    fn g_with_unit_x_flow_converges_to_hand_result() {
        // ξ = (1, 0), b = sin x, q = 0: db = −cos x, dq = +cos x.
        let mut last = f64::INFINITY;
        for n in [16, 32, 64, 128] {
            let s = spec(n);
            let basis = NoiseBasis::new(s, vec![NoiseMode::Constant { v: [1.0, 0.0] }]).unwrap();
            let b = Field::from_fn(s, |x, _| x.sin());
            let q = Field::zeros(s);
            let (db, dq) = basis.apply_g(0, &b, &q, &TransportConfig::default()).unwrap();
            let ex = Field::from_fn(s, |x, _| x.cos());
            let err = db.add(&ex).unwrap().max_abs().max(dq.sub(&ex).unwrap().max_abs());
            assert!(err < 0.6 * last);
            last = err;

            let (db, dq) = basis.apply_g_spectral(0, &b, &q).unwrap();
            assert!(db.add(&ex).unwrap().max_abs() < 1e-12);
            assert!(dq.sub(&ex).unwrap().max_abs() < 1e-12);
        }
        assert!(last < 0.05);
    }

    #[test]
    fn g2_hand_example() {
        let s = spec(32);
        let basis = NoiseBasis::new(s, vec![NoiseMode::Constant { v: [1.0, 0.0] }]).unwrap();
        let b = Field::from_fn(s, |x, _| x.sin());
        let (db, dq) = basis.apply_g2(0, &b, &Field::zeros(s)).unwrap();
        assert!(db.add(&b.scaled(0.5)).unwrap().max_abs() < 1e-12);
        assert!(dq.sub(&b).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn g_squared_is_twice_g2_for_constant_flow() {
        let s = spec(32);
        let basis = NoiseBasis::new(s, vec![NoiseMode::Constant { v: [0.7, -1.3] }]).unwrap();
        let b = Field::from_fn(s, |x, y| (2.0 * x + y).sin() + 0.4 * (x - 3.0 * y).cos());
        let q = Field::from_fn(s, |x, y| (x + y).cos() * (2.0 * y).sin());
        let (gb, gq) = basis.apply_g_spectral(0, &b, &q).unwrap();
        let (ggb, ggq) = basis.apply_g_spectral(0, &gb, &gq).unwrap();
        let (hb, hq) = basis.apply_g2(0, &b, &q).unwrap();
        let rel = |a: &Field, h: &Field| a.sub(&h.scaled(2.0)).unwrap().max_abs() / h.max_abs().max(1e-300);
        assert!(rel(&ggb, &hb) <= 1e-8);
        assert!(rel(&ggq, &hq) <= 1e-8);
    }

    #[test]
    fn flux_g_squared_approaches_g2() {
        let mut last = f64::INFINITY;
        for n in [32, 64, 128] {
            let s = spec(n);
            let basis = NoiseBasis::new(s, vec![NoiseMode::Fourier { k: [1, 1], amplitude: 0.5, phase: 0.2 }]).unwrap();
            let b = Field::from_fn(s, |x, y| x.sin() * y.cos());
            let q = Field::from_fn(s, |x, y| (x - y).sin());
            let cfg = TransportConfig::default();
            let (gb, gq) = basis.apply_g(0, &b, &q, &cfg).unwrap();
            let (ggb, ggq) = basis.apply_g(0, &gb, &gq, &cfg).unwrap();
            let (hb, hq) = basis.apply_g2(0, &b, &q).unwrap();
            let err = ggb
                .sub(&hb.scaled(2.0))
                .unwrap()
                .max_abs()
                .max(ggq.sub(&hq.scaled(2.0)).unwrap().max_abs());
            assert!(err < 0.7 * last, "{n}: {err}");
            last = err;
        }
    }

    #[test]
    fn g_conserves_totals_and_commutes_with_shifts() {
        let s = spec(16);
        let basis = NoiseBasis::new(s, vec![NoiseMode::Constant { v: [0.8, 0.3] }]).unwrap();
        let b = Field::from_fn(s, |x, y| (x + y).sin().powi(3) + 0.1 * x.cos());
        let q = Field::from_fn(s, |x, y| (2.0 * x).sin() * y.cos());
        let cfg = TransportConfig::default();
        let (db, dq) = basis.apply_g(0, &b, &q, &cfg).unwrap();
        assert!(db.sum().abs() < 1e-12 && dq.sum().abs() < 1e-12);

        let shift = |f: &Field, di: usize, dj: usize| {
            let mut out = vec![0.0; s.len()];
            for j in 0..s.ny {
                for i in 0..s.nx {
                    out[s.index((i + di) % s.nx, (j + dj) % s.ny)] = f.get(i, j);
                }
            }
            Field::from_values(s, out).unwrap()
        };
        let (sb, sq) = basis.apply_g(0, &shift(&b, 3, 5), &shift(&q, 3, 5), &cfg).unwrap();
        assert_eq!(sb, shift(&db, 3, 5));
        assert_eq!(sq, shift(&dq, 3, 5));
    }

    #[test]
    fn refinement_preserves_parents_exactly() {
        let p = sample_path(42, 3, 17, 0.01, 2, 0).unwrap();
        let r = p.refine();
        let rr = r.refine();
        for i in 0..2 {
            for n in 0..17 {
                assert_eq!(r.increments[i][2 * n] + r.increments[i][2 * n + 1], p.increments[i][n]);
                assert_eq!(rr.block_increments(n, 2)[i], p.increments[i][n]);
            }
        }
        assert_eq!(sample_path(42, 3, 17, 0.01, 2, 2).unwrap(), rr);
    }

    #[test]
    fn same_keys_same_path() {
        let a = sample_path(7, 1, 64, 0.1, 3, 3).unwrap();
        let b = sample_path(7, 1, 64, 0.1, 3, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_path(7, 2, 64, 0.1, 3, 3).unwrap();
        assert_ne!(a.increments, c.increments);
        let d = sample_path(8, 1, 64, 0.1, 3, 3).unwrap();
        assert_ne!(a.increments, d.increments);
        assert_ne!(a.increments[0], a.increments[1]);
    }

    #[test]
    fn increment_variance_matches_step() {
        let n = 100_000;
        for (level, dt) in [(0u32, 0.01), (2, 0.04)] {
            let p = sample_path(11, 0, n >> level, dt, 1, level).unwrap();
            let h = p.fine_dt();
            let w = &p.increments[0];
            let m = w.len() as f64;
            let mean: f64 = w.iter().sum::<f64>() / m;
            let var: f64 = w.iter().map(|x| x * x).sum::<f64>() / m;
            // Var(ΔW²) = 2h²
            let se = (2.0f64).sqrt() * h / m.sqrt();
            assert!((var - h).abs() < 5.0 * se, "level {level}: {var} vs {h}");
            assert!(mean.abs() < 5.0 * (h / m).sqrt());
        }
    }

    #[test]
    fn refined_halves_are_independent_bridges() {
        // The two halves of a bridge split are each N(0, h/2) and have
        // correlation 0: E[l r] = 0.
        let p = sample_path(5, 0, 50_000, 1.0, 1, 1).unwrap();
        let w = &p.increments[0];
        let m = (w.len() / 2) as f64;
        let cross: f64 = w.chunks(2).map(|c| c[0] * c[1]).sum::<f64>() / m;
        let se = 0.5 / m.sqrt();
        assert!(cross.abs() < 5.0 * se);
    }

    #[test]
    fn zero_path_and_validation() {
        let z = BrownianPath::zero(4, 0.1, 2, 1);
        assert_eq!(z.n_fine(), 8);
        assert!(z.increments.iter().flatten().all(|&w| w == 0.0));
        assert!(sample_path(0, 0, 4, -1.0, 1, 0).is_err());
        assert!(sample_path(0, 0, 4, 0.1, 1, 40).is_err());
        let p = sample_path(0, 0, 4, PI, 1, 0).unwrap();
        assert_eq!(p.cumulative(0).len(), 4);
    }
}
