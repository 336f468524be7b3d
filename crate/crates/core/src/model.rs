//! Prognostic state and the fixed model data (bathymetry, background PV,
//! noise basis).

use serde::{Deserialize, Serialize};

use crate::elliptic::velocity_from_q;
use crate::error::Result;
use crate::noise::NoiseBasis;
use crate::torus::{perp_gradient, FaceVelocity, Field, TorusSpec, VectorField};

/// Buoyancy and potential vorticity with the derived stream function and
/// velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub b: Field,
    pub q: Field,
    pub psi: Field,
    pub u: VectorField,
    pub t: f64,
}

impl State {
    /// Builds the state and derives `ψ = (Δ − 1)⁻¹ (q − f)`, `u = ∇⊥ψ`.
    pub fn new(b: Field, q: Field, f: &Field, t: f64) -> Result<Self> {
        b.spec().ensure_same(q.spec())?;
        b.check_finite("b")?;
        q.check_finite("q")?;
        let (psi, u) = velocity_from_q(&q, f)?;
        Ok(State { b, q, psi, u, t })
    }

    pub fn spec(&self) -> &TorusSpec {
        self.b.spec()
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite() && self.q.is_finite()
    }
}

/// Which drift terms a step includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftTerms {
    /// `θ_R`-weighted self-advection plus the bathymetry source.
    #[default]
    Full,
    /// Only the bathymetry source `−(u_h·∇) b`.
    BathymetryOnly,
    /// No drift: pure noise transport.
    Off,
}

/// Time-independent model inputs.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub spec: TorusSpec,
    pub h: Field,
    pub f: Field,
    /// `u_h = ½ ∇⊥h`.
    pub u_h: VectorField,
    pub noise: NoiseBasis,
    bathymetry: bool,
}

impl ModelData {
    pub fn new(h: Field, f: Field, noise: NoiseBasis) -> Result<Self> {
        let spec = *h.spec();
        spec.ensure_same(f.spec())?;
        spec.ensure_same(noise.spec())?;
        h.check_finite("h")?;
        f.check_finite("f")?;
        let u_h = perp_gradient(&h.scaled(0.5))?;
        let bathymetry = h.max_cell_jump() > 0.0;
        Ok(ModelData {
            spec,
            h,
            f,
            u_h,
            noise,
            bathymetry,
        })
    }

    /// Flat bathymetry, zero background PV and no noise.
    pub fn flat(spec: TorusSpec) -> Self {
        Self::new(Field::zeros(spec), Field::zeros(spec), NoiseBasis::empty(spec)).expect("valid inputs")
    }

    pub fn with_noise(mut self, noise: NoiseBasis) -> Result<Self> {
        self.spec.ensure_same(noise.spec())?;
        self.noise = noise;
        Ok(self)
    }

    /// Whether `h` varies in space (a constant `h` has `u_h = 0`).
    pub fn has_bathymetry(&self) -> bool {
        self.bathymetry
    }

    pub(crate) fn u_h_faces(&self) -> &FaceVelocity {
        self.u_h.faces.as_ref().expect("u_h carries faces")
    }

    /// State with the derived fields of this model.
    pub fn state(&self, b: Field, q: Field, t: f64) -> Result<State> {
        State::new(b, q, &self.f, t)
    }
}
