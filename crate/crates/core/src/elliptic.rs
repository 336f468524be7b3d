//! Helmholtz inversion `q = (Δ − 1)ψ + f`, the energy kernel `K = 1 − Δ⁻¹`
//! and the periodic Green's function, all as exact spectral multipliers.

use num_complex::Complex64;

use crate::error::{Result, StqgError};
use crate::torus::{Field, SpectralField, VectorField};

/// Spectral multiplication by `−1/(|k|² + 1)`, i.e. `(Δ − 1)⁻¹ w`.
///
/// With the coefficient normalisation of [`crate::torus`] this is the
/// convolution `|𝕋²|⁻¹ (G^per * w)` against the series
/// `G^per(x) = −Σ_k e^{ik·x} / (|k|² + 1)`.
pub fn greens_convolve(w: &Field) -> Result<Field> {
    Ok(greens_spectral(&w.to_spectral()?).to_field())
}

fn greens_spectral(w: &SpectralField) -> SpectralField {
    w.map_modes(|wave, c| -c / (wave.k2() + 1.0))
}

/// `(Δ − 1) ψ`, spectrally.
pub fn helmholtz(psi: &Field) -> Result<Field> {
    Ok(psi
        .to_spectral()?
        .map_modes(|w, c| -(w.k2() + 1.0) * c)
        .to_field())
}

/// Stream function with `ψ̂(k) = −(q − f)^(k) / (|k|² + 1)` for every resolved
/// `k`, including `k = 0`.
pub fn solve_streamfunction(q: &Field, f: &Field) -> Result<Field> {
    greens_convolve(&q.sub(f)?)
}

/// `(ψ, u = ∇⊥ψ)` from potential vorticity; `u` carries divergence-free face
/// velocities.
pub fn velocity_from_q(q: &Field, f: &Field) -> Result<(Field, VectorField)> {
    let psi_hat = greens_spectral(&q.sub(f)?.to_spectral()?);
    let u = VectorField::from_stream_spectral(&psi_hat);
    Ok((psi_hat.to_field(), u))
}

fn require_zero_mean(v: &Field, what: &str) -> Result<()> {
    if v.is_zero_mean() {
        Ok(())
    } else {
        Err(StqgError::NonZeroMean {
            what: what.to_string(),
            mean: v.mean(),
        })
    }
}

/// `K * u = (1 − Δ⁻¹) u`: multiplier `1 + 1/|k|²` on `k ≠ 0`. Both components
/// must have zero mean.
pub fn apply_k(u: &VectorField) -> Result<VectorField> {
    require_zero_mean(&u.x, "u_x")?;
    require_zero_mean(&u.y, "u_y")?;
    let k = |v: &Field| -> Result<Field> {
        Ok(v.to_spectral()?
            .map_modes(|w, c| {
                let k2 = w.k2();
                if k2 == 0.0 {
                    c
                } else {
                    c * (1.0 + 1.0 / k2)
                }
            })
            .to_field())
    };
    VectorField::new(k(&u.x)?, k(&u.y)?)
}

/// Scalar curl `∂x u_y − ∂y u_x`.
pub fn curl(u: &VectorField) -> Result<Field> {
    let ux = u.x.to_spectral()?;
    let uy = u.y.to_spectral()?;
    let coeffs: Vec<Complex64> = {
        let dy = ux.map_modes(|w, c| w.ddy() * c);
        let dx = uy.map_modes(|w, c| w.ddx() * c);
        dx.coeffs()
            .iter()
            .zip(dy.coeffs())
            .map(|(a, b)| a - b)
            .collect()
    };
    Ok(SpectralField::from_coeffs(*u.spec(), coeffs)?.to_field())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusSpec;
    use std::f64::consts::PI;

    fn smooth_random(spec: TorusSpec, seed: u64, kmax: i64) -> Field {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut modes = Vec::new();
        for m1 in -kmax..=kmax {
            for m2 in -kmax..=kmax {
                modes.push((m1 as f64, m2 as f64, next(), next()));
            }
        }
        Field::from_fn(spec, |x, y| {
            modes
                .iter()
                .map(|(a, b, c, d)| c * (a * x + b * y).cos() + d * (a * x + b * y).sin())
                .sum()
        })
    }

    #[test]
    fn zero_source_gives_zero_streamfunction() {
        let spec = TorusSpec::square(16).unwrap();
        let z = Field::zeros(spec);
        let f = smooth_random(spec, 1, 3);
        assert_eq!(solve_streamfunction(&f, &f).unwrap().max_abs(), 0.0);
        assert_eq!(greens_convolve(&z).unwrap().max_abs(), 0.0);
        let (_, u) = velocity_from_q(&f, &f).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
    }

    #[test]
    fn helmholtz_eigenfunction() {
        let spec = TorusSpec::square(16).unwrap();
        let q = Field::from_fn(spec, |x, _| -2.0 * x.cos());
        let f = Field::zeros(spec);
        let psi = solve_streamfunction(&q, &f).unwrap();
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let (x, _) = spec.center(i, j);
                assert!((psi.get(i, j) - x.cos()).abs() < 1e-14);
            }
        }
        let (_, u) = velocity_from_q(&q, &f).unwrap();
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let (x, _) = spec.center(i, j);
                assert!(u.x.get(i, j).abs() < 1e-14);
                assert!((u.y.get(i, j) + x.sin()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn streamfunction_inverts_forward_operator() {
        let spec = TorusSpec::square(32).unwrap();
        let q = smooth_random(spec, 2, 10);
        let f = smooth_random(spec, 3, 4);
        let psi = solve_streamfunction(&q, &f).unwrap();
        let w = q.sub(&f).unwrap();
        let back = helmholtz(&psi).unwrap();
        let err = back.sub(&w).unwrap().max_abs();
        assert!(err <= 1e-10 * w.max_abs().max(1.0));
    }

    #[test]
    fn lemma_multiplier_bound() {
        let spec = TorusSpec::square(32).unwrap();
        let f = Field::zeros(spec);
        for seed in 0..5 {
            let q = smooth_random(spec, seed, 12);
            let (_, u) = velocity_from_q(&q, &f).unwrap();
            for k in 0..3 {
                let lhs = u.sobolev_norm(k as f64 + 1.0);
                let rhs = q.sobolev_norm(k as f64);
                assert!(lhs <= rhs, "k = {k}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn kernel_doubles_unit_mode() {
        let spec = TorusSpec::square(16).unwrap();
        let u = crate::torus::perp_gradient(&Field::from_fn(spec, |x, _| x.sin())).unwrap();
        let ku = apply_k(&u).unwrap();
        for k in 0..spec.len() {
            assert!((ku.y.values()[k] - 2.0 * u.y.values()[k]).abs() < 1e-13);
            assert!((ku.x.values()[k] - 2.0 * u.x.values()[k]).abs() < 1e-13);
        }
        let z = apply_k(&VectorField::zeros(spec)).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
    }

    #[test]
    fn kernel_rejects_mean_flow() {
        let spec = TorusSpec::square(8).unwrap();
        let u = VectorField::uniform(spec, 1.0, 0.0);
        assert!(matches!(apply_k(&u), Err(StqgError::NonZeroMean { .. })));
    }

    #[test]
    fn curl_of_kernel_is_helmholtz_of_streamfunction() {
        let spec = TorusSpec::square(32).unwrap();
        let mut psi = smooth_random(spec, 9, 12);
        psi.remove_mean();
        let u = crate::torus::perp_gradient(&psi).unwrap();
        let lhs = curl(&apply_k(&u).unwrap()).unwrap();
        let rhs = helmholtz(&psi).unwrap();
        assert!(lhs.sub(&rhs).unwrap().l2_norm() <= 1e-10);
    }

    #[test]
    fn kernel_is_coercive() {
        let spec = TorusSpec::square(32).unwrap();
        for seed in 20..25 {
            let u = crate::torus::perp_gradient(&smooth_random(spec, seed, 8)).unwrap();
            let ku = apply_k(&u).unwrap();
            let lhs = u.inner(&ku).unwrap();
            assert!(lhs >= u.l2_norm().powi(2) * (1.0 - 1e-12));
        }
    }

    /// `G^per` evaluated by direct summation over the same band as the grid.
    fn green_series(spec: TorusSpec, x: f64, y: f64) -> f64 {
        let (nx, ny) = (spec.nx as i64, spec.ny as i64);
        let mut acc = 0.0;
        for m1 in -nx / 2..nx / 2 {
            for m2 in -ny / 2..ny / 2 {
                let (k1, k2) = (m1 as f64, m2 as f64);
                acc -= (k1 * x + k2 * y).cos() / (k1 * k1 + k2 * k2 + 1.0);
            }
        }
        acc
    }

    #[test]
    fn impulse_response_matches_series() {
        let spec = TorusSpec::square(16).unwrap();
        let mut w = Field::zeros(spec);
        w.values_mut()[0] = 1.0 / spec.cell_area();
        let g = greens_convolve(&w).unwrap().scaled(spec.area());
        let (x0, y0) = spec.center(0, 0);
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let (x, y) = spec.center(i, j);
                let oracle = green_series(spec, x - x0, y - y0);
                assert!((g.get(i, j) - oracle).abs() < 1e-12, "{i},{j}");
            }
        }
    }

    #[test]
    fn green_identity_has_torus_area() {
        let spec = TorusSpec::square(64).unwrap();
        let mut w = Field::zeros(spec);
        w.values_mut()[0] = 1.0 / spec.cell_area();
        let g = greens_convolve(&w).unwrap().scaled(spec.area());
        let (x0, y0) = spec.center(0, 0);
        for (l1, l2) in [(0.0, 0.0), (1.0, 0.0), (2.0, -3.0), (5.0, 7.0)] {
            let mut re = 0.0;
            let mut im = 0.0;
            for j in 0..spec.ny {
                for i in 0..spec.nx {
                    let (x, y) = spec.center(i, j);
                    let ph: f64 = l1 * (x - x0) + l2 * (y - y0);
                    let lam = -(l1 * l1 + l2 * l2 + 1.0);
                    re += g.get(i, j) * lam * ph.cos();
                    im += g.get(i, j) * lam * ph.sin();
                }
            }
            re *= spec.cell_area();
            im *= spec.cell_area();
            assert!((re - 4.0 * PI * PI).abs() < 1e-8, "{re}");
            assert!(im.abs() < 1e-8);
        }
    }
}
