//! Time integration of reduced Hamiltonian systems.
//!
//! Two fixed-step schemes are provided: classical RK4 (used for trajectory
//! comparisons, where both formulations are stepped identically) and the
//! three-stage Gauss–Legendre collocation method, which is symplectic and of
//! order six and is used for energy-conservation checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hamiltonian::NumericModel;

/// One classical Runge–Kutta step of `ẋ = f(t, x)`.
pub fn rk4_step<F>(f: &F, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Butcher tableau of the three-stage Gauss–Legendre method.
fn gl3_tableau() -> ([[f64; 3]; 3], [f64; 3], [f64; 3]) {
    let s = 15f64.sqrt();
    let a = [
        [5.0 / 36.0, 2.0 / 9.0 - s / 15.0, 5.0 / 36.0 - s / 30.0],
        [5.0 / 36.0 + s / 24.0, 2.0 / 9.0, 5.0 / 36.0 - s / 24.0],
        [5.0 / 36.0 + s / 30.0, 2.0 / 9.0 + s / 15.0, 5.0 / 36.0],
    ];
    let b = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];
    let c = [0.5 - s / 10.0, 0.5, 0.5 + s / 10.0];
    (a, b, c)
}

/// One Gauss–Legendre step, stage equations solved by fixed-point iteration.
///
/// Converges when `h·‖∂f/∂x‖` is small, which holds for the step sizes used
/// here (hundreds of steps per period).
pub fn gauss_legendre_step<F>(f: &F, t: f64, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let (a, b, c) = gl3_tableau();
    let k0 = f(t, x);
    let mut k = [k0.clone(), k0.clone(), k0];
    for _ in 0..100 {
        let mut next = k.clone();
        for i in 0..3 {
            let mut xi = x.clone();
            for j in 0..3 {
                xi += &k[j] * (h * a[i][j]);
            }
            next[i] = f(t + c[i] * h, &xi);
        }
        let delta: f64 = (0..3).map(|i| (&next[i] - &k[i]).amax()).fold(0.0, f64::max);
        let scale: f64 = (0..3).map(|i| next[i].amax()).fold(1e-300, f64::max);
        k = next;
        if delta <= 1e-15 * scale {
            let mut out = x.clone();
            for i in 0..3 {
                out += &k[i] * (h * b[i]);
            }
            return Ok(out);
        }
    }
    Err(Error::Numerical("Gauss–Legendre stage iteration did not converge".into()))
}

/// Vector field `η̇ = Ω⁻¹ ∇H(η, t)` of a model with a nondegenerate form.
pub struct HamiltonianFlow {
    pub model: NumericModel,
    omega_inv: DMatrix<f64>,
}

impl HamiltonianFlow {
    /// Builds the flow; fails if `omega` is singular.
    pub fn new(model: NumericModel, omega: &DMatrix<f64>) -> Result<Self> {
        let omega_inv = omega.clone().try_inverse().ok_or_else(|| Error::Numerical("two-form is singular".into()))?;
        Ok(Self { model, omega_inv })
    }

    /// Time derivative at `(t, x)`.
    pub fn rhs(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.omega_inv * self.model.gradient(x, t)
    }

    /// Samples `x(t_k)` at `t_k = k·h`, `k = 0..=steps`, using RK4.
    pub fn trajectory_rk4(&self, x0: &DVector<f64>, h: f64, steps: usize) -> Vec<DVector<f64>> {
        let f = |t: f64, x: &DVector<f64>| self.rhs(t, x);
        let mut out = Vec::with_capacity(steps + 1);
        let mut x = x0.clone();
        out.push(x.clone());
        for k in 0..steps {
            x = rk4_step(&f, k as f64 * h, &x, h);
            out.push(x.clone());
        }
        out
    }

    /// Samples `x(t_k)` using the Gauss–Legendre scheme.
    pub fn trajectory_gl(&self, x0: &DVector<f64>, h: f64, steps: usize) -> Result<Vec<DVector<f64>>> {
        let f = |t: f64, x: &DVector<f64>| self.rhs(t, x);
        let mut out = Vec::with_capacity(steps + 1);
        let mut x = x0.clone();
        out.push(x.clone());
        for k in 0..steps {
            x = gauss_legendre_step(&f, k as f64 * h, &x, h)?;
            out.push(x.clone());
        }
        Ok(out)
    }
}

/// Angular frequencies of the linearization about the origin.
///
/// Uses the quadratic form plus the curvature `a·K²` of each cosine, i.e.
/// the Hessian `Q − Σ a K Kᵀ`.  Returned values are `|Im λ|` of the
/// eigenvalues of `Ω⁻¹ Hess`, sorted and deduplicated to one per pair.
pub fn linear_frequencies(model: &NumericModel, omega: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = model.quad.nrows();
    let mut hess = model.quad.clone();
    for (a, k) in model.amps.iter().zip(&model.waves) {
        hess -= k * k.transpose() * *a;
    }
    let inv = omega.clone().try_inverse().ok_or_else(|| Error::Numerical("two-form is singular".into()))?;
    let m = inv * hess;
    let eig = m.complex_eigenvalues();
    let mut w: Vec<f64> = eig.iter().map(|z| z.im.abs()).collect();
    w.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Each frequency appears as ±iω; keep every second entry.
    let w: Vec<f64> = w.chunks(2).map(|c| c[c.len() - 1]).collect();
    debug_assert_eq!(w.len(), n / 2);
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator() -> impl Fn(f64, &DVector<f64>) -> DVector<f64> {
        |_t, x: &DVector<f64>| DVector::from_vec(vec![x[1], -x[0]])
    }

    #[test]
    fn rk4_harmonic_oscillator_phase() {
        let f = oscillator();
        let mut x = DVector::from_vec(vec![1.0, 0.0]);
        let n = 1000;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        for k in 0..n {
            x = rk4_step(&f, k as f64 * h, &x, h);
        }
        assert!((x[0] - 1.0).abs() < 1e-9 && x[1].abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_is_sixth_order() {
        let f = oscillator();
        let err = |n: usize| {
            let h = 2.0 * std::f64::consts::PI / n as f64;
            let mut x = DVector::from_vec(vec![1.0, 0.0]);
            for k in 0..n {
                x = gauss_legendre_step(&f, k as f64 * h, &x, h).unwrap();
            }
            ((x[0] - 1.0).powi(2) + x[1].powi(2)).sqrt()
        };
        let order = (err(20) / err(40)).log2();
        assert!((order - 6.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn gauss_legendre_conserves_quadratic_energy() {
        let f = oscillator();
        let h = 0.3;
        let mut x = DVector::from_vec(vec![0.3, 0.7]);
        let e0 = x.norm_squared();
        for k in 0..1000 {
            x = gauss_legendre_step(&f, k as f64 * h, &x, h).unwrap();
        }
        assert!((x.norm_squared() - e0).abs() < 1e-13);
    }
}
