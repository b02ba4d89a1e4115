//! Unreduced branch-level dynamics, used as an oracle for reductions.
//!
//! The circuit is integrated directly in the `2B` branch variables
//! `ζ = [φ | q]` as a differential-algebraic system
//!
//! ```text
//! F ζ̇ = 0                      (Kirchhoff and multiport constraints)
//! φ̇_b = q_b / C_b               (capacitor)
//! q̇_b = φ_b / L_b               (inductor)
//! q̇_b = I_c sin(2π φ_b / Φ_Q)   (Josephson junction, I_c = 2π E_J / Φ_Q)
//! φ̇_b = V_c sin(2π q_b / 2e)    (phase slip, V_c = 2π E_S / 2e)
//! φ̇_b = v(t),  q̇_b = i(t)       (sources)
//! ```
//!
//! Nothing from the symplectic machinery is used: the left null space of the
//! (constant) coefficient matrix yields hidden algebraic constraints, whose
//! time derivatives are appended before the velocity is solved for in the
//! least-squares sense.  After each step the state is projected back onto
//! the constraint manifold by Gauss–Newton iterations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::rk4_step;
use crate::error::{Error, Result};
use crate::graph::ConstraintSystem;
use crate::netlist::{value_f64, CircuitGraph, ElementKind, Waveform};
use crate::rational::{QMat, Q};

/// Constitutive law of one branch.
#[derive(Clone, Debug)]
enum Law {
    /// `φ̇ = q / C`.
    Capacitor(f64),
    /// `q̇ = φ / L`.
    Inductor(f64),
    /// `q̇ = I_c sin(κ φ)`.
    Junction { ic: f64, kappa: f64 },
    /// `φ̇ = V_c sin(κ q)`.
    PhaseSlip { vc: f64, kappa: f64 },
    /// `φ̇ = v(t)`.
    Voltage(Waveform),
    /// `q̇ = i(t)`.
    Current(Waveform),
}

impl Law {
    /// Whether the law prescribes `φ̇` (otherwise `q̇`).
    fn on_flux(&self) -> bool {
        matches!(self, Law::Capacitor(_) | Law::PhaseSlip { .. } | Law::Voltage(_))
    }
}

/// Solves `a x = b` in the least-squares, minimum-norm sense.
///
/// The normal equations are tried first (the systems here are small and
/// usually of full column rank); when the Cholesky factorization fails or
/// leaves a residual that an exact solve would not, the SVD handles the
/// rank-deficient case.
fn least_squares(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let scale = a.amax().max(1.0);
    // Tall systems go through AᵀA, wide ones through the minimum-norm form
    // x = Aᵀ(AAᵀ)⁻¹b.
    let fast = if a.nrows() >= a.ncols() {
        (a.transpose() * &a).cholesky().map(|ch| ch.solve(&a.tr_mul(b)))
    } else {
        (&a * a.transpose()).cholesky().map(|ch| a.tr_mul(&ch.solve(b)))
    };
    if let Some(x) = fast {
        let r = &a * &x - b;
        if x.iter().all(|v| v.is_finite()) && r.amax() <= 1e-12 * scale * (1.0 + x.amax() + b.amax()) {
            return x;
        }
    }
    let svd = a.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1.0);
    svd.solve(b, tol).expect("SVD solve with both factors")
}

/// Branch-level DAE of a circuit.
pub struct BranchDae {
    nb: usize,
    laws: Vec<(usize, Law)>,
    f: DMatrix<f64>,
    /// Pseudo-inverse of the constant coefficient matrix `E = [F; selectors]`.
    e_pinv: DMatrix<f64>,
    /// Orthonormal basis of `ker E`.
    e_null: DMatrix<f64>,
    /// Hidden constraints `Y g(ζ, t) = 0` restricted to constitutive rows.
    hidden: DMatrix<f64>,
}

impl BranchDae {
    /// Builds the DAE from a circuit and its constraint matrix.
    pub fn new(g: &CircuitGraph, cs: &ConstraintSystem) -> Self {
        let nb = g.n_branches();
        let fq = g.units.flux_quantum;
        let cq = g.units.charge_quantum;
        let mut laws = Vec::new();
        for (b, br) in g.branches.iter().enumerate() {
            let waveform = || g.drive_for(b).map(|d| d.waveform.clone()).unwrap_or(Waveform::Dc(0.0));
            let law = match &br.kind {
                ElementKind::Capacitor { c } => Law::Capacitor(value_f64(c)),
                ElementKind::Inductor { l } => Law::Inductor(value_f64(l)),
                ElementKind::JosephsonJunction { ej } => {
                    Law::Junction { ic: 2.0 * PI * value_f64(ej) / fq, kappa: 2.0 * PI / fq }
                }
                ElementKind::PhaseSlip { es } => {
                    Law::PhaseSlip { vc: 2.0 * PI * value_f64(es) / cq, kappa: 2.0 * PI / cq }
                }
                ElementKind::VoltageSource => Law::Voltage(waveform()),
                ElementKind::CurrentSource => Law::Current(waveform()),
                ElementKind::Port { .. } | ElementKind::UnattachedPort => continue,
            };
            laws.push((b, law));
        }
        // Exact coefficient matrix E = [F; selectors].
        let mut sel = QMat::zeros(laws.len(), 2 * nb);
        for (r, (b, law)) in laws.iter().enumerate() {
            let col = if law.on_flux() { *b } else { nb + b };
            sel[(r, col)] = Q::from_integer(1.into());
        }
        let e_exact = cs.f.vstack(&sel);
        let left = e_exact.left_kernel();
        let m = cs.f.nrows();
        // Only the constitutive components of left null vectors matter (g = 0 on F rows).
        let rows: Vec<usize> = (m..e_exact.nrows()).collect();
        let hidden = left.select_rows(&rows).transpose().to_f64();
        let e = e_exact.to_f64();
        let e_pinv = e.clone().pseudo_inverse(1e-12 * e.amax().max(1.0)).expect("SVD pseudo-inverse");
        let kernel = e_exact.kernel().to_f64();
        let e_null = if kernel.ncols() == 0 { kernel } else { kernel.qr().q() };
        BranchDae { nb, laws, f: cs.f.to_f64(), e_pinv, e_null, hidden }
    }

    /// Number of hidden algebraic constraints.
    pub fn n_hidden(&self) -> usize {
        self.hidden.nrows()
    }

    /// Right-hand sides of the constitutive rows.
    fn laws_rhs(&self, z: &DVector<f64>, t: f64) -> DVector<f64> {
        let nb = self.nb;
        DVector::from_iterator(
            self.laws.len(),
            self.laws.iter().map(|(b, law)| match law {
                Law::Capacitor(c) => z[nb + b] / c,
                Law::Inductor(l) => z[*b] / l,
                Law::Junction { ic, kappa } => ic * (kappa * z[*b]).sin(),
                Law::PhaseSlip { vc, kappa } => vc * (kappa * z[nb + b]).sin(),
                Law::Voltage(w) | Law::Current(w) => w.value(t),
            }),
        )
    }

    /// Jacobian of the constitutive right-hand sides with respect to `ζ`.
    fn laws_jac(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let nb = self.nb;
        let mut j = DMatrix::zeros(self.laws.len(), 2 * nb);
        for (r, (b, law)) in self.laws.iter().enumerate() {
            match law {
                Law::Capacitor(c) => j[(r, nb + b)] = 1.0 / c,
                Law::Inductor(l) => j[(r, *b)] = 1.0 / l,
                Law::Junction { ic, kappa } => j[(r, *b)] = ic * kappa * (kappa * z[*b]).cos(),
                Law::PhaseSlip { vc, kappa } => j[(r, nb + b)] = vc * kappa * (kappa * z[nb + b]).cos(),
                Law::Voltage(_) | Law::Current(_) => {}
            }
        }
        j
    }

    /// Explicit time derivative of the constitutive right-hand sides.
    fn laws_dt(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.laws.len(),
            self.laws.iter().map(|(_, law)| match law {
                Law::Voltage(w) | Law::Current(w) => w.derivative(t),
                _ => 0.0,
            }),
        )
    }

    /// Velocity `ζ̇` at `(t, ζ)`.
    ///
    /// The constant rows `E ζ̇ = [0; g]` give `ζ̇ = E⁺[0; g] + N y` with `N`
    /// spanning `ker E`; the differentiated hidden constraints then fix `y`
    /// in the minimum-norm sense.  Since `E⁺[0; g] ⟂ ker E` this is the
    /// minimum-norm solution of the full stacked system.
    pub fn rhs(&self, t: f64, z: &DVector<f64>) -> DVector<f64> {
        let m = self.f.nrows();
        let nl = self.laws.len();
        let mut c = DVector::zeros(m + nl);
        c.rows_mut(m, nl).copy_from(&self.laws_rhs(z, t));
        let xp = &self.e_pinv * c;
        if self.hidden.nrows() == 0 || self.e_null.ncols() == 0 {
            return xp;
        }
        let hj = &self.hidden * self.laws_jac(z);
        let rhs = -(&self.hidden * self.laws_dt(t)) - &hj * &xp;
        let y = least_squares(hj * &self.e_null, &rhs);
        xp + &self.e_null * y
    }

    /// Residual of all position-level constraints.
    pub fn constraint_residual(&self, z: &DVector<f64>, t: f64) -> DVector<f64> {
        let fz = &self.f * z;
        let hz = &self.hidden * self.laws_rhs(z, t);
        let mut r = DVector::zeros(fz.len() + hz.len());
        r.rows_mut(0, fz.len()).copy_from(&fz);
        r.rows_mut(fz.len(), hz.len()).copy_from(&hz);
        r
    }

    /// Gauss–Newton projection onto the constraint manifold.
    pub fn project(&self, z: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut z = z.clone();
        for _ in 0..5 {
            let r = self.constraint_residual(&z, t);
            if r.amax() < 1e-14 * z.amax().max(1.0) {
                break;
            }
            let m = self.f.nrows();
            let nh = self.hidden.nrows();
            let mut j = DMatrix::zeros(m + nh, 2 * self.nb);
            j.view_mut((0, 0), (m, 2 * self.nb)).copy_from(&self.f);
            if nh > 0 {
                j.view_mut((m, 0), (nh, 2 * self.nb)).copy_from(&(&self.hidden * self.laws_jac(&z)));
            }
            z -= least_squares(j, &r);
        }
        z
    }

    /// RK4 trajectory with projection after every step.
    pub fn trajectory(&self, z0: &DVector<f64>, h: f64, steps: usize) -> Result<Vec<DVector<f64>>> {
        let r0 = self.constraint_residual(z0, 0.0);
        let scale = z0.amax().max(1.0);
        if r0.amax() > 1e-9 * scale {
            return Err(Error::Numerical(format!("inconsistent initial state: constraint residual {:e}", r0.amax())));
        }
        let f = |t: f64, z: &DVector<f64>| self.rhs(t, z);
        let mut out = Vec::with_capacity(steps + 1);
        let mut z = z0.clone();
        out.push(z.clone());
        for k in 0..steps {
            let t1 = (k + 1) as f64 * h;
            z = self.project(&rk4_step(&f, k as f64 * h, &z, h), t1);
            out.push(z.clone());
        }
        Ok(out)
    }

    /// Energy-carrying observables: `q` of capacitors and phase slips, `φ`
    /// of inductors and junctions.  Returns `(label, value)` pairs.
    pub fn observables(&self, g: &CircuitGraph, z: &DVector<f64>) -> Vec<(String, f64)> {
        let nb = self.nb;
        self.laws
            .iter()
            .filter_map(|(b, law)| match law {
                Law::Capacitor(_) | Law::PhaseSlip { .. } => Some((format!("q:{}", g.branches[*b].id), z[nb + b])),
                Law::Inductor(_) | Law::Junction { .. } => Some((format!("phi:{}", g.branches[*b].id), z[*b])),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_constraints, spanning_tree, TreePreference};
    use crate::netlist::parse_netlist;

    #[test]
    fn lc_loop_oscillates_at_resonance() {
        let g = parse_netlist(
            r#"{"nodes":["a"],"ground":"g","branches":[
            {"id":"C","from":"a","to":"g","kind":"capacitor","params":{"C":"1"}},
            {"id":"L","from":"a","to":"g","kind":"inductor","params":{"L":"4"}}]}"#,
        )
        .unwrap();
        let t = spanning_tree(&g, &TreePreference::CapacitiveFirst).unwrap();
        let cs = build_constraints(&g, &t).unwrap();
        let dae = BranchDae::new(&g, &cs);
        // φ_C = φ_L = 1, charges zero: flux oscillates with ω = 1/2.
        let z0 = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]);
        let period = 4.0 * PI;
        let n = 2000;
        let traj = dae.trajectory(&z0, period / n as f64, n).unwrap();
        let quarter = &traj[n / 4];
        assert!(quarter[0].abs() < 1e-8, "{}", quarter[0]);
        let end = &traj[n];
        assert!((end[0] - 1.0).abs() < 1e-8);
    }
}
