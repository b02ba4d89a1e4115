//! Josephson-junction sector coupled to semi-infinite lines.
//!
//! The boundary network joining `N` line ends to `M` junction nodes is
//! described by its full capacitance matrix `C`, inverse-inductance matrix
//! `L⁻¹` and gyration matrix `Y_g = [[Y₀, −Y_{0J}], [Y_{0J}ᵀ, Y_J]]`, with
//! line indices first.  Eliminating the line-boundary charges leaves the
//! line modes coupled to the junction charges `Q̄` and fluxes `Φ̄` through
//!
//! ```text
//! Γ^Q = A₀ Ã_{0J}⁻¹,      Γ^Φ = G̃_{0J} + Γ^Q Y_J,
//! ```
//!
//! and dresses the junction inductance with `Γ^Φᵀ A₀⁻¹ Γ^Φ`, the gyrator
//! term `Y_J C̃_J⁻¹ Y_Jᵀ/4` and the antisymmetric matrix `𝖴` built from the
//! line modes.  Coupling strengths use the basis-independent boundary Gram
//! `S(Ω) = Σ_λ U U ᵀ(0)`:
//!
//! ```text
//! (g^C_j)² = (Ω/2) [Γ^Qᵀ S Γ^Q]_jj,      (g^L_j)² = [B̃_{0J}⁻ᵀ S B̃_{0J}⁻¹]_jj / (2Ω)
//! ```
//!
//! in units with `ħ = 1`.  These follow from normalizing each coupled line
//! mode pair to unit frequency-weighted amplitude.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::abg::{AbgSolver, BoundarySpec, OmegaGrid, Quadrature};
use crate::error::{Error, Result};
use crate::numerics::{geometric_grid, integrate_log_panels, loglog_slope, par_map};

/// Lumped network joining `N` line ends to `M` junction nodes.
#[derive(Clone, Debug, Serialize)]
pub struct JunctionNetwork {
    /// Line capacitance per unit length (length `N`).
    pub line_c: DVector<f64>,
    /// Line inductance per unit length (length `N`).
    pub line_l: DVector<f64>,
    /// Capacitance matrix over `[line ends | junction nodes]`.
    pub capacitance: DMatrix<f64>,
    /// Inverse-inductance matrix over the same nodes.
    pub inv_inductance: DMatrix<f64>,
    /// Gyration matrix over the same nodes (skew).
    pub gyration: DMatrix<f64>,
}

/// Static (Ω-independent) part of the coupled problem.
#[derive(Clone, Debug, Serialize)]
pub struct JunctionSector {
    pub n_lines: usize,
    pub n_junctions: usize,
    /// Boundary of the line problem (`A₀`, `B₀`, `G₀`, `Δ`).
    pub boundary: BoundarySpec,
    pub gamma_q: DMatrix<f64>,
    pub gamma_phi: DMatrix<f64>,
    /// `B̃_{0J}⁻¹ = c^{−1/2} [L⁻¹]_{0J}`.
    pub b0j_inv: DMatrix<f64>,
    /// Original junction block `[C⁻¹]_J` (charge energy of `Q̄`).
    pub cj_inv: DMatrix<f64>,
    /// Schur complement `C̃_J⁻¹ = [C⁻¹]_J − [C⁻¹]_{J0}[C⁻¹]_0⁻¹[C⁻¹]_{0J}`.
    pub cj_inv_tilde: DMatrix<f64>,
    pub lj_inv: DMatrix<f64>,
    pub y_j: DMatrix<f64>,
}

fn block(m: &DMatrix<f64>, r: usize, c: usize, nr: usize, nc: usize) -> DMatrix<f64> {
    m.view((r, c), (nr, nc)).into_owned()
}

fn scale_rows(d: &DVector<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)])
}

impl JunctionNetwork {
    /// Checks dimensions, symmetry and positivity.
    pub fn validate(&self) -> Result<(usize, usize)> {
        let n = self.line_c.len();
        if n == 0 || self.line_l.len() != n {
            return Err(Error::schema("lines", "line c and l must be nonempty and of equal length"));
        }
        if self.line_c.iter().chain(self.line_l.iter()).any(|v| !(*v > 0.0)) {
            return Err(Error::schema("lines", "line parameters must be positive"));
        }
        let t = self.capacitance.nrows();
        if t <= n {
            return Err(Error::schema("capacitance", "no junction nodes"));
        }
        for (name, m) in
            [("capacitance", &self.capacitance), ("inv_inductance", &self.inv_inductance), ("gyration", &self.gyration)]
        {
            if m.nrows() != t || m.ncols() != t {
                return Err(Error::schema(name, format!("expected {t}×{t} matrix")));
            }
        }
        let tol = |m: &DMatrix<f64>| 1e-12 * m.amax().max(f64::MIN_POSITIVE);
        if (&self.capacitance - self.capacitance.transpose()).amax() > tol(&self.capacitance)
            || (&self.inv_inductance - self.inv_inductance.transpose()).amax() > tol(&self.inv_inductance)
        {
            return Err(Error::schema("network", "capacitance and inverse inductance must be symmetric"));
        }
        if (&self.gyration + self.gyration.transpose()).amax() > tol(&self.gyration) {
            return Err(Error::schema("gyration", "gyrator not skew-symmetric"));
        }
        Ok((n, t - n))
    }

    /// Builds the junction sector: rescales the line blocks and computes the
    /// transformation matrices that decouple the junction charges from the
    /// line-boundary charges.
    pub fn sector(&self) -> Result<JunctionSector> {
        let (n, m) = self.validate()?;
        let cinv = self
            .capacitance
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("capacitance matrix is singular".into()))?;
        let c0inv = block(&cinv, 0, 0, n, n);
        let c0jinv = block(&cinv, 0, n, n, m);
        let cjinv = block(&cinv, n, n, m, m);
        let c0 = c0inv
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("line block of C⁻¹ is singular (no stray capacitance)".into()))?;
        let sc = self.line_c.map(f64::sqrt);
        let isc = sc.map(|v| 1.0 / v);
        let conj =
            |x: &DMatrix<f64>, d: &DVector<f64>| DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| d[i] * x[(i, j)] * d[j]);
        let a0 = conj(&c0, &isc);
        let a0j_inv = scale_rows(&sc, &c0jinv);
        let gamma_q = &a0 * &a0j_inv;
        let b0_inv = conj(&block(&self.inv_inductance, 0, 0, n, n), &isc);
        let b0 = b0_inv.try_inverse().ok_or_else(|| {
            Error::Numerical("line block of L⁻¹ is singular: the boundary needs an inductive path".into())
        })?;
        let b0j_inv = scale_rows(&isc, &block(&self.inv_inductance, 0, n, n, m));
        let g0 = conj(&block(&self.gyration, 0, 0, n, n), &isc);
        // Y_g = [[Y₀, −Y_{0J}], [Y_{0J}ᵀ, Y_J]].
        let y0j = -block(&self.gyration, 0, n, n, m);
        let y_j = block(&self.gyration, n, n, m, m);
        let g0j = scale_rows(&isc, &y0j);
        let gamma_phi = &g0j + &gamma_q * &y_j;
        let cj_inv_tilde = &cjinv - c0jinv.transpose() * &c0inv.clone().try_inverse().unwrap() * &c0jinv;
        let delta = DVector::from_fn(n, |i, _| 1.0 / (self.line_l[i] * self.line_c[i]));
        let boundary = BoundarySpec::new(a0, b0, g0, delta)?;
        Ok(JunctionSector {
            n_lines: n,
            n_junctions: m,
            boundary,
            gamma_q,
            gamma_phi,
            b0j_inv,
            cj_inv: cjinv,
            cj_inv_tilde: (&cj_inv_tilde + cj_inv_tilde.transpose()) * 0.5,
            lj_inv: block(&self.inv_inductance, n, n, m, m),
            y_j,
        })
    }
}

/// Per-frequency interaction coefficients of one line-mode pair with the
/// junction variables.
#[derive(Clone, Debug, Serialize)]
pub struct PairCouplings {
    /// Coefficient of `G̃ · Q̄`: `U^Fᵀ Γ^Q`.
    pub g_to_q: DVector<f64>,
    /// Coefficient of `G̃ · Φ̄`: `U^Fᵀ Γ^Φ + Ω⁻¹ U^Gᵀ B̃_{0J}⁻¹`.
    pub g_to_phi: DVector<f64>,
    /// Coefficient of `F̃ · Q̄`: `−Ω U^Gᵀ Γ^Q`.
    pub f_to_q: DVector<f64>,
    /// Coefficient of `F̃ · Φ̄`: `−Ω U^Gᵀ Γ^Φ + U^Fᵀ B̃_{0J}⁻¹`.
    pub f_to_phi: DVector<f64>,
}

/// Coupling strengths on an Ω grid.
#[derive(Clone, Debug, Serialize)]
pub struct CouplingSpectrum {
    pub omega: Vec<f64>,
    /// `g^C_j(Ω)`, indexed `[Ω][j]`.
    pub g_c: Vec<Vec<f64>>,
    /// `g^L_j(Ω)`.
    pub g_l: Vec<Vec<f64>>,
}

/// Summary of the dressed junction sector.
#[derive(Clone, Debug, Serialize)]
pub struct CouplingReport {
    pub normalization: String,
    pub cutoffs_capacitive: Vec<f64>,
    pub cutoffs_inductive: Vec<f64>,
    pub gamma_q: DMatrix<f64>,
    pub gamma_phi: DMatrix<f64>,
    pub u_matrix: DMatrix<f64>,
    pub cj_inv: DMatrix<f64>,
    pub cj_inv_tilde: DMatrix<f64>,
    pub lj_inv_dressed: DMatrix<f64>,
    /// Coefficient `X` of `Q̄ᵀ X Φ̄` in the junction Hamiltonian.
    pub charge_flux_cross: DMatrix<f64>,
    /// Norm of the `𝖴`-induced correction to the junction two-form.
    pub two_form_correction: f64,
    /// Whether the correction exceeded the tolerance and a numerical
    /// Darboux transform was applied.
    pub darboux_applied: bool,
    /// Quadratic junction Hamiltonian `½ zᵀ K z` over `z = [Φ̄ | Q̄]` in the
    /// final canonical coordinates.
    pub junction_quadratic: DMatrix<f64>,
    /// Darboux map `z = S y` (identity when not applied).
    pub darboux: DMatrix<f64>,
    /// Log-log slopes of `g^C`, `g^L` fitted over `[10², 10³]·max cutoff`.
    pub slope_g_c: Vec<f64>,
    pub slope_g_l: Vec<f64>,
}

impl JunctionSector {
    pub fn solver(&self) -> Result<AbgSolver> {
        AbgSolver::new(self.boundary.clone())
    }

    /// Interaction coefficients of every mode pair at `Ω`.
    pub fn pair_couplings(&self, solver: &AbgSolver, omega: f64) -> Result<Vec<PairCouplings>> {
        let set = solver.modes(omega)?;
        Ok(set
            .pairs
            .iter()
            .map(|p| {
                let (uf, ug) = (p.f.u0(), p.g.u0());
                PairCouplings {
                    g_to_q: self.gamma_q.tr_mul(&uf),
                    g_to_phi: self.gamma_phi.tr_mul(&uf) + self.b0j_inv.tr_mul(&ug) / omega,
                    f_to_q: -self.gamma_q.tr_mul(&ug) * omega,
                    f_to_phi: -self.gamma_phi.tr_mul(&ug) * omega + self.b0j_inv.tr_mul(&uf),
                }
            })
            .collect())
    }

    /// `(g^C, g^L)` at one frequency from the closed-form boundary Gram.
    pub fn strengths(&self, solver: &AbgSolver, omega: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = solver.boundary_gram_closed(omega)?;
        let qc = self.gamma_q.transpose() * &s * &self.gamma_q;
        let ql = self.b0j_inv.transpose() * &s * &self.b0j_inv;
        let m = self.n_junctions;
        Ok((
            (0..m).map(|j| (0.5 * omega * qc[(j, j)]).max(0.0).sqrt()).collect(),
            (0..m).map(|j| (ql[(j, j)] / (2.0 * omega)).max(0.0).sqrt()).collect(),
        ))
    }

    /// Coupling strengths on a list of frequencies, evaluated in parallel.
    pub fn spectrum(&self, solver: &AbgSolver, omegas: &[f64], threads: usize) -> Result<CouplingSpectrum> {
        let rows: Result<Vec<_>> =
            par_map(omegas.len(), threads, |i| self.strengths(solver, omegas[i])).into_iter().collect();
        let (g_c, g_l) = rows?.into_iter().unzip();
        Ok(CouplingSpectrum { omega: omegas.to_vec(), g_c, g_l })
    }

    /// Lamb-shift proxy `Λ = Σ_j ∫ (g^C_j² + g^L_j²)/Ω dΩ` over the grid,
    /// plus the analytic high-frequency tail from `S ≈ S_∞/Ω²`.
    pub fn lamb_shift_proxy(&self, solver: &AbgSolver, q: &Quadrature) -> Result<f64> {
        let sum = |w: f64| -> f64 {
            match self.strengths(solver, w) {
                Ok((c, l)) => c.iter().chain(&l).map(|g| g * g).sum::<f64>() / w,
                Err(_) => f64::NAN,
            }
        };
        let v = integrate_log_panels(|w| DVector::from_element(1, sum(w)), &q.grid.nodes(), q.order, 1, q.threads)[0];
        if !v.is_finite() {
            return Err(Error::Numerical("Lamb-shift integrand failed to evaluate".into()));
        }
        let s_inf = solver.s_infinity();
        let hi = q.grid.omega_max;
        // (Ω/2)·ΓᵀS_∞Γ/Ω²/Ω integrates to tr(ΓᵀS_∞Γ)/(2Ω_max); the inductive
        // part decays as Ω⁻⁴ and contributes tr(·)/(6Ω_max³).
        let tq = (self.gamma_q.transpose() * &s_inf * &self.gamma_q).trace();
        let tl = (self.b0j_inv.transpose() * &s_inf * &self.b0j_inv).trace();
        Ok(v + tq / (2.0 * hi) + tl / (6.0 * hi * hi * hi))
    }

    /// Full report: `𝖴` by quadrature, dressed inductance, cross term,
    /// two-form correction and asymptotic slopes.
    pub fn report(&self, q: &Quadrature, darboux_tol: f64) -> Result<CouplingReport> {
        let solver = self.solver()?;
        let m = self.n_junctions;
        let u = solver.u_matrix(q)?;
        let a0_inv = solver.a_inv();
        let (gq, gp, b0j) = (&self.gamma_q, &self.gamma_phi, &self.b0j_inv);
        let lj =
            &self.lj_inv + gp.transpose() * a0_inv * gp + &self.y_j * &self.cj_inv_tilde * self.y_j.transpose() * 0.25
                - gp.transpose() * &u * b0j
                - b0j.transpose() * u.transpose() * gp;
        let lj = (&lj + lj.transpose()) * 0.5;
        let cross = gq.transpose() * (a0_inv * gp - &u * b0j) - &self.cj_inv_tilde * &self.y_j * 0.5;

        // Junction two-form over z = [Φ̄ | Q̄]: canonical J minus 2Γ_zᵀ𝖴Γ_z.
        let mut gz = DMatrix::zeros(self.n_lines, 2 * m);
        gz.view_mut((0, 0), (self.n_lines, m)).copy_from(gp);
        gz.view_mut((0, m), (self.n_lines, m)).copy_from(gq);
        let corr = gz.transpose() * &u * &gz * -2.0;
        let mut k = DMatrix::zeros(2 * m, 2 * m);
        k.view_mut((0, 0), (m, m)).copy_from(&lj);
        k.view_mut((m, m), (m, m)).copy_from(&self.cj_inv);
        k.view_mut((m, 0), (m, m)).copy_from(&cross);
        k.view_mut((0, m), (m, m)).copy_from(&cross.transpose());
        let corr_norm = corr.amax();
        let (darboux, applied) = if corr_norm > darboux_tol {
            let omega = canonical_j_f64(m) + &corr;
            (darboux_float(&omega)?, true)
        } else {
            (DMatrix::identity(2 * m, 2 * m), false)
        };
        let k = darboux.transpose() * k * &darboux;

        // Asymptotic slopes.
        let (_, hi) = self.boundary.cutoff_range();
        let ws = geometric_grid(1e2 * hi, 1e3 * hi, 41);
        let spec = self.spectrum(&solver, &ws, q.threads)?;
        let slope = |pick: &dyn Fn(usize) -> Vec<f64>| -> Vec<f64> {
            (0..m)
                .map(|j| {
                    let ys = pick(j);
                    if ys.iter().all(|y| *y > 0.0) {
                        loglog_slope(&ws, &ys)
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        };
        let slope_g_c = slope(&|j| spec.g_c.iter().map(|r| r[j]).collect());
        let slope_g_l = slope(&|j| spec.g_l.iter().map(|r| r[j]).collect());
        let (ca, cb) = self.boundary.cutoffs();
        Ok(CouplingReport {
            normalization: "hbar = 1; g_C^2 = (Omega/2) [Gq^T S Gq]_jj, g_L^2 = [B0J^-T S B0J^-1]_jj / (2 Omega), S = sum_lambda U(0) U(0)^T".into(),
            cutoffs_capacitive: ca,
            cutoffs_inductive: cb,
            gamma_q: gq.clone(),
            gamma_phi: gp.clone(),
            u_matrix: u,
            cj_inv: self.cj_inv.clone(),
            cj_inv_tilde: self.cj_inv_tilde.clone(),
            lj_inv_dressed: lj,
            charge_flux_cross: cross,
            two_form_correction: corr_norm,
            darboux_applied: applied,
            junction_quadratic: k,
            darboux,
            slope_g_c,
            slope_g_l,
        })
    }
}

/// Float canonical matrix `[[0, −1], [1, 0]]` (positions first).
pub fn canonical_j_f64(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// Symplectic Gram–Schmidt in floating point: returns `S` with
/// `Sᵀ ω S = J` for a nondegenerate skew `ω`.  Pairs are chosen by the
/// largest available pairing `|aᵀ ω b|` for stability.
pub fn darboux_float(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = omega.nrows();
    if !dim.is_multiple_of(2) {
        return Err(Error::Numerical("odd-dimensional two-form".into()));
    }
    let n = dim / 2;
    let mut rest: Vec<DVector<f64>> =
        (0..dim).map(|i| DVector::from_fn(dim, |r, _| if r == i { 1.0 } else { 0.0 })).collect();
    let mut s = DMatrix::zeros(dim, dim);
    let pair = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(omega * b));
    for i in 0..n {
        let p = rest.remove(0);
        let (best, val) = rest
            .iter()
            .enumerate()
            .map(|(k, b)| (k, pair(&p, b)))
            .max_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).unwrap())
            .ok_or_else(|| Error::Numerical("degenerate two-form".into()))?;
        if val.abs() < 1e-12 * omega.amax() {
            return Err(Error::Numerical("degenerate two-form".into()));
        }
        let m = rest.remove(best) / -val;
        // Symplectic complement: pᵀωm = −1.
        for v in rest.iter_mut() {
            let beta = pair(&p, v);
            let alpha = -pair(&m, v);
            *v += &p * alpha + &m * beta;
        }
        s.set_column(i, &p);
        s.set_column(n + i, &m);
    }
    Ok(s)
}

/// Parameters of a single line capacitively (`C_c`) and inductively
/// (`L_c`) coupled to one junction node with capacitance `C_J`.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct SingleLineJunction {
    pub c: f64,
    pub l: f64,
    pub c_c: f64,
    pub c_j: f64,
    pub l_c: f64,
}

impl SingleLineJunction {
    /// The lumped network: `C_c` and `L_c` between line end and junction
    /// node, `C_J` from the junction node to ground.
    pub fn network(&self) -> JunctionNetwork {
        let (cc, cj, lc) = (self.c_c, self.c_j, self.l_c);
        JunctionNetwork {
            line_c: DVector::from_element(1, self.c),
            line_l: DVector::from_element(1, self.l),
            capacitance: DMatrix::from_row_slice(2, 2, &[cc, -cc, -cc, cc + cj]),
            inv_inductance: DMatrix::from_row_slice(2, 2, &[1.0 / lc, -1.0 / lc, -1.0 / lc, 1.0 / lc]),
            gyration: DMatrix::zeros(2, 2),
        }
    }

    /// Series capacitance `C_s = C_c C_J/(C_c + C_J)`.
    pub fn c_s(&self) -> f64 {
        self.c_c * self.c_j / (self.c_c + self.c_j)
    }

    /// `(a₀, b₀, Δ)` of the equivalent boundary.
    pub fn boundary(&self) -> (f64, f64, f64) {
        (self.c_s() / self.c, self.c * self.l_c, 1.0 / (self.l * self.c))
    }
}

/// Convenience: default quadrature for a boundary.
pub fn default_quadrature(spec: &BoundarySpec, threads: usize) -> Quadrature {
    let mut q = Quadrature::new(OmegaGrid::default_for(spec));
    q.threads = threads;
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_junction() -> SingleLineJunction {
        SingleLineJunction { c: 1.0, l: 1.0, c_c: 0.4, c_j: 1.2, l_c: 2.0 }
    }

    #[test]
    fn single_line_matrices_match_hand_derivation() {
        let p = reference_junction();
        let s = p.network().sector().unwrap();
        let (a0, b0, d) = p.boundary();
        assert!((s.boundary.a[(0, 0)] - a0).abs() < 1e-14);
        assert!((s.boundary.b[(0, 0)] - b0).abs() < 1e-14);
        assert!((s.boundary.delta[0] - d).abs() < 1e-14);
        // Γ^Q = a₀·√c/C_J, B̃_{0J}⁻¹ = −1/(√c L_c).
        assert!((s.gamma_q[(0, 0)] - a0 * p.c.sqrt() / p.c_j).abs() < 1e-14);
        assert!((s.b0j_inv[(0, 0)] + 1.0 / (p.c.sqrt() * p.l_c)).abs() < 1e-14);
        assert_eq!(s.gamma_phi[(0, 0)], 0.0);
    }

    #[test]
    fn schur_complement_identity() {
        // C̃_J⁻¹ + Γ^Qᵀ A₀⁻¹ Γ^Q equals the original junction block.
        let net = JunctionNetwork {
            line_c: DVector::from_vec(vec![1.3, 0.8]),
            line_l: DVector::from_vec(vec![0.9, 1.1]),
            capacitance: DMatrix::from_row_slice(3, 3, &[2.0, -0.3, -0.5, -0.3, 1.5, -0.4, -0.5, -0.4, 1.7]),
            inv_inductance: DMatrix::from_row_slice(3, 3, &[1.0, 0.1, -0.2, 0.1, 0.8, -0.3, -0.2, -0.3, 0.9]),
            gyration: DMatrix::from_row_slice(3, 3, &[0.0, 0.2, -0.1, -0.2, 0.0, 0.3, 0.1, -0.3, 0.0]),
        };
        let s = net.sector().unwrap();
        let a0_inv = s.boundary.a.clone().try_inverse().unwrap();
        let lhs = &s.cj_inv_tilde + s.gamma_q.transpose() * a0_inv * &s.gamma_q;
        assert!((lhs - &s.cj_inv).amax() < 1e-13);
    }

    #[test]
    fn reciprocal_case_has_no_flux_coupling_through_gamma() {
        let s = reference_junction().network().sector().unwrap();
        let q = default_quadrature(&s.boundary, 2);
        let r = s.report(&q, 1e-12).unwrap();
        assert!(r.u_matrix.amax() < 1e-14);
        assert!(!r.darboux_applied);
        // L̃_J⁻¹ reduces to the bare 1/L_c.
        assert!((r.lj_inv_dressed[(0, 0)] - 0.5).abs() < 1e-14);
        assert!(r.charge_flux_cross.amax() < 1e-14);
    }

    #[test]
    fn darboux_float_canonicalizes() {
        let w = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.3, -1.2, 0.4, -0.3, 0.0, 0.1, -0.9, 1.2, -0.1, 0.0, 0.25, -0.4, 0.9, -0.25, 0.0],
        );
        let s = darboux_float(&w).unwrap();
        assert!((s.transpose() * &w * &s - canonical_j_f64(2)).amax() < 1e-12);
    }
}
