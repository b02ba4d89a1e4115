//! Three finite lines joined through a frequency-dependent circulator, the
//! first line capacitively coupled at its far end to a Josephson junction.
//!
//! At `x = 0` each line sees a stray capacitance matrix `C` and inverse
//! inductance `L⁻¹`, plus a transformer `T` feeding a gyrator of resistance
//! `R` through inductors `L_r`.  The internal gyrator fluxes, rescaled by
//! `R^{−1/2}`, form one canonical pair oscillating at `Ω_G = R/L_r` and
//! couple to the boundary fluxes through `Γ = c^{−1/2} T L_r⁻¹ R^{1/2}`;
//! their static load `T L_r⁻¹ Tᵀ` joins the boundary inductance.  As
//! `R → ∞` the pair can be eliminated adiabatically, and since
//! `Γ Ω_G⁻¹ Γᵀ` equals that static load exactly, the boundary reverts to
//! `L⁻¹` alone: an open gyrator disconnects the `L_r` branches.
//!
//! The junction side terminates line 1 with the series capacitance
//! `C_s = C_c C_J/(C_c + C_J)`, i.e. `a_d = C_s/c₁`, and the junction
//! charge couples to each line mode through `(√c₁/C_J)·V¹(d)/Ω`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_line::{FiniteLines, FiniteMode, Termination};

/// Circuit parameters (any consistent unit system).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CirculatorParams {
    /// Capacitance per unit length of each line.
    pub c: Vec<f64>,
    /// Inductance per unit length of each line.
    pub l: Vec<f64>,
    pub lengths: Vec<f64>,
    /// Stray capacitance matrix at the `x = 0` ends.
    pub c_boundary: Vec<Vec<f64>>,
    /// Stray inverse-inductance matrix at the `x = 0` ends.
    pub l_inv_boundary: Vec<Vec<f64>>,
    /// Transformer matrix (`lines × 2`).
    pub transformer: Vec<Vec<f64>>,
    pub l_r: f64,
    /// Gyration resistance; `None` is the open-gyrator limit `R → ∞`.
    pub r: Option<f64>,
    pub c_c: f64,
    pub c_j: f64,
    /// Far ends of lines 2 and beyond (line 1 ends on the junction).
    #[serde(default)]
    pub other_ends: Option<Vec<Termination>>,
}

/// One dressed line mode and its couplings.
#[derive(Clone, Debug, Serialize)]
pub struct CirculatorMode {
    pub omega: f64,
    /// Index of the line carrying most of the boundary amplitude.
    pub dominant_line: usize,
    pub u0: Vec<f64>,
    pub u1_d: f64,
    pub v1_d: f64,
    /// Coefficient of `G̃_n Q_J`: `(√c₁/C_J) V¹(d)/Ω`.
    pub jj_coupling: f64,
    /// Coefficients of `F̃_n Φ̃_gr`: `U(0)ᵀ Γ`.
    pub gyrator_coupling: Option<[f64; 2]>,
}

/// Result of the circulator analysis.
#[derive(Clone, Debug, Serialize)]
pub struct CirculatorReport {
    pub a_d: f64,
    /// Frequency of the internal gyrator pair (absent for `R → ∞`).
    pub omega_g: Option<f64>,
    pub gamma_gyrator: Option<DMatrix<f64>>,
    pub modes: Vec<CirculatorMode>,
    /// `max_n |V¹(d) + a_d Ω U¹(d)| / (a_d Ω |U|_max)`.
    pub far_end_identity_residual: f64,
    /// `max_n |V¹′(d) − Ω U¹(d)| / (Ω |U|_max)`.
    pub dual_derivative_residual: f64,
    /// Mode count at the top mode over the Weyl estimate.
    pub weyl_ratio: f64,
}

fn matrix(rows: &[Vec<f64>], nr: usize, nc: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::schema(name, format!("expected {nr}×{nc} matrix")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl CirculatorParams {
    pub fn n_lines(&self) -> usize {
        self.c.len()
    }

    /// `a_d = C_s/c₁`.
    pub fn a_d(&self) -> f64 {
        self.c_c * self.c_j / (self.c_c + self.c_j) / self.c[0]
    }

    /// The finite-line boundary problem with the static gyrator load.
    pub fn lines(&self) -> Result<FiniteLines> {
        let n = self.n_lines();
        if n == 0 || self.l.len() != n || self.lengths.len() != n {
            return Err(Error::schema("circulator", "line parameter arrays must have equal nonzero length"));
        }
        if !(self.l_r > 0.0 && self.c_c > 0.0 && self.c_j > 0.0) || self.r.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::schema("circulator", "L_r, C_c, C_J and R must be positive"));
        }
        let cb = matrix(&self.c_boundary, n, n, "c_boundary")?;
        let mut linv = matrix(&self.l_inv_boundary, n, n, "l_inv_boundary")?;
        let t = matrix(&self.transformer, n, 2, "transformer")?;
        if self.r.is_some() {
            linv += &t * t.transpose() / self.l_r;
        }
        let isc: Vec<f64> = self.c.iter().map(|c| 1.0 / c.sqrt()).collect();
        let conj = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| isc[i] * m[(i, j)] * isc[j]);
        let mut ends = vec![Termination::Capacitive(self.a_d())];
        match &self.other_ends {
            Some(e) if e.len() == n - 1 => ends.extend(e.iter().copied()),
            Some(_) => return Err(Error::schema("other_ends", "need one termination per line after the first")),
            None => ends.extend(std::iter::repeat_n(Termination::Open, n - 1)),
        }
        FiniteLines::new(
            conj(&cb),
            conj(&linv),
            DVector::from_fn(n, |i, _| 1.0 / (self.c[i] * self.l[i])),
            DVector::from_column_slice(&self.lengths),
            ends,
        )
    }

    /// Rescaled gyrator coupling `c^{−1/2} T L_r⁻¹ R^{1/2}`.
    pub fn gamma_gyrator(&self) -> Option<DMatrix<f64>> {
        let n = self.n_lines();
        let r = self.r?;
        let t = matrix(&self.transformer, n, 2, "transformer").ok()?;
        Some(DMatrix::from_fn(n, 2, |i, j| t[(i, j)] / self.c[i].sqrt() * r.sqrt() / self.l_r))
    }

    /// Solves for the lowest `count` dressed modes.
    pub fn analyze(&self, count: usize) -> Result<CirculatorReport> {
        let lines = self.lines()?;
        let freqs = lines.eigenfrequencies(count, 1e-15)?;
        let modes = lines.modes(&freqs)?;
        let gamma = self.gamma_gyrator();
        let a_d = self.a_d();
        let mut id_res: f64 = 0.0;
        let mut dual_res: f64 = 0.0;
        let rows: Vec<CirculatorMode> = modes
            .iter()
            .map(|m: &FiniteMode| {
                let scale = m.u0.amax().max(m.ud.amax());
                id_res = id_res.max((m.vd[0] + a_d * m.omega * m.ud[0]).abs() / (a_d * m.omega * scale));
                dual_res = dual_res.max((m.dvd[0] - m.omega * m.ud[0]).abs() / (m.omega * scale));
                let dominant = m.u0.iamax();
                CirculatorMode {
                    omega: m.omega,
                    dominant_line: dominant,
                    u0: m.u0.iter().copied().collect(),
                    u1_d: m.ud[0],
                    v1_d: m.vd[0],
                    jj_coupling: self.c[0].sqrt() / self.c_j * m.vd[0] / m.omega,
                    gyrator_coupling: gamma.as_ref().map(|g| {
                        let v = g.tr_mul(&m.u0);
                        [v[0], v[1]]
                    }),
                }
            })
            .collect();
        let top = freqs.last().copied().unwrap_or(0.0);
        Ok(CirculatorReport {
            a_d,
            omega_g: self.r.map(|r| r / self.l_r),
            gamma_gyrator: gamma,
            modes: rows,
            far_end_identity_residual: id_res,
            dual_derivative_residual: dual_res,
            weyl_ratio: if top > 0.0 { count as f64 / lines.weyl_count(top) } else { f64::NAN },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(r: Option<f64>) -> CirculatorParams {
        CirculatorParams {
            c: vec![1.0, 1.2, 0.8],
            l: vec![1.0, 0.9, 1.1],
            lengths: vec![1.0, 1.3, 0.9],
            c_boundary: vec![vec![0.2, 0.0, 0.0], vec![0.0, 0.25, 0.0], vec![0.0, 0.0, 0.3]],
            l_inv_boundary: vec![vec![3.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 2.5]],
            transformer: vec![vec![1.0, 0.0], vec![-0.5, 0.8], vec![-0.5, -0.8]],
            l_r: 0.7,
            r,
            c_c: 0.1,
            c_j: 0.5,
            other_ends: None,
        }
    }

    #[test]
    fn open_gyrator_decouples_lines() {
        let rep = params(None).analyze(12).unwrap();
        for m in &rep.modes {
            let off: f64 = m.u0.iter().enumerate().filter(|(i, _)| *i != m.dominant_line).map(|(_, v)| v.abs()).sum();
            assert!(off < 1e-9 * m.u0[m.dominant_line].abs(), "{m:?}");
        }
        assert!(rep.far_end_identity_residual < 1e-10);
    }

    #[test]
    fn finite_gyrator_couples_lines() {
        let rep = params(Some(5.0)).analyze(8).unwrap();
        assert_eq!(rep.omega_g, Some(5.0 / 0.7));
        assert!(rep.modes.iter().any(|m| m.u0.iter().filter(|v| v.abs() > 1e-6).count() > 1));
        assert!(rep.dual_derivative_residual < 1e-10);
    }
}
