//! Total energy models `H_T = H + H_d(t)` over a coordinate vector.
//!
//! A model is a quadratic form plus a list of cosine potentials plus drive
//! couplings linear in the coordinates:
//!
//! `H(x, t) = ½ xᵀ Q x + Σ_c a_c cos(2π k_c·x / m_c) + Σ_d (d·x) s_d(t)`
//!
//! Quadratic coefficients, cosine wavevectors and drive rows are exact
//! rationals so that coordinate changes and gauge checks stay exact.  The
//! modulus `m_c` is symbolic (flux quantum or charge quantum); numbers only
//! enter when the model is turned into a [`NumericModel`].

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::ConstraintSystem;
use crate::netlist::{CircuitGraph, ElementKind, Units, Waveform};
use crate::rational::{format_rational, q_to_f64, qi, QMat, Q};

/// Period of a cosine argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Modulus {
    /// Flux quantum `Φ_Q = h/2e`.
    #[serde(rename = "Phi_Q")]
    Flux,
    /// Charge quantum `2e`.
    #[serde(rename = "2e")]
    Charge,
}

impl Modulus {
    /// Numeric value in the given unit system.
    pub fn value(self, units: &Units) -> f64 {
        match self {
            Modulus::Flux => units.flux_quantum,
            Modulus::Charge => units.charge_quantum,
        }
    }
}

/// Cosine term `amplitude · cos(2π k·x / modulus)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cosine {
    /// Signed amplitude (a Josephson term has amplitude `−E_J`).
    pub amplitude: Q,
    pub wavevector: Vec<Q>,
    pub modulus: Modulus,
    /// Element the term came from.
    pub source: String,
}

/// Drive term `(row · x) · s(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveTerm {
    pub row: Vec<Q>,
    pub waveform: Waveform,
    /// Source branch the drive belongs to.
    pub source: String,
}

/// Topological character of a model coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordTopo {
    /// Periodic with modulus `Φ_Q`.
    CompactFlux,
    /// Periodic with modulus `2e`.
    CompactCharge,
    Extended,
}

/// Exact Hamiltonian model.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianModel {
    pub labels: Vec<String>,
    pub quad: QMat,
    pub cosines: Vec<Cosine>,
    pub drives: Vec<DriveTerm>,
    pub topology: Vec<CoordTopo>,
    pub units: Units,
}

impl HamiltonianModel {
    /// Number of coordinates.
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// Drive values `s_d(t)` in model order.
    pub fn drive_values(&self, t: f64) -> Vec<f64> {
        self.drives.iter().map(|d| d.waveform.value(t)).collect()
    }

    /// Applies the linear change of coordinates `x = M y`.
    ///
    /// The quadratic form transforms by congruence, wavevectors and drive
    /// rows by right multiplication.  `labels` and `topology` describe the
    /// new coordinates.
    pub fn change_coordinates(&self, m: &QMat, labels: Vec<String>, topology: Vec<CoordTopo>) -> Result<Self> {
        if m.nrows() != self.dim() || m.ncols() != labels.len() || labels.len() != topology.len() {
            return Err(Error::Numerical("coordinate map has the wrong shape".into()));
        }
        if m.nrows() == m.ncols() && m.inverse().is_none() {
            return Err(Error::Numerical("singular coordinate map".into()));
        }
        Ok(self.compose(m, labels, topology))
    }

    /// Composes the model with `x = M y` without any invertibility check
    /// (used for restrictions to subspaces).
    pub fn compose(&self, m: &QMat, labels: Vec<String>, topology: Vec<CoordTopo>) -> Self {
        let mt = m.transpose();
        HamiltonianModel {
            labels,
            quad: mt.mul(&self.quad).mul(m),
            cosines: self
                .cosines
                .iter()
                .map(|c| Cosine { wavevector: mt.mul_vec(&c.wavevector), ..c.clone() })
                .collect(),
            drives: self.drives.iter().map(|d| DriveTerm { row: mt.mul_vec(&d.row), ..d.clone() }).collect(),
            topology,
            units: self.units,
        }
    }

    /// Floating-point evaluator.
    pub fn numeric(&self) -> NumericModel {
        NumericModel::new(self)
    }

    /// Coefficient-level periodicity check: for every compact coordinate the
    /// quadratic form and drives do not depend on it and every cosine winds an
    /// integer number of times over the modulus.  Returns offending labels.
    pub fn periodicity_violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        for (i, t) in self.topology.iter().enumerate() {
            let want = match t {
                CoordTopo::CompactFlux => Modulus::Flux,
                CoordTopo::CompactCharge => Modulus::Charge,
                CoordTopo::Extended => continue,
            };
            let quad_free = (0..self.dim()).all(|j| self.quad[(i, j)].is_zero());
            let drive_free = self.drives.iter().all(|d| d.row[i].is_zero());
            let windings_ok = self.cosines.iter().all(|c| {
                let k = &c.wavevector[i];
                if c.modulus == want {
                    k.is_integer()
                } else {
                    k.is_zero()
                }
            });
            if !(quad_free && drive_free && windings_ok) {
                bad.push(self.labels[i].clone());
            }
        }
        bad
    }

    /// JSON descriptor: quadratic form, cosines, drives, labels, compactness.
    pub fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({
            "labels": self.labels,
            "topology": self.topology,
            "quad": self.quad.to_strings(),
            "cosines": self.cosines.iter().map(|c| serde_json::json!({
                "amplitude": format_rational(&c.amplitude),
                "wavevector": c.wavevector.iter().map(format_rational).collect::<Vec<_>>(),
                "modulus": c.modulus,
                "source": c.source,
            })).collect::<Vec<_>>(),
            "drives": self.drives.iter().map(|d| serde_json::json!({
                "row": d.row.iter().map(format_rational).collect::<Vec<_>>(),
                "source": d.source,
            })).collect::<Vec<_>>(),
            "convention": "H = 1/2 x^T quad x + sum amplitude*cos(2*pi*k.x/modulus) + sum (row.x)*s(t)",
        })
    }
}

/// Branch-space energy of a circuit: coordinates `ζ = [φ | q]`.
pub fn branch_energy(g: &CircuitGraph) -> HamiltonianModel {
    let nb = g.n_branches();
    let mut quad = QMat::zeros(2 * nb, 2 * nb);
    let mut cosines = Vec::new();
    let mut drives = Vec::new();
    let unit = |c: usize| {
        let mut v = vec![Q::zero(); 2 * nb];
        v[c] = qi(1);
        v
    };
    for (b, br) in g.branches.iter().enumerate() {
        match &br.kind {
            ElementKind::Capacitor { c } => quad[(nb + b, nb + b)] = c.recip(),
            ElementKind::Inductor { l } => quad[(b, b)] = l.recip(),
            ElementKind::JosephsonJunction { ej } => cosines.push(Cosine {
                amplitude: -ej.clone(),
                wavevector: unit(b),
                modulus: Modulus::Flux,
                source: br.id.clone(),
            }),
            ElementKind::PhaseSlip { es } => cosines.push(Cosine {
                amplitude: -es.clone(),
                wavevector: unit(nb + b),
                modulus: Modulus::Charge,
                source: br.id.clone(),
            }),
            ElementKind::VoltageSource | ElementKind::CurrentSource => {
                let col = if br.kind == ElementKind::VoltageSource { nb + b } else { b };
                let waveform = g.drive_for(b).map(|d| d.waveform.clone()).unwrap_or(Waveform::Dc(0.0));
                drives.push(DriveTerm { row: unit(col), waveform, source: br.id.clone() });
            }
            ElementKind::Port { .. } | ElementKind::UnattachedPort => {}
        }
    }
    let mut labels: Vec<String> = g.branches.iter().map(|b| format!("phi:{}", b.id)).collect();
    labels.extend(g.branches.iter().map(|b| format!("q:{}", b.id)));
    let mut topology = Vec::new();
    for b in &g.branches {
        topology.push(if b.flux_topology == crate::netlist::Topo::Compact {
            CoordTopo::CompactFlux
        } else {
            CoordTopo::Extended
        });
    }
    for b in &g.branches {
        topology.push(if b.charge_topology == crate::netlist::Topo::Compact {
            CoordTopo::CompactCharge
        } else {
            CoordTopo::Extended
        });
    }
    HamiltonianModel { labels, quad, cosines, drives, topology, units: g.units }
}

/// Total energy over the kernel coordinates `z` (branch energy composed with `K`).
pub fn assemble_energy(g: &CircuitGraph, cs: &ConstraintSystem) -> HamiltonianModel {
    let branch = branch_energy(g);
    let topo = vec![CoordTopo::Extended; cs.n_z()];
    let mut h = branch.compose(&cs.k, cs.z_labels.clone(), topo);
    for j in 0..cs.n_compact_flux {
        h.topology[j] = CoordTopo::CompactFlux;
    }
    for j in cs.n_compact_flux..cs.n_compact_flux + cs.n_compact_charge {
        h.topology[j] = CoordTopo::CompactCharge;
    }
    h
}

/// Floating-point view of a [`HamiltonianModel`].
#[derive(Clone, Debug)]
pub struct NumericModel {
    pub quad: DMatrix<f64>,
    /// Cosine amplitudes.
    pub amps: Vec<f64>,
    /// Effective wavevectors `2π k / m` as rows.
    pub waves: Vec<DVector<f64>>,
    /// Drive rows.
    pub drive_rows: Vec<DVector<f64>>,
    pub waveforms: Vec<Waveform>,
}

impl NumericModel {
    pub fn new(h: &HamiltonianModel) -> Self {
        let n = h.dim();
        let vec_of = |v: &[Q], scale: f64| DVector::from_iterator(n, v.iter().map(|x| q_to_f64(x) * scale));
        NumericModel {
            quad: h.quad.to_f64(),
            amps: h.cosines.iter().map(|c| q_to_f64(&c.amplitude)).collect(),
            waves: h
                .cosines
                .iter()
                .map(|c| vec_of(&c.wavevector, 2.0 * std::f64::consts::PI / c.modulus.value(&h.units)))
                .collect(),
            drive_rows: h.drives.iter().map(|d| vec_of(&d.row, 1.0)).collect(),
            waveforms: h.drives.iter().map(|d| d.waveform.clone()).collect(),
        }
    }

    /// Energy `H(x, t)`.
    pub fn energy(&self, x: &DVector<f64>, t: f64) -> f64 {
        let mut e = 0.5 * x.dot(&(&self.quad * x));
        for (a, k) in self.amps.iter().zip(&self.waves) {
            e += a * k.dot(x).cos();
        }
        for (d, w) in self.drive_rows.iter().zip(&self.waveforms) {
            e += d.dot(x) * w.value(t);
        }
        e
    }

    /// Gradient `∇H(x, t) = Q x − Σ a k sin(k·x) + Σ d s(t)`.
    pub fn gradient(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut g = &self.quad * x;
        for (a, k) in self.amps.iter().zip(&self.waves) {
            g -= k * (a * k.dot(x).sin());
        }
        for (d, w) in self.drive_rows.iter().zip(&self.waveforms) {
            g += d * w.value(t);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::qf;

    fn one_cos(amp: i64, k: i64) -> HamiltonianModel {
        HamiltonianModel {
            labels: vec!["x".into()],
            quad: QMat::zeros(1, 1),
            cosines: vec![Cosine {
                amplitude: qi(amp),
                wavevector: vec![qi(k)],
                modulus: Modulus::Flux,
                source: "J".into(),
            }],
            drives: vec![],
            topology: vec![CoordTopo::CompactFlux],
            units: Units { flux_quantum: 2.0 * std::f64::consts::PI, charge_quantum: 1.0 },
        }
    }

    #[test]
    fn quadratic_gradient_vanishes_at_origin() {
        let h = HamiltonianModel {
            labels: vec!["a".into(), "b".into()],
            quad: QMat::from_i64(&[&[2, 1], &[1, 3]]),
            cosines: vec![],
            drives: vec![],
            topology: vec![CoordTopo::Extended; 2],
            units: Units::default(),
        };
        let g = h.numeric().gradient(&DVector::zeros(2), 0.0);
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn cosine_gradient_at_quarter_period() {
        // With Φ_Q = 2π the effective wavevector is k itself; at k·x = π/2
        // the gradient is −E·k.
        let h = one_cos(3, 2);
        let x = DVector::from_element(1, std::f64::consts::FRAC_PI_4);
        let g = h.numeric().gradient(&x, 0.0);
        assert!((g[0] - (-3.0 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn identity_map_is_identity() {
        let h = one_cos(1, 1);
        let h2 = h.change_coordinates(&QMat::identity(1), h.labels.clone(), h.topology.clone()).unwrap();
        assert_eq!(h, h2);
    }

    #[test]
    fn singular_map_rejected() {
        let h = HamiltonianModel {
            labels: vec!["a".into(), "b".into()],
            quad: QMat::identity(2),
            cosines: vec![],
            drives: vec![],
            topology: vec![CoordTopo::Extended; 2],
            units: Units::default(),
        };
        let m = QMat::from_i64(&[&[1, 1], &[1, 1]]);
        assert!(h.change_coordinates(&m, h.labels.clone(), h.topology.clone()).is_err());
    }

    #[test]
    fn fractional_winding_breaks_periodicity() {
        let mut h = one_cos(1, 1);
        assert!(h.periodicity_violations().is_empty());
        h.cosines[0].wavevector[0] = qf(1, 2);
        assert_eq!(h.periodicity_violations(), vec!["x".to_string()]);
    }
}
