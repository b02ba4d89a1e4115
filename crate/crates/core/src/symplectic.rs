//! Two-forms, zero modes, constraint elimination and Darboux coordinates.
//!
//! Conventions.  A two-form `ω = ½ Σ Ω_ij dz^i ∧ dz^j` is stored as its
//! skew matrix `Ω`, and the equations of motion read `Ω ż = ∇H`.  In
//! canonical coordinates ordered `(q_1 … q_n, p_1 … p_n)` the target matrix
//! is `J = [[0, −I], [I, 0]]`, i.e. `ω = Σ dp_i ∧ dq_i`.
//!
//! Each branch contributes half of a canonical pair: elements whose energy
//! depends on the charge (capacitor, voltage source, phase slip) give
//! `½ dq∧dφ`, elements whose energy depends on the flux (inductor, current
//! source, Josephson junction) give `½ dφ∧dq`.  Ideal multiport ports give
//! nothing; their constraints do the work.
//!
//! Reduction (single pass, exact): the kernel `W` of the pulled-back form is
//! split into gauge directions (those annihilating the Hamiltonian
//! coefficient-wise) and constraint directions.  Constraint directions must
//! enter the energy only quadratically with an invertible block; they are
//! then solved for and substituted.  Gauge coordinates are fixed to zero.

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{
    build_constraints, classify_topology, spanning_tree, ConstraintSystem, TopologyClassification, TreePreference,
};
use crate::hamiltonian::{assemble_energy, CoordTopo, HamiltonianModel};
use crate::netlist::{CircuitGraph, ElementKind, Topo};
use crate::rational::{format_rational, is_zero_vec, qf, qi, Echelon, QMat, Q};

/// A skew form over labeled coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoForm {
    pub matrix: QMat,
    pub labels: Vec<String>,
}

impl TwoForm {
    /// Dimension of the coordinate space.
    pub fn dim(&self) -> usize {
        self.labels.len()
    }
}

/// Canonical matrix `J = [[0, −I], [I, 0]]` of size `2n`.
pub fn canonical_j(n: usize) -> QMat {
    let mut j = QMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = qi(-1);
        j[(n + i, i)] = qi(1);
    }
    j
}

/// Two-form over branch coordinates `ζ = [φ | q]`.
pub fn build_two_form(g: &CircuitGraph) -> TwoForm {
    let nb = g.n_branches();
    let mut m = QMat::zeros(2 * nb, 2 * nb);
    let half = qf(1, 2);
    for (b, br) in g.branches.iter().enumerate() {
        let (phi, q) = (b, nb + b);
        let sign = match br.kind {
            // ½ dq∧dφ
            ElementKind::Capacitor { .. } | ElementKind::VoltageSource | ElementKind::PhaseSlip { .. } => 1,
            // ½ dφ∧dq
            ElementKind::Inductor { .. } | ElementKind::CurrentSource | ElementKind::JosephsonJunction { .. } => -1,
            ElementKind::Port { .. } | ElementKind::UnattachedPort => 0,
        };
        if sign != 0 {
            m[(q, phi)] = &half * qi(sign);
            m[(phi, q)] = &half * qi(-sign);
        }
    }
    let mut labels: Vec<String> = g.branches.iter().map(|b| format!("phi:{}", b.id)).collect();
    labels.extend(g.branches.iter().map(|b| format!("q:{}", b.id)));
    TwoForm { matrix: m, labels }
}

/// Pull-back `Kᵀ Ω K` of a branch form onto the kernel coordinates.
pub fn pullback(tf: &TwoForm, cs: &ConstraintSystem) -> Result<TwoForm> {
    if tf.dim() != cs.k.nrows() {
        return Err(Error::Numerical(format!(
            "dimension mismatch: form has {} coordinates, kernel map has {} rows",
            tf.dim(),
            cs.k.nrows()
        )));
    }
    let m = cs.k.transpose().mul(&tf.matrix).mul(&cs.k);
    Ok(TwoForm { matrix: m, labels: cs.z_labels.clone() })
}

/// Classification of a zero mode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroModeClass {
    /// Not classified yet.
    Unclassified,
    /// Annihilates the Hamiltonian identically; coordinate fixed to zero.
    Gauge,
    /// Generates a linear constraint that is solved and substituted.
    LinearConstraint,
    /// Generates a constraint outside the supported class.
    Nonhomogeneous,
}

/// Basis of the kernel of a two-form with per-vector classification.
#[derive(Clone, Debug)]
pub struct ZeroModeSet {
    pub vectors: Vec<Vec<Q>>,
    pub classes: Vec<ZeroModeClass>,
    /// Human-readable form of each vector, e.g. `d/dQ:Cr - d/dQ:Vg`.
    pub names: Vec<String>,
}

/// Renders a vector over labeled coordinates as a derivation.
pub fn vector_name(v: &[Q], labels: &[String]) -> String {
    let mut out = String::new();
    for (x, l) in v.iter().zip(labels) {
        if x.is_zero() {
            continue;
        }
        let neg = *x < Q::zero();
        let mag = if neg { -x.clone() } else { x.clone() };
        let coef = if mag.is_one() { String::new() } else { format!("{}*", format_rational(&mag)) };
        if out.is_empty() {
            out.push_str(if neg { "-" } else { "" });
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        out.push_str(&format!("{coef}d/d[{l}]"));
    }
    if out.is_empty() {
        "0".into()
    } else {
        out
    }
}

/// Rational kernel basis of a two-form, in RREF free-column order.
pub fn zero_modes(tf: &TwoForm) -> ZeroModeSet {
    let k = tf.matrix.kernel();
    let vectors = k.cols_vec();
    let names = vectors.iter().map(|v| vector_name(v, &tf.labels)).collect();
    ZeroModeSet { classes: vec![ZeroModeClass::Unclassified; vectors.len()], vectors, names }
}

/// Outcome of zero-mode classification and constraint solving.
#[derive(Clone, Debug)]
pub struct ConstrainedSystem {
    /// Zero modes re-based as gauge vectors first, then constraint vectors.
    pub zero_modes: ZeroModeSet,
    /// Labels of the surviving coordinates `ξ` (unit directions of `z`).
    pub xi_labels: Vec<String>,
    /// Indices into `z` of the surviving unit directions.
    pub xi_index: Vec<usize>,
    /// Map `z = A ξ + B s(t)` after solving the constraints (gauge set to 0).
    pub a: QMat,
    pub b: QMat,
    /// Nondegenerate two-form on `ξ`.
    pub omega: QMat,
    /// Hamiltonian on `ξ`.
    pub hamiltonian: HamiltonianModel,
}

/// Classifies zero modes against the Hamiltonian and eliminates them.
///
/// Fails with [`Error::Nonhomogeneous`] when a constraint direction enters a
/// cosine (nonlinear constraint) or its quadratic block is singular.
pub fn classify_and_solve(zm: &ZeroModeSet, omega: &TwoForm, h: &HamiltonianModel) -> Result<ConstrainedSystem> {
    let n = omega.dim();
    let w = QMat::from_cols(n, &zm.vectors);
    let nw = zm.vectors.len();

    // Gauge subspace: combinations W c with Q W c = 0, k·W c = 0, d·W c = 0.
    let gauge_vectors: Vec<Vec<Q>> = if nw == 0 {
        Vec::new()
    } else {
        let mut test = h.quad.mul(&w);
        for c in &h.cosines {
            test = test.vstack(&QMat::from_rows(&[w.vec_mul(&c.wavevector)]));
        }
        for d in &h.drives {
            test = test.vstack(&QMat::from_rows(&[w.vec_mul(&d.row)]));
        }
        test.kernel().cols_vec().iter().map(|c| w.mul_vec(c)).collect()
    };
    let mut ech = Echelon::new();
    for g in &gauge_vectors {
        ech.insert(g);
    }
    let constraint_vectors: Vec<Vec<Q>> = zm.vectors.iter().filter(|v| ech.insert(v)).cloned().collect();

    let mut classes = vec![ZeroModeClass::Gauge; gauge_vectors.len()];
    classes.extend(vec![ZeroModeClass::LinearConstraint; constraint_vectors.len()]);
    let mut vectors = gauge_vectors.clone();
    vectors.extend(constraint_vectors.iter().cloned());
    let names: Vec<String> = vectors.iter().map(|v| vector_name(v, &omega.labels)).collect();

    let ng = gauge_vectors.len();
    let nonhom = |idx: usize, why: String, classes: &mut Vec<ZeroModeClass>| {
        classes[ng + idx] = ZeroModeClass::Nonhomogeneous;
        Error::Nonhomogeneous(why)
    };
    let mut classes_mut = classes.clone();
    for (i, v) in constraint_vectors.iter().enumerate() {
        for c in &h.cosines {
            if !crate::rational::dot(&c.wavevector, v).is_zero() {
                return Err(nonhom(
                    i,
                    format!(
                        "zero mode {} enters the cosine of '{}': nonlinear constraint",
                        vector_name(v, &omega.labels),
                        c.source
                    ),
                    &mut classes_mut,
                ));
            }
        }
    }
    let wc = QMat::from_cols(n, &constraint_vectors);
    let nc = constraint_vectors.len();
    let nd = h.drives.len();
    let minv = if nc == 0 {
        QMat::zeros(0, 0)
    } else {
        let m = wc.transpose().mul(&h.quad).mul(&wc);
        m.inverse().ok_or_else(|| {
            Error::Nonhomogeneous(format!(
                "singular constraint block for zero modes [{}]",
                constraint_vectors.iter().map(|v| vector_name(v, &omega.labels)).collect::<Vec<_>>().join("; ")
            ))
        })?
    };

    // Surviving directions: unit vectors independent of span(W).
    let mut ech = Echelon::new();
    for v in &zm.vectors {
        ech.insert(v);
    }
    let mut xi_index = Vec::new();
    for i in 0..n {
        let mut e = vec![Q::zero(); n];
        e[i] = Q::one();
        if ech.insert(&e) {
            xi_index.push(i);
        }
    }
    let xi_labels: Vec<String> = xi_index.iter().map(|&i| omega.labels[i].clone()).collect();
    let mut xi = QMat::zeros(n, xi_index.len());
    for (c, &i) in xi_index.iter().enumerate() {
        xi[(i, c)] = Q::one();
    }

    let (a, b) = if nc == 0 {
        (xi.clone(), QMat::zeros(n, nd))
    } else {
        let wct_q = wc.transpose().mul(&h.quad);
        let p = minv.mul(&wct_q).mul(&xi).neg();
        let mut dt = QMat::zeros(n, nd);
        for (j, d) in h.drives.iter().enumerate() {
            for i in 0..n {
                dt[(i, j)] = d.row[i].clone();
            }
        }
        let r = minv.mul(&wc.transpose()).mul(&dt).neg();
        (xi.add(&wc.mul(&p)), wc.mul(&r))
    };
    let omega_xi = xi.transpose().mul(&omega.matrix).mul(&xi);
    let topo = xi_index.iter().map(|&i| h.topology[i]).collect();
    let hamiltonian = h.compose(&a, xi_labels.clone(), topo);
    Ok(ConstrainedSystem {
        zero_modes: ZeroModeSet { vectors, classes: classes_mut, names },
        xi_labels,
        xi_index,
        a,
        b,
        omega: omega_xi,
        hamiltonian,
    })
}

/// How a Darboux basis was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DarbouxMethod {
    /// Positions kept, momenta `p = Ω_yxᵀ y − ½ Ω_xx x` (charge block of Ω vanishes).
    ChargeShift,
    /// Symplectic Gram–Schmidt on unit vectors, lowest index first.
    GramSchmidt,
}

/// Canonical transform `ξ = S η` with `Sᵀ Ω S = J`.
#[derive(Clone, Debug)]
pub struct SymplecticTransform {
    pub s: QMat,
    pub n_pairs: usize,
    pub method: DarbouxMethod,
    pub labels: Vec<String>,
}

/// Brings a nondegenerate form to canonical form.
///
/// `flux_type[i]` marks coordinates that are flux-like; they are used as
/// positions whenever possible.
pub fn darboux(omega: &QMat, labels: &[String], flux_type: &[bool]) -> Result<SymplecticTransform> {
    let n2 = omega.nrows();
    if !n2.is_multiple_of(2) || (n2 > 0 && omega.rank() != n2) {
        return Err(Error::Numerical("darboux: degenerate two-form".into()));
    }
    let n = n2 / 2;
    let xs: Vec<usize> = (0..n2).filter(|&i| flux_type[i]).collect();
    let ys: Vec<usize> = (0..n2).filter(|&i| !flux_type[i]).collect();
    if xs.len() == n {
        let oyy = omega.select_rows(&ys).select_cols(&ys);
        let oyx = omega.select_rows(&ys).select_cols(&xs);
        if oyy.is_zero() {
            if let Some(oyx_inv_t) = oyx.transpose().inverse() {
                let oxx = omega.select_rows(&xs).select_cols(&xs);
                // ξ_x = x,  ξ_y = Ω_yx⁻ᵀ (p + ½ Ω_xx x)
                let mut s = QMat::zeros(n2, n2);
                let yx = oyx_inv_t.mul(&oxx.scale(&qf(1, 2)));
                for (c, &xi) in xs.iter().enumerate() {
                    s[(xi, c)] = Q::one();
                    for (r, &yi) in ys.iter().enumerate() {
                        s[(yi, c)] = yx[(r, c)].clone();
                    }
                }
                for c in 0..n {
                    for (r, &yi) in ys.iter().enumerate() {
                        s[(yi, n + c)] = oyx_inv_t[(r, c)].clone();
                    }
                }
                let mut out_labels: Vec<String> = xs.iter().map(|&i| labels[i].clone()).collect();
                out_labels.extend(xs.iter().map(|&i| format!("P[{}]", labels[i])));
                let t = SymplecticTransform { s, n_pairs: n, method: DarbouxMethod::ChargeShift, labels: out_labels };
                debug_assert_eq!(t.s.transpose().mul(omega).mul(&t.s), canonical_j(n));
                return Ok(t);
            }
        }
    }
    gram_schmidt(omega, labels, flux_type)
}

fn form(omega: &QMat, a: &[Q], b: &[Q]) -> Q {
    crate::rational::dot(a, &omega.mul_vec(b))
}

fn gram_schmidt(omega: &QMat, labels: &[String], flux_type: &[bool]) -> Result<SymplecticTransform> {
    let n2 = omega.nrows();
    let n = n2 / 2;
    let mut order: Vec<usize> = (0..n2).filter(|&i| flux_type[i]).collect();
    order.extend((0..n2).filter(|&i| !flux_type[i]));
    let mut pool: Vec<(Vec<Q>, usize)> = order
        .iter()
        .map(|&i| {
            let mut v = vec![Q::zero(); n2];
            v[i] = Q::one();
            (v, i)
        })
        .collect();
    let mut es = Vec::new();
    let mut fs = Vec::new();
    let mut pos_labels = Vec::new();
    while !pool.is_empty() {
        let (e, ei) = pool.remove(0);
        if is_zero_vec(&e) {
            continue;
        }
        let Some(k) = pool.iter().position(|(v, _)| !form(omega, v, &e).is_zero()) else {
            return Err(Error::Numerical("darboux: degenerate two-form".into()));
        };
        let (v, _) = pool.remove(k);
        let f: Vec<Q> = {
            let s = form(omega, &v, &e).recip();
            v.iter().map(|x| x * &s).collect()
        };
        for (u, _) in pool.iter_mut() {
            let alpha = form(omega, u, &f);
            let beta = -form(omega, u, &e);
            for i in 0..n2 {
                let du = &alpha * &e[i] + &beta * &f[i];
                u[i] += du;
            }
        }
        pool.retain(|(u, _)| !is_zero_vec(u));
        pos_labels.push(labels[ei].clone());
        es.push(e);
        fs.push(f);
    }
    if es.len() != n {
        return Err(Error::Numerical("darboux: degenerate two-form".into()));
    }
    let mut cols = es;
    cols.extend(fs);
    let s = QMat::from_cols(n2, &cols);
    let mut out_labels = pos_labels.clone();
    out_labels.extend(pos_labels.iter().map(|l| format!("P[{l}]")));
    Ok(SymplecticTransform { s, n_pairs: n, method: DarbouxMethod::GramSchmidt, labels: out_labels })
}

/// Canonical reduced system with its back-substitution map.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    /// Canonical coordinates `η = (q_1 … q_n, p_1 … p_n)`.
    pub labels: Vec<String>,
    pub n_pairs: usize,
    /// Always `J`.
    pub omega: QMat,
    pub hamiltonian: HamiltonianModel,
    /// Branch variables `ζ = zeta_map · η + zeta_drive · s(t)`.
    pub zeta_map: QMat,
    pub zeta_drive: QMat,
    /// Kernel coordinates `z = z_map · η + z_drive · s(t)`.
    pub z_map: QMat,
    pub z_drive: QMat,
    pub topology: Vec<CoordTopo>,
}

/// Full record of a reduction run.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub constraints: ConstraintSystem,
    pub classification: TopologyClassification,
    pub omega_branch: TwoForm,
    pub omega_z: TwoForm,
    pub h_z: HamiltonianModel,
    pub constrained: ConstrainedSystem,
    pub darboux: SymplecticTransform,
    pub system: ReducedSystem,
    /// Compact (flux, charge) coordinate counts before and after Darboux.
    pub compact_before: (usize, usize),
    pub compact_after: (usize, usize),
}

impl Reduction {
    /// Labels of gauge-fixed zero modes.
    pub fn gauge(&self) -> Vec<String> {
        self.named(ZeroModeClass::Gauge)
    }

    /// Labels of zero modes solved as linear constraints.
    pub fn solved(&self) -> Vec<String> {
        self.named(ZeroModeClass::LinearConstraint)
    }

    fn named(&self, c: ZeroModeClass) -> Vec<String> {
        let zm = &self.constrained.zero_modes;
        zm.names.iter().zip(&zm.classes).filter(|(_, k)| **k == c).map(|(n, _)| n.clone()).collect()
    }
}

/// Topological type of a branch-space tangent vector.
pub fn tangent_topology(g: &CircuitGraph, tangent: &[Q]) -> CoordTopo {
    let nb = g.n_branches();
    let (phi, q) = tangent.split_at(nb);
    let all_on = |part: &[Q], compact: &dyn Fn(usize) -> bool| {
        part.iter().enumerate().all(|(b, x)| x.is_zero() || (compact(b) && x.is_integer())) && !is_zero_vec(part)
    };
    if is_zero_vec(q) && all_on(phi, &|b| g.branches[b].flux_topology == Topo::Compact) {
        CoordTopo::CompactFlux
    } else if is_zero_vec(phi) && all_on(q, &|b| g.branches[b].charge_topology == Topo::Compact) {
        CoordTopo::CompactCharge
    } else {
        CoordTopo::Extended
    }
}

fn count_compact(t: &[CoordTopo]) -> (usize, usize) {
    (
        t.iter().filter(|x| **x == CoordTopo::CompactFlux).count(),
        t.iter().filter(|x| **x == CoordTopo::CompactCharge).count(),
    )
}

/// True when a kernel label names a flux-type coordinate.
pub fn is_flux_label(label: &str) -> bool {
    label.starts_with("Phi:") || label.starts_with("phi:") || label.starts_with("theta:phi:")
}

/// Runs the complete reduction: constraints, pull-back, zero modes,
/// constraint elimination and Darboux normalization.
pub fn reduce(g: &CircuitGraph, preference: &TreePreference) -> Result<Reduction> {
    if let Some(t) = g.tlines.iter().find(|t| t.cells.is_none()) {
        return Err(Error::schema(
            format!("tline '{}'", t.id),
            "only lines discretized with 'cells' can be reduced; continuum lines go to the spectral back end",
        ));
    }
    let tree = spanning_tree(g, preference)?;
    let cs = build_constraints(g, &tree)?;
    let classification = classify_topology(&cs, g)?;
    let omega_branch = build_two_form(g);
    let omega_z = pullback(&omega_branch, &cs)?;
    let h_z = assemble_energy(g, &cs);
    let zm = zero_modes(&omega_z);
    let constrained = classify_and_solve(&zm, &omega_z, &h_z)?;

    let xi_tangent = cs.k.mul(&constrained.a);
    let topo_before: Vec<CoordTopo> =
        (0..xi_tangent.ncols()).map(|j| tangent_topology(g, &xi_tangent.col(j))).collect();
    let flux_type: Vec<bool> = constrained.xi_labels.iter().map(|l| is_flux_label(l)).collect();
    let dx = darboux(&constrained.omega, &constrained.xi_labels, &flux_type)?;
    let z_map = constrained.a.mul(&dx.s);
    let zeta_map = cs.k.mul(&z_map);
    let topo_after: Vec<CoordTopo> = (0..zeta_map.ncols()).map(|j| tangent_topology(g, &zeta_map.col(j))).collect();
    let hamiltonian = constrained.hamiltonian.compose(&dx.s, dx.labels.clone(), topo_after.clone());
    let system = ReducedSystem {
        labels: dx.labels.clone(),
        n_pairs: dx.n_pairs,
        omega: canonical_j(dx.n_pairs),
        hamiltonian,
        zeta_drive: cs.k.mul(&constrained.b),
        zeta_map,
        z_map,
        z_drive: constrained.b.clone(),
        topology: topo_after.clone(),
    };
    Ok(Reduction {
        constraints: cs,
        classification,
        omega_branch,
        omega_z,
        h_z,
        compact_before: count_compact(&topo_before),
        compact_after: count_compact(&topo_after),
        constrained,
        darboux: dx,
        system,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_netlist;

    #[test]
    fn isolated_c_and_l_two_form() {
        let g = parse_netlist(
            r#"{"nodes":["a","b"],"ground":"g","branches":[
            {"id":"C","from":"a","to":"g","kind":"capacitor","params":{"C":"1"}},
            {"id":"L","from":"b","to":"g","kind":"inductor","params":{"L":"1"}}]}"#,
        )
        .unwrap();
        let tf = build_two_form(&g);
        let m = &tf.matrix;
        // ½ dq_c∧dφ_c + ½ dφ_l∧dq_l
        assert_eq!(m[(2, 0)], qf(1, 2));
        assert_eq!(m[(0, 2)], qf(-1, 2));
        assert_eq!(m[(1, 3)], qf(1, 2));
        assert_eq!(m[(3, 1)], qf(-1, 2));
        assert!(m.is_skew());
    }

    #[test]
    fn sources_carry_their_class_orientation() {
        let g = parse_netlist(
            r#"{"nodes":["a","b"],"ground":"g","branches":[
            {"id":"V","from":"a","to":"g","kind":"voltage_source"},
            {"id":"I","from":"b","to":"g","kind":"current_source"}]}"#,
        )
        .unwrap();
        let m = build_two_form(&g).matrix;
        assert_eq!(m[(2, 0)], qf(1, 2));
        assert_eq!(m[(1, 3)], qf(1, 2));
    }

    #[test]
    fn canonical_form_has_no_zero_modes() {
        let tf = TwoForm { matrix: canonical_j(2), labels: (0..4).map(|i| i.to_string()).collect() };
        assert!(zero_modes(&tf).vectors.is_empty());
    }

    #[test]
    fn identity_pairing_for_canonical_input() {
        let labels: Vec<String> = vec!["Phi:a".into(), "Phi:b".into(), "Q:a".into(), "Q:b".into()];
        let t = darboux(&canonical_j(2), &labels, &[true, true, false, false]).unwrap();
        assert_eq!(t.s, QMat::identity(4));
    }

    #[test]
    fn gram_schmidt_handles_mixed_forms() {
        // A form whose charge block does not vanish.
        let om = QMat::from_i64(&[&[0, 1, 2, -1], &[-1, 0, 1, 3], &[-2, -1, 0, 1], &[1, -3, -1, 0]]);
        let labels: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let t = darboux(&om, &labels, &[true, false, true, false]).unwrap();
        assert_eq!(t.s.transpose().mul(&om).mul(&t.s), canonical_j(2));
    }
}
