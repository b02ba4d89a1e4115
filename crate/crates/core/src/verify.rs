//! Cross-checks between the reduced canonical system and the unreduced
//! branch-level dynamics, plus the structural property checks run by the
//! `verify` command.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dae::BranchDae;
use crate::dynamics::{linear_frequencies, HamiltonianFlow};
use crate::error::{Error, Result};
use crate::hamiltonian::NumericModel;
use crate::netlist::CircuitGraph;
use crate::symplectic::{canonical_j, Reduction};

/// Outcome of an equations-of-motion comparison.
#[derive(Clone, Debug, Serialize)]
pub struct EomComparison {
    /// `max_t ‖o_dae − o_red‖_∞ / max_t ‖o_red‖_∞` over energy observables.
    pub max_rel_error: f64,
    /// Longest linear period, used as the characteristic time.
    pub period: f64,
    pub duration: f64,
    pub steps: usize,
    pub observables: Vec<String>,
}

/// Float copy of the back-substitution map `ζ = M η + D s(t)`.
pub struct BranchMap {
    map: DMatrix<f64>,
    drive: DMatrix<f64>,
    model: NumericModel,
}

impl BranchMap {
    pub fn new(red: &Reduction) -> Self {
        BranchMap {
            map: red.system.zeta_map.to_f64(),
            drive: red.system.zeta_drive.to_f64(),
            model: red.system.hamiltonian.numeric(),
        }
    }

    /// Branch variables at reduced state `eta` and time `t`.
    pub fn apply(&self, eta: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut z = &self.map * eta;
        for (j, w) in self.model.waveforms.iter().enumerate() {
            z += self.drive.column(j) * w.value(t);
        }
        z
    }
}

/// Maps reduced coordinates back to branch variables.
pub fn branch_state(red: &Reduction, eta: &DVector<f64>, t: f64) -> DVector<f64> {
    BranchMap::new(red).apply(eta, t)
}

/// Random initial condition with entries uniform in `[−amp, amp]`.
pub fn random_state(n: usize, amp: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-amp..amp)))
}

/// Integrates the reduced Hamiltonian system and the branch-level DAE from
/// the same initial state and compares energy-carrying observables.
///
/// Both systems are stepped with RK4 using `steps_per_period` steps per
/// shortest linear period, for `periods` longest linear periods.
pub fn compare_eom(
    g: &CircuitGraph,
    red: &Reduction,
    eta0: &DVector<f64>,
    periods: f64,
    steps_per_period: usize,
) -> Result<EomComparison> {
    let model = red.system.hamiltonian.numeric();
    let omega = red.system.omega.to_f64();
    let freqs = linear_frequencies(&model, &omega)?;
    let w_max = freqs.iter().cloned().fold(0.0, f64::max);
    let w_min = freqs.iter().cloned().filter(|w| *w > 1e-9 * w_max).fold(f64::INFINITY, f64::min);
    if !(w_max > 0.0) || !w_min.is_finite() {
        return Err(Error::Numerical("no oscillatory mode to set the time scale".into()));
    }
    let period = 2.0 * std::f64::consts::PI / w_min;
    let h = 2.0 * std::f64::consts::PI / w_max / steps_per_period as f64;
    let duration = periods * period;
    let steps = (duration / h).ceil() as usize;
    let h = duration / steps as f64;

    let flow = HamiltonianFlow::new(model, &omega)?;
    let reduced = flow.trajectory_rk4(eta0, h, steps);
    let dae = BranchDae::new(g, &red.constraints);
    let bm = BranchMap::new(red);
    let z0 = bm.apply(eta0, 0.0);
    let full = dae.trajectory(&z0, h, steps)?;

    let labels: Vec<String> = dae.observables(g, &z0).into_iter().map(|(l, _)| l).collect();
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (k, (eta, z)) in reduced.iter().zip(&full).enumerate() {
        let zr = bm.apply(eta, k as f64 * h);
        let a = dae.observables(g, z);
        let b = dae.observables(g, &zr);
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            err = err.max((x - y).abs());
            scale = scale.max(y.abs());
        }
    }
    Ok(EomComparison {
        max_rel_error: err / scale.max(f64::MIN_POSITIVE),
        period,
        duration,
        steps,
        observables: labels,
    })
}

/// Energy drift per period of the drive-free reduced system under the
/// Gauss–Legendre integrator: `max_t |H(t) − H(0)| / |H(0)| / periods`.
pub fn energy_drift(red: &Reduction, eta0: &DVector<f64>, periods: f64, steps_per_period: usize) -> Result<f64> {
    let mut model = red.system.hamiltonian.numeric();
    model.drive_rows.clear();
    model.waveforms.clear();
    let omega = red.system.omega.to_f64();
    let freqs = linear_frequencies(&model, &omega)?;
    let w_max = freqs.iter().cloned().fold(0.0, f64::max);
    let w_min = freqs.iter().cloned().filter(|w| *w > 1e-9 * w_max).fold(f64::INFINITY, f64::min);
    if !(w_max > 0.0) || !w_min.is_finite() {
        return Err(Error::Numerical("no oscillatory mode to set the time scale".into()));
    }
    let period = 2.0 * std::f64::consts::PI / w_min;
    let h = 2.0 * std::f64::consts::PI / w_max / steps_per_period as f64;
    let steps = (periods * period / h).ceil() as usize;
    let flow = HamiltonianFlow::new(model, &omega)?;
    let traj = flow.trajectory_gl(eta0, h, steps)?;
    let e0 = flow.model.energy(eta0, 0.0);
    let dev = traj.iter().map(|x| (flow.model.energy(x, 0.0) - e0).abs()).fold(0.0, f64::max);
    Ok(dev / e0.abs().max(f64::MIN_POSITIVE) / periods)
}

/// Largest relative gap between the analytic gradient and a central finite
/// difference with step `1e−6·max(1, |x_i|)`.
pub fn gradient_fd_error(red: &Reduction, x: &DVector<f64>, t: f64) -> f64 {
    let model = red.system.hamiltonian.numeric();
    let g = model.gradient(x, t);
    let mut worst: f64 = 0.0;
    let scale = g.amax().max(1e-300);
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (model.energy(&xp, t) - model.energy(&xm, t)) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / scale);
    }
    worst
}

/// Structural checks of one reduction, all exact.
#[derive(Clone, Debug, Serialize)]
pub struct StructuralChecks {
    pub omega_branch_skew: bool,
    pub omega_z_skew: bool,
    pub fk_zero: bool,
    pub rank_identity: bool,
    pub darboux_canonical: bool,
    pub zero_modes_annihilate: bool,
    pub periodicity_violations: Vec<String>,
    pub compact_count_preserved: bool,
}

impl StructuralChecks {
    pub fn all_ok(&self) -> bool {
        self.omega_branch_skew
            && self.omega_z_skew
            && self.fk_zero
            && self.rank_identity
            && self.darboux_canonical
            && self.zero_modes_annihilate
            && self.periodicity_violations.is_empty()
            && self.compact_count_preserved
    }
}

/// Runs the exact structural checks on a reduction.
pub fn structural_checks(red: &Reduction) -> StructuralChecks {
    let cs = &red.constraints;
    let s = &red.darboux.s;
    let om = &red.constrained.omega;
    let annihilate = red.constrained.zero_modes.vectors.iter().all(|w| {
        let v = red.omega_z.matrix.mul_vec(w);
        v.iter().all(num_traits::Zero::is_zero)
    });
    StructuralChecks {
        omega_branch_skew: red.omega_branch.matrix.is_skew(),
        omega_z_skew: red.omega_z.matrix.is_skew(),
        fk_zero: cs.f.mul(&cs.k).is_zero(),
        rank_identity: cs.f.rank() + cs.k.rank() == 2 * cs.n_branches,
        darboux_canonical: s.transpose().mul(om).mul(s) == canonical_j(red.darboux.n_pairs),
        zero_modes_annihilate: annihilate,
        periodicity_violations: red.system.hamiltonian.periodicity_violations(),
        compact_count_preserved: red.compact_before == red.compact_after,
    }
}
