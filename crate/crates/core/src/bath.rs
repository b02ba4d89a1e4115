//! Caldeira–Leggett discretization of dissipative environments.
//!
//! A passive immittance `X(s)` (admittance or impedance) with real part
//! `Re X̃(ω) ≥ 0` on the imaginary axis is replaced by a dense comb of
//! lossless poles `w_k s/(s² + Ω_k²)` at `Ω_k = kΔΩ`.  Each pole's delta
//! weight `π w_k/2` equals the exact integral of `Re X̃` over its bin
//! `[Ω_k − ΔΩ/2, Ω_k + ΔΩ/2]`, so the comb reproduces the target response in
//! the continuum limit.  Poles at zero and infinity carry no hermitian part
//! and are kept as lumped elements, together with the high-frequency part
//! of the continuum above the last bin, which acts as a lumped `s`-term.
//!
//! The nonreciprocal two-port
//! `Z̃(ω) = ((Y₀ − iωC)·1 − G·J)/((Y₀ − iωC)² + G²)` is handled the same way
//! with even densities `a(ω)` (symmetric part) and `b(ω)` (skew part,
//! `J = [[0, 1], [−1, 0]]`), realized per bin by a pair of chiral
//! oscillators of opposite handedness.
//!
//! Reconstructions are evaluated at `s = −iω + κΔΩ`: the small real shift
//! smooths the comb over a few bins, turning the Riemann sum into a
//! first-order approximation of the continuum response.

use nalgebra::{Complex, DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::couplings::canonical_j_f64;
use crate::dynamics::linear_frequencies;
use crate::error::{Error, Result};
use crate::hamiltonian::NumericModel;
use crate::numerics::{geometric_grid, integrate_log_panels, principal_value, tail_inverse_square, GaussRule};

type C64 = Complex<f64>;

/// Default reconstruction shift in units of `ΔΩ`.
pub const DEFAULT_KAPPA: f64 = 3.0;

/// Whether the target is an admittance or an impedance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Admittance,
    Impedance,
}

/// Dissipative (continuous) part of a one-port target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Continuum {
    /// No dissipative part.
    None,
    /// Frequency-independent value `1/r` (admittance) or `r` (impedance).
    Resistor { r: f64 },
    /// `1/(sC + 1/R)`.
    ParallelRc { r: f64, c: f64 },
    /// `1/(sC + 1/(sL) + 1/R)`.
    ParallelRlc { r: f64, l: f64, c: f64 },
}

impl Continuum {
    fn eval(&self, kind: Kind, s: C64) -> C64 {
        match *self {
            Continuum::None => C64::new(0.0, 0.0),
            Continuum::Resistor { r } => C64::new(if kind == Kind::Admittance { 1.0 / r } else { r }, 0.0),
            Continuum::ParallelRc { r, c } => (s * c + 1.0 / r).inv(),
            Continuum::ParallelRlc { r, l, c } => (s * c + (s * l).inv() + 1.0 / r).inv(),
        }
    }

    /// Closed-form `Re X̃(ω)` for `ω ≥ 0`.
    fn re(&self, kind: Kind, w: f64) -> f64 {
        match *self {
            Continuum::None => 0.0,
            Continuum::Resistor { r } => {
                if kind == Kind::Admittance {
                    1.0 / r
                } else {
                    r
                }
            }
            Continuum::ParallelRc { r, c } => {
                let g = 1.0 / r;
                g / (g * g + (w * c).powi(2))
            }
            Continuum::ParallelRlc { r, l, c } => {
                let g = 1.0 / r;
                let x = w * c - 1.0 / (w * l);
                if w == 0.0 {
                    0.0
                } else {
                    g / (g * g + x * x)
                }
            }
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            Continuum::None => vec![],
            Continuum::Resistor { r } => vec![r],
            Continuum::ParallelRc { r, c } => vec![r, c],
            Continuum::ParallelRlc { r, l, c } => vec![r, l, c],
        }
    }
}

/// A one-port immittance `X(s) = A₀/s + A_∞ s + X_c(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnePortTarget {
    pub kind: Kind,
    /// Residue of the pole at zero.
    #[serde(default)]
    pub pole_zero: f64,
    /// Coefficient of the pole at infinity.
    #[serde(default)]
    pub pole_inf: f64,
    pub continuum: Continuum,
}

impl OnePortTarget {
    /// A resistor seen as an admittance.
    pub fn resistor(r: f64) -> Self {
        OnePortTarget { kind: Kind::Admittance, pole_zero: 0.0, pole_inf: 0.0, continuum: Continuum::Resistor { r } }
    }

    /// A capacitor seen as an admittance `sC`.
    pub fn capacitor(c: f64) -> Self {
        OnePortTarget { kind: Kind::Admittance, pole_zero: 0.0, pole_inf: c, continuum: Continuum::None }
    }

    /// `X(s)`.
    pub fn eval(&self, s: C64) -> C64 {
        s.inv() * self.pole_zero + s * self.pole_inf + self.continuum.eval(self.kind, s)
    }

    /// `X̃(ω) = X(−iω)`.
    pub fn response(&self, w: f64) -> C64 {
        self.eval(C64::new(0.0, -w))
    }

    /// `Re X̃(ω)`; the lumped poles contribute nothing.
    pub fn re(&self, w: f64) -> f64 {
        self.continuum.re(self.kind, w)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.pole_zero >= 0.0
            && self.pole_inf >= 0.0
            && self.pole_zero.is_finite()
            && self.pole_inf.is_finite()
            && self.continuum.params().iter().all(|p| *p > 0.0 && p.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::schema("target", "element values must be positive and finite"))
        }
    }
}

/// Discretized one-port bath.
///
/// For an admittance each bin is a series `L_k`–`C_k` branch with
/// `Y_k(s) = (s/L_k)/(s² + Ω_k²)`; for an impedance it is a parallel tank
/// with `Z_k(s) = (s/C_k)/(s² + Ω_k²)`.  In both cases `w_k = 1/L_k`
/// (resp. `1/C_k`) and `y_k = w_k/Ω_k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OnePortBath {
    pub target: OnePortTarget,
    pub delta_omega: f64,
    pub omega_max: f64,
    pub kappa: f64,
    pub omega: Vec<f64>,
    /// Pole weights `w_k = (2/π)∫_bin Re X̃`.
    pub weight: Vec<f64>,
    pub y: Vec<f64>,
    pub c: Vec<f64>,
    pub l: Vec<f64>,
    /// Lumped `s`-coefficient standing for the continuum above the last bin.
    pub tail: f64,
}

/// Exact-enough bin integrals of `f` over `[Ω_k ∓ ΔΩ/2]` for `k = 1..=K`.
fn bin_integrals<F: Fn(f64) -> f64>(f: F, d: f64, count: usize) -> Vec<f64> {
    let rule = GaussRule::new(8);
    (1..=count)
        .map(|k| {
            let c = k as f64 * d;
            rule.integrate(&f, c - 0.5 * d, c + 0.5 * d)
        })
        .collect()
}

fn bin_count(delta_omega: f64, omega_max: f64) -> Result<usize> {
    if !(delta_omega > 0.0 && omega_max >= delta_omega && delta_omega.is_finite() && omega_max.is_finite()) {
        return Err(Error::schema("bath", "need 0 < ΔΩ ≤ Ω_max"));
    }
    Ok((omega_max / delta_omega).round() as usize)
}

/// Pairwise sum of complex terms.
fn csum(items: &[C64]) -> C64 {
    match items.len() {
        0 => C64::new(0.0, 0.0),
        1 => items[0],
        n => csum(&items[..n / 2]) + csum(&items[n / 2..]),
    }
}

/// Builds the one-port comb for `target` with spacing `ΔΩ` up to `Ω_max`.
///
/// Fails with a schema error if `Re X̃` is negative anywhere on the bin
/// quadrature nodes (non-passive target).
pub fn discretize_oneport(target: &OnePortTarget, delta_omega: f64, omega_max: f64) -> Result<OnePortBath> {
    target.validate()?;
    let count = bin_count(delta_omega, omega_max)?;
    let rule = GaussRule::new(8);
    for k in 1..=count {
        let c = k as f64 * delta_omega;
        for (x, _) in rule.on(c - 0.5 * delta_omega, c + 0.5 * delta_omega) {
            let v = target.re(x);
            if !(v >= -1e-14 * v.abs().max(1.0)) {
                return Err(Error::schema("target", format!("negative real part {v} at ω = {x} (non-passive)")));
            }
        }
    }
    let masses = bin_integrals(|w| target.re(w), delta_omega, count);
    let mut bath = OnePortBath {
        target: *target,
        delta_omega,
        omega_max,
        kappa: DEFAULT_KAPPA,
        omega: vec![],
        weight: vec![],
        y: vec![],
        c: vec![],
        l: vec![],
        tail: 0.0,
    };
    for (k, m) in masses.iter().enumerate() {
        let w = 2.0 / PI * m;
        if w <= 0.0 {
            continue;
        }
        let om = (k + 1) as f64 * delta_omega;
        // Admittance: L = 1/w, C = 1/(Ω² L).  Impedance: C = 1/w, L = 1/(Ω² C).
        let (lk, ck) = match target.kind {
            Kind::Admittance => (1.0 / w, w / (om * om)),
            Kind::Impedance => (w / (om * om), 1.0 / w),
        };
        bath.omega.push(om);
        bath.weight.push(w);
        bath.y.push(w / om);
        bath.l.push(lk);
        bath.c.push(ck);
    }
    let top = (count as f64 + 0.5) * delta_omega;
    bath.tail = 2.0 / PI * tail_inverse_square(|w| target.re(w), top, 64);
    Ok(bath)
}

impl OnePortBath {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Total lumped `s`-coefficient: the target's pole at infinity plus the tail.
    pub fn lumped_inf(&self) -> f64 {
        self.target.pole_inf + self.tail
    }

    /// Reconstructed `X(s)` from the comb and the lumped elements.
    pub fn eval(&self, s: C64) -> C64 {
        let terms: Vec<C64> = self.omega.iter().zip(&self.weight).map(|(o, w)| s * *w / (s * s + o * o)).collect();
        csum(&terms) + s * self.lumped_inf() + s.inv() * self.target.pole_zero
    }

    /// Reconstructed response at `s = −iω + κΔΩ`.
    pub fn reconstruct(&self, w: f64) -> C64 {
        self.eval(C64::new(self.kappa * self.delta_omega, -w))
    }

    /// Maximum relative errors `(Re, complex)` of the reconstruction against
    /// the target on `omegas`, both normalized by `|X̃(ω)|`.
    pub fn errors(&self, omegas: &[f64]) -> (f64, f64) {
        omegas.iter().fold((0.0f64, 0.0f64), |(er, ec), &w| {
            let t = self.target.response(w);
            let r = self.reconstruct(w);
            let n = t.norm();
            (er.max((r.re - t.re).abs() / n), ec.max((r - t).norm() / n))
        })
    }

    /// Hamiltonian of a parallel `C`–`L` node shunted by this admittance bath.
    ///
    /// Lumped parts of the target join the system: the pole at infinity and
    /// the tail add to `C`, the pole at zero adds to `1/L`.  With
    /// [`Convention::NodeCharge`] the coordinates are
    /// `(Φ, φ_k | Q, p_k)` with `H = Q²/2C + Φ²/2L + Σ p_k²/2C_k + (Φ − φ_k)²/2L_k`;
    /// with [`Convention::InductorCharge`] they are `(Φ, ψ_k | q_l, q_k)` with
    /// `H = (q_l + Σ q_k)²/2C + Φ²/2L + Σ q_k²/2C_k + ψ_k²/2L_k`.
    /// [`convention_map`] relates the two.
    pub fn shunted_lc_hamiltonian(&self, c: f64, l: f64, convention: Convention) -> Result<OscillatorModel> {
        if self.target.kind != Kind::Admittance {
            return Err(Error::schema("bath", "a shunt bath must be an admittance"));
        }
        if !(c > 0.0 && l > 0.0) {
            return Err(Error::schema("system", "C and L must be positive"));
        }
        let k = self.len();
        let n = k + 1;
        let c_tot = c + self.lumped_inf();
        let l_inv = 1.0 / l + self.target.pole_zero;
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        let mut labels = vec!["Phi".to_string()];
        match convention {
            Convention::NodeCharge => {
                labels.extend((1..=k).map(|i| format!("phi_{i}")));
                labels.push("Q".into());
                labels.extend((1..=k).map(|i| format!("p_{i}")));
                h[(0, 0)] = l_inv;
                h[(n, n)] = 1.0 / c_tot;
                for i in 0..k {
                    let g = 1.0 / self.l[i];
                    h[(0, 0)] += g;
                    h[(1 + i, 1 + i)] = g;
                    h[(0, 1 + i)] = -g;
                    h[(1 + i, 0)] = -g;
                    h[(n + 1 + i, n + 1 + i)] = 1.0 / self.c[i];
                }
            }
            Convention::InductorCharge => {
                labels.extend((1..=k).map(|i| format!("psi_{i}")));
                labels.push("q_l".into());
                labels.extend((1..=k).map(|i| format!("q_{i}")));
                h[(0, 0)] = l_inv;
                for i in 0..k {
                    h[(1 + i, 1 + i)] = 1.0 / self.l[i];
                    h[(n + 1 + i, n + 1 + i)] = 1.0 / self.c[i];
                }
                // (q_l + Σ q_k)²/2C couples every charge.
                for a in 0..n {
                    for b in 0..n {
                        h[(n + a, n + b)] += 1.0 / c_tot;
                    }
                }
            }
        }
        Ok(OscillatorModel { labels, quad: h })
    }

    /// Hamiltonian `Σ Q̄_m²/2C̄_m + φ̄_m²/2L̄_m` of the parallel tanks of an
    /// impedance bath, coordinates `(φ̄_m | Q̄_m)`.
    pub fn tank_hamiltonian(&self) -> Result<OscillatorModel> {
        if self.target.kind != Kind::Impedance {
            return Err(Error::schema("bath", "tank representation needs an impedance bath"));
        }
        let k = self.len();
        let mut h = DMatrix::zeros(2 * k, 2 * k);
        let mut labels: Vec<String> = (1..=k).map(|i| format!("phibar_{i}")).collect();
        labels.extend((1..=k).map(|i| format!("Qbar_{i}")));
        for i in 0..k {
            h[(i, i)] = 1.0 / self.l[i];
            h[(k + i, k + i)] = 1.0 / self.c[i];
        }
        Ok(OscillatorModel { labels, quad: h })
    }
}

/// Which solved charge variable the shunted-LC Hamiltonian uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Capacitor charge `Q` conjugate to the node flux.
    NodeCharge,
    /// Inductor charge `q_l` conjugate to the node flux.
    InductorCharge,
}

/// Linear map `S` with `x_inductor = S x_node` for a bath of `k` branches:
/// `ψ_k = Φ − φ_k`, `q_k = −p_k`, `q_l = Q + Σ p_k`.  It is symplectic and
/// satisfies `H_node = Sᵀ H_inductor S`.
pub fn convention_map(k: usize) -> DMatrix<f64> {
    let n = k + 1;
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    s[(0, 0)] = 1.0;
    s[(n, n)] = 1.0;
    for i in 1..n {
        s[(i, 0)] = 1.0;
        s[(i, i)] = -1.0;
        s[(n + i, n + i)] = -1.0;
        s[(n, n + i)] = 1.0;
    }
    s
}

/// A quadratic Hamiltonian fragment in canonical coordinates
/// `(positions | momenta)`.
#[derive(Clone, Debug, Serialize)]
pub struct OscillatorModel {
    pub labels: Vec<String>,
    /// Symmetric matrix of `H = ½ xᵀ quad x`.
    pub quad: DMatrix<f64>,
}

impl OscillatorModel {
    /// Number of canonical pairs.
    pub fn pairs(&self) -> usize {
        self.quad.nrows() / 2
    }

    pub fn omega(&self) -> DMatrix<f64> {
        canonical_j_f64(self.pairs())
    }

    /// Numeric view usable by the integrators in [`crate::dynamics`].
    pub fn numeric(&self) -> NumericModel {
        NumericModel { quad: self.quad.clone(), amps: vec![], waves: vec![], drive_rows: vec![], waveforms: vec![] }
    }

    /// Normal-mode angular frequencies.
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        if self.pairs() == 0 {
            return Ok(vec![]);
        }
        linear_frequencies(&self.numeric(), &self.omega())
    }
}

/// The nonreciprocal two-port target
/// `Z̃(ω) = ((Y₀ − iωC)·1 − G·J)/((Y₀ − iωC)² + G²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrTarget {
    pub c: f64,
    pub y0: f64,
    pub g: f64,
}

/// `J = [[0, 1], [−1, 0]]` as a complex matrix.
fn j2() -> Matrix2<C64> {
    let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    Matrix2::new(z, o, -o, z)
}

impl NrTarget {
    fn validate(&self) -> Result<()> {
        if self.c > 0.0 && self.y0 > 0.0 && self.g >= 0.0 && [self.c, self.y0, self.g].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::schema("target", "need C > 0, Y₀ > 0, G ≥ 0"))
        }
    }

    /// `Z(s)`.
    pub fn eval(&self, s: C64) -> Matrix2<C64> {
        let z = s * self.c + self.y0;
        let den = (z * z + self.g * self.g).inv();
        (Matrix2::identity() * z - j2() * C64::new(self.g, 0.0)) * den
    }

    /// `Z̃(ω) = Z(−iω)`.
    pub fn response(&self, w: f64) -> Matrix2<C64> {
        self.eval(C64::new(0.0, -w))
    }

    fn dn(&self, w: f64) -> f64 {
        let (c, y, g) = (self.c, self.y0, self.g);
        (y * y + g * g - w * w * c * c).powi(2) + 4.0 * w * w * c * c * y * y
    }

    /// Even density of the symmetric part, `a(ω) = (2/π) Re Z̃₁₁(ω)`.
    pub fn a(&self, w: f64) -> f64 {
        let (c, y, g) = (self.c, self.y0, self.g);
        2.0 * y * (y * y + w * w * c * c + g * g) / (PI * self.dn(w))
    }

    /// Even density of the skew part, `b(ω) = (2ω/π) Im` of the `J`-coefficient.
    pub fn b(&self, w: f64) -> f64 {
        let (c, y, g) = (self.c, self.y0, self.g);
        -4.0 * w * w * c * y * g / (PI * self.dn(w))
    }
}

/// One chiral oscillator: two capacitors `C` joined by a gyrator `R`,
/// with `H = q²/2C + ψ²/(2CR²)` and frequency `Ω = 1/(RC)`.
///
/// It contributes `(a s·1 + σ a Ω·J)/(s² + Ω²)` to the port impedance with
/// `a = 1/C` and handedness `σ = ±1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiralOscillator {
    pub omega: f64,
    pub chirality: i8,
    pub c: f64,
    pub r: f64,
}

/// Discretized nonreciprocal two-port bath.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NrBath {
    pub target: NrTarget,
    pub delta_omega: f64,
    pub omega_max: f64,
    pub kappa: f64,
    pub omega: Vec<f64>,
    /// Bin integrals of `a`.
    pub a: Vec<f64>,
    /// Bin integrals of `b`.
    pub b: Vec<f64>,
    /// `∫_top^∞ a/Ω²`: lumped coefficient of `s·1`.
    pub a_inf: f64,
    /// `∫_top^∞ b/Ω²`: lumped coefficient of `J`.
    pub b_inf: f64,
    pub oscillators: Vec<ChiralOscillator>,
}

/// Builds the two-port comb; each bin splits into chiral oscillators with
/// weights `a_± = (a_k ± b_k/Ω_k)/2`, which are nonnegative because
/// `|b(ω)| ≤ ω a(ω)` pointwise.
pub fn discretize_nr_twoport(target: &NrTarget, delta_omega: f64, omega_max: f64) -> Result<NrBath> {
    target.validate()?;
    let count = bin_count(delta_omega, omega_max)?;
    let a = bin_integrals(|w| target.a(w), delta_omega, count);
    let b = bin_integrals(|w| target.b(w), delta_omega, count);
    let omega: Vec<f64> = (1..=count).map(|k| k as f64 * delta_omega).collect();
    let mut oscillators = Vec::new();
    for ((o, ak), bk) in omega.iter().zip(&a).zip(&b) {
        for sigma in [1i8, -1] {
            let w = 0.5 * (ak + sigma as f64 * bk / o);
            if w > 0.0 {
                oscillators.push(ChiralOscillator { omega: *o, chirality: sigma, c: 1.0 / w, r: w / o });
            } else if w < -1e-15 * ak {
                return Err(Error::Numerical(format!("negative chiral weight {w} at Ω = {o}")));
            }
        }
    }
    let top = (count as f64 + 0.5) * delta_omega;
    Ok(NrBath {
        target: *target,
        delta_omega,
        omega_max,
        kappa: DEFAULT_KAPPA,
        omega,
        a,
        b,
        a_inf: tail_inverse_square(|w| target.a(w), top, 64),
        b_inf: tail_inverse_square(|w| target.b(w), top, 64),
        oscillators,
    })
}

/// Relative reconstruction errors at one frequency.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NrError {
    pub omega: f64,
    /// `‖Re(Z_rec − Z̃)‖_F/‖Z̃‖_F`.
    pub re: f64,
    /// `‖Im(Z_rec − Z̃)‖_F/‖Z̃‖_F`.
    pub im: f64,
}

fn frob(m: &Matrix2<f64>) -> f64 {
    m.norm()
}

impl NrBath {
    /// Reconstructed `Z(s)` from the bin sums and lumped terms.
    pub fn eval(&self, s: C64) -> Matrix2<C64> {
        let mut sym = Vec::with_capacity(self.omega.len());
        let mut skew = Vec::with_capacity(self.omega.len());
        for ((o, a), b) in self.omega.iter().zip(&self.a).zip(&self.b) {
            let den = (s * s + o * o).inv();
            sym.push(s * den * *a);
            skew.push(den * *b);
        }
        let sa = csum(&sym) + s * self.a_inf;
        let sb = csum(&skew) + self.b_inf;
        Matrix2::identity() * sa + j2() * sb
    }

    /// Reconstructed `Z(s)` summed over the emitted chiral oscillators
    /// (without the lumped terms).
    pub fn eval_oscillators(&self, s: C64) -> Matrix2<C64> {
        let mut sym = Vec::new();
        let mut skew = Vec::new();
        for osc in &self.oscillators {
            let w = 1.0 / osc.c;
            let den = (s * s + osc.omega * osc.omega).inv();
            sym.push(s * den * w);
            skew.push(den * (osc.chirality as f64 * w * osc.omega));
        }
        Matrix2::identity() * csum(&sym) + j2() * csum(&skew)
    }

    /// Reconstructed response at `s = −iω + κΔΩ`.
    pub fn reconstruct(&self, w: f64) -> Matrix2<C64> {
        self.eval(C64::new(self.kappa * self.delta_omega, -w))
    }

    pub fn errors(&self, omegas: &[f64]) -> Vec<NrError> {
        omegas
            .iter()
            .map(|&w| {
                let t = self.target.response(w);
                let d = self.reconstruct(w) - t;
                let n = t.map(|z| z.norm_sqr()).sum().sqrt();
                NrError { omega: w, re: frob(&d.map(|z| z.re)) / n, im: frob(&d.map(|z| z.im)) / n }
            })
            .collect()
    }

    /// Smallest eigenvalue of the hermitian part of the reconstruction over
    /// `omegas`; nonnegative for a passive comb.
    pub fn passivity_margin(&self, omegas: &[f64]) -> f64 {
        omegas
            .iter()
            .map(|&w| {
                // (Z + Z†)/2 = Re A·1 + i Im B·J, eigenvalues Re A ± |Im B|.
                let z = self.reconstruct(w);
                let a = z[(0, 0)];
                let b = z[(0, 1)];
                a.re - b.im.abs()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Hamiltonian `Σ q_k²/2C_k + ψ_k²/(2C_kR_k²)` of the emitted chiral
    /// oscillators, coordinates `(ψ_k | q_k)`.
    pub fn hamiltonian(&self) -> OscillatorModel {
        let k = self.oscillators.len();
        let mut h = DMatrix::zeros(2 * k, 2 * k);
        let mut labels: Vec<String> = (1..=k).map(|i| format!("psi_{i}")).collect();
        labels.extend((1..=k).map(|i| format!("q_{i}")));
        for (i, o) in self.oscillators.iter().enumerate() {
            h[(i, i)] = 1.0 / (o.c * o.r * o.r);
            h[(k + i, k + i)] = 1.0 / o.c;
        }
        OscillatorModel { labels, quad: h }
    }
}

/// `P∫_0^∞ g(Ω)/(Ω² − ω²) dΩ` for a density decaying at least like `Ω⁻²`.
///
/// The pole part `1/(2ω)·1/(Ω − ω)` is taken as a principal value on
/// `[0, 2ω]`; the remainder is regular and is integrated on logarithmic
/// panels up to `X = 10⁴·max(ω, scale)`, plus a `1/Ω` substitution tail.
pub fn half_line_pv<G: Fn(f64) -> f64 + Sync>(g: G, w: f64, scale: f64) -> f64 {
    let near = principal_value(|x| g(x) / (x + w), w, 0.0, 2.0 * w, 60);
    let x_top = 1e4 * w.max(scale);
    let grid = geometric_grid(2.0 * w, x_top, 400);
    let far = integrate_log_panels(|x| DVector::from_element(1, g(x) / (x * x - w * w)), &grid, 8, 1, 1)[0];
    let tail = tail_inverse_square(|x| g(x) * x * x / (x * x - w * w), x_top, 64);
    near + far + tail
}

/// Hilbert-consistency of the target densities at one frequency.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KramersKronig {
    pub omega: f64,
    /// `Im Z̃₁₁` from `−ω P∫ a/(Ω² − ω²)`.
    pub im_diag_pv: f64,
    pub im_diag_direct: f64,
    /// `Re` of the `J`-coefficient from `P∫ b/(Ω² − ω²)`.
    pub re_skew_pv: f64,
    pub re_skew_direct: f64,
}

impl KramersKronig {
    /// Errors of both pairs relative to `‖Z̃(ω)‖_F`.
    pub fn relative_error(&self, target: &NrTarget) -> f64 {
        let n = target.response(self.omega).map(|z| z.norm_sqr()).sum().sqrt();
        ((self.im_diag_pv - self.im_diag_direct).abs()).max((self.re_skew_pv - self.re_skew_direct).abs()) / n
    }
}

/// Reconstructs the reactive parts of `Z̃(ω)` from the dissipative densities
/// by principal-value integration and compares with direct evaluation.
pub fn kramers_kronig(target: &NrTarget, w: f64) -> KramersKronig {
    let scale = (target.y0.hypot(target.g)) / target.c;
    let z = target.response(w);
    KramersKronig {
        omega: w,
        im_diag_pv: -w * half_line_pv(|x| target.a(x), w, scale),
        im_diag_direct: z[(0, 0)].im,
        re_skew_pv: half_line_pv(|x| target.b(x), w, scale),
        re_skew_direct: z[(0, 1)].re,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resistor_weights_match_flat_bin_integrals() {
        let bath = discretize_oneport(&OnePortTarget::resistor(2.0), 0.1, 10.0).unwrap();
        assert_eq!(bath.len(), 100);
        for (o, y) in bath.omega.iter().zip(&bath.y) {
            let expect = 2.0 / (PI * 2.0) * 0.1 / o;
            assert!((y - expect).abs() < 1e-13 * expect);
        }
        for i in 0..bath.len() {
            assert!((bath.l[i] * bath.omega[i] * bath.y[i] - 1.0).abs() < 1e-13);
            assert!((bath.c[i] * bath.omega[i].powi(2) * bath.l[i] - 1.0).abs() < 1e-13);
        }
        // Tail: (2/π)∫_top^∞ (1/R)/Ω² = 2/(πR·top).
        assert!((bath.tail - 2.0 / (PI * 2.0 * 10.05)).abs() < 1e-14);
    }

    #[test]
    fn capacitor_has_only_the_infinite_pole() {
        let bath = discretize_oneport(&OnePortTarget::capacitor(3.0), 0.1, 10.0).unwrap();
        assert!(bath.is_empty());
        assert_eq!(bath.tail, 0.0);
        assert_eq!(bath.lumped_inf(), 3.0);
    }

    #[test]
    fn rlc_impedance_reconstructs() {
        let t = OnePortTarget {
            kind: Kind::Impedance,
            pole_zero: 0.0,
            pole_inf: 0.0,
            continuum: Continuum::ParallelRlc { r: 2.0, l: 1.0, c: 1.0 },
        };
        let bath = discretize_oneport(&t, 0.002, 200.0).unwrap();
        let grid = geometric_grid(0.1, 10.0, 60);
        // L² relative error of the real part.
        let (num, den) = grid.iter().fold((0.0, 0.0), |(n, d), &w| {
            let r = bath.reconstruct(w).re;
            let e = t.re(w);
            (n + (r - e).powi(2), d + e * e)
        });
        let err: f64 = (num / den).sqrt();
        assert!(err < 0.02, "{err}");
        let small = discretize_oneport(&t, 0.5, 5.0).unwrap();
        let f = small.tank_hamiltonian().unwrap().frequencies().unwrap();
        for (a, b) in f.iter().zip(&small.omega) {
            assert!((a - b).abs() < 1e-9 * b);
        }
    }

    #[test]
    fn non_passive_target_is_rejected() {
        let t = OnePortTarget {
            kind: Kind::Admittance,
            pole_zero: 0.0,
            pole_inf: 0.0,
            continuum: Continuum::Resistor { r: -1.0 },
        };
        assert!(discretize_oneport(&t, 0.1, 1.0).is_err());
    }

    #[test]
    fn conventions_are_symplectically_equivalent() {
        let t = OnePortTarget::resistor(3.0);
        let bath = discretize_oneport(&t, 0.5, 3.0).unwrap();
        let k = bath.len();
        let hn = bath.shunted_lc_hamiltonian(1.5, 0.7, Convention::NodeCharge).unwrap();
        let hi = bath.shunted_lc_hamiltonian(1.5, 0.7, Convention::InductorCharge).unwrap();
        let s = convention_map(k);
        let j = canonical_j_f64(k + 1);
        assert!((s.transpose() * &j * &s - &j).amax() < 1e-15);
        assert!((s.transpose() * &hi.quad * &s - &hn.quad).amax() < 1e-12);
        let (fa, fb) = (hn.frequencies().unwrap(), hi.frequencies().unwrap());
        for (a, b) in fa.iter().zip(&fb) {
            assert!((a - b).abs() < 1e-9 * a);
        }
    }

    #[test]
    fn empty_bath_leaves_system_unchanged() {
        let t = OnePortTarget { kind: Kind::Admittance, pole_zero: 0.0, pole_inf: 0.0, continuum: Continuum::None };
        let bath = discretize_oneport(&t, 0.1, 1.0).unwrap();
        let h = bath.shunted_lc_hamiltonian(2.0, 0.5, Convention::InductorCharge).unwrap();
        assert_eq!(h.quad, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]));
        let nr = discretize_nr_twoport(&NrTarget { c: 1.0, y0: 1.0, g: 0.5 }, 1.0, 1.0).unwrap();
        assert!(NrBath { oscillators: vec![], ..nr }.hamiltonian().quad.is_empty());
    }

    #[test]
    fn chiral_weights_reproduce_bin_sums() {
        let t = NrTarget { c: 1.0, y0: 1.0, g: 0.7 };
        let bath = discretize_nr_twoport(&t, 0.05, 20.0).unwrap();
        assert_eq!(bath.oscillators.len(), 2 * bath.omega.len());
        let s = C64::new(0.15, -1.3);
        let lumped = Matrix2::identity() * (s * bath.a_inf) + j2() * C64::new(bath.b_inf, 0.0);
        let d = bath.eval(s) - bath.eval_oscillators(s) - lumped;
        assert!(d.iter().all(|z| z.norm() < 1e-12), "{d}");
        let small = discretize_nr_twoport(&t, 0.5, 5.0).unwrap();
        let f = small.hamiltonian().frequencies().unwrap();
        let mut expect: Vec<f64> = small.oscillators.iter().map(|o| o.omega).collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in f.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9 * b);
        }
    }

    #[test]
    fn reciprocal_limit_has_no_skew_part() {
        let t = NrTarget { c: 1.0, y0: 1.0, g: 0.0 };
        let bath = discretize_nr_twoport(&t, 0.05, 20.0).unwrap();
        assert!(bath.b.iter().all(|b| *b == 0.0));
        assert_eq!(bath.b_inf, 0.0);
        let z = bath.reconstruct(1.0);
        assert_eq!(z[(0, 1)], C64::new(0.0, 0.0));
        assert_eq!(z[(1, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn kramers_kronig_pairs_agree() {
        let t = NrTarget { c: 1.0, y0: 1.0, g: 0.7 };
        for w in [0.1, 0.5, 1.0, 3.0, 10.0] {
            let kk = kramers_kronig(&t, w);
            assert!(kk.relative_error(&t) < 1e-6, "{kk:?}");
        }
    }

    #[test]
    fn shunted_lc_matches_netlist_reduction() {
        use crate::graph::TreePreference;
        use crate::netlist::parse_netlist;
        use crate::symplectic::reduce;
        use crate::verify::{compare_eom, random_state};

        let bath = discretize_oneport(&OnePortTarget::resistor(2.0), 1.0, 1.0).unwrap();
        assert_eq!(bath.len(), 1);
        let (c, l) = (1.5, 0.8);
        // The lumped tail joins the node capacitance.
        let text = format!(
            r#"{{"nodes": ["a", "b"], "ground": "gnd", "branches": [
                {{"id": "C", "from": "a", "to": "gnd", "kind": "capacitor", "params": {{"C": "{}"}}}},
                {{"id": "L", "from": "a", "to": "gnd", "kind": "inductor", "params": {{"L": "{}"}}}},
                {{"id": "Lk", "from": "a", "to": "b", "kind": "inductor", "params": {{"L": "{}"}}}},
                {{"id": "Ck", "from": "b", "to": "gnd", "kind": "capacitor", "params": {{"C": "{}"}}}}]}}"#,
            c + bath.lumped_inf(),
            l,
            bath.l[0],
            bath.c[0]
        );
        let g = parse_netlist(&text).unwrap();
        let red = reduce(&g, &TreePreference::CapacitiveFirst).unwrap();
        let expect = linear_frequencies(&red.system.hamiltonian.numeric(), &red.system.omega.to_f64()).unwrap();
        for conv in [Convention::NodeCharge, Convention::InductorCharge] {
            let h = bath.shunted_lc_hamiltonian(c, l, conv).unwrap();
            assert_eq!(h.pairs(), 2);
            let f = h.frequencies().unwrap();
            for (a, b) in f.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-10 * b, "{f:?} vs {expect:?}");
            }
        }
        let eom = compare_eom(&g, &red, &random_state(4, 0.3, 7), 5.0, 400).unwrap();
        assert!(eom.max_rel_error < 1e-6, "{eom:?}");
    }
}
