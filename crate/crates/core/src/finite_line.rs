//! Finite transmission lines: discrete spectra of lines joined at `x = 0`
//! by a reciprocal lumped boundary (`A`, `B`) and terminated individually at
//! their far ends, and Foster pole structure of a single terminated line.
//!
//! For per-line standing waves `φ_i(x)` that already satisfy the far-end
//! condition, the boundary rows at `x = 0` collapse to the symmetric
//! `N × N` matrix
//!
//! ```text
//! S(Ω) = B⁻¹ − Ω² A − diag(Δ_i φ_i′(0)/φ_i(0)),
//! ```
//!
//! which decreases monotonically in `Ω` between the poles of the diagonal
//! term.  Eigenfrequencies are the zeros of `det S`, counted by Sylvester
//! inertia: the number of modes below `Ω` equals the number of negative
//! eigenvalues of `S(Ω)` plus the number of poles passed.  Each mode is
//! isolated by bisection on this count, so no root can be skipped.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Far-end condition of one line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// No current: `U′(d) = 0`.
    Open,
    /// No voltage: `U(d) = 0`.
    Short,
    /// Capacitor to ground with rescaled value `a_d`: `Δ U′(d) = a_d Ω² U(d)`.
    Capacitive(f64),
}

/// Finite lines meeting at a reciprocal lumped boundary, in rescaled units.
#[derive(Clone, Debug, Serialize)]
pub struct FiniteLines {
    pub a: DMatrix<f64>,
    pub b_inv: DMatrix<f64>,
    /// Squared velocities.
    pub delta: DVector<f64>,
    pub lengths: DVector<f64>,
    pub ends: Vec<Termination>,
}

/// Standing wave of one line at frequency `Ω`, normalized so that the
/// coefficient of `cos k(x − d)` is one (or of `sin` for a short).
#[derive(Clone, Copy, Debug)]
struct Wave {
    k: f64,
    d: f64,
    /// `φ(x) = p cos k(x−d) + q sin k(x−d)`.
    p: f64,
    q: f64,
}

impl Wave {
    fn value(&self, x: f64) -> f64 {
        let t = self.k * (x - self.d);
        self.p * t.cos() + self.q * t.sin()
    }

    fn derivative(&self, x: f64) -> f64 {
        let t = self.k * (x - self.d);
        self.k * (self.q * t.cos() - self.p * t.sin())
    }

    /// `∫₀^d φ² dx` in closed form.
    fn norm_squared(&self) -> f64 {
        let (k, d, p, q) = (self.k, self.d, self.p, self.q);
        let s2 = (2.0 * k * d).sin();
        let c2 = (2.0 * k * d).cos();
        (p * p + q * q) * d / 2.0 + (p * p - q * q) * s2 / (4.0 * k) + p * q * (c2 - 1.0) / (2.0 * k)
    }
}

/// One eigenmode of the finite problem.
#[derive(Clone, Debug, Serialize)]
pub struct FiniteMode {
    pub omega: f64,
    /// `U(0)` of the normalized flux-like mode.
    pub u0: DVector<f64>,
    /// `U(d_i)` on each line.
    pub ud: DVector<f64>,
    /// `V(d_i)` of the dual mode `V = −Δ U′/Ω`.
    pub vd: DVector<f64>,
    /// `V′(d_i)` of the dual mode (equals `Ω U(d_i)`).
    pub dvd: DVector<f64>,
    /// Standing-wave amplitudes `γ_i`.
    amplitudes: Vec<f64>,
    #[serde(skip)]
    waves: Vec<(f64, f64, f64, f64)>,
}

impl FiniteMode {
    /// `U_i(x)`.
    pub fn u(&self, line: usize, x: f64) -> f64 {
        let (k, d, p, q) = self.waves[line];
        self.amplitudes[line] * Wave { k, d, p, q }.value(x)
    }

    /// `U_i′(x)`.
    pub fn du(&self, line: usize, x: f64) -> f64 {
        let (k, d, p, q) = self.waves[line];
        self.amplitudes[line] * Wave { k, d, p, q }.derivative(x)
    }
}

impl FiniteLines {
    pub fn new(
        a: DMatrix<f64>,
        b_inv: DMatrix<f64>,
        delta: DVector<f64>,
        lengths: DVector<f64>,
        ends: Vec<Termination>,
    ) -> Result<Self> {
        let n = delta.len();
        if n == 0 || lengths.len() != n || ends.len() != n || a.shape() != (n, n) || b_inv.shape() != (n, n) {
            return Err(Error::schema("finite_lines", "inconsistent dimensions"));
        }
        if delta.iter().chain(lengths.iter()).any(|v| !(*v > 0.0)) {
            return Err(Error::schema("finite_lines", "velocities and lengths must be positive"));
        }
        if ends.iter().any(|e| matches!(e, Termination::Capacitive(a) if !(*a > 0.0))) {
            return Err(Error::schema("finite_lines", "terminating capacitance must be positive"));
        }
        if a.clone().cholesky().is_none() || b_inv.clone().cholesky().is_none() {
            return Err(Error::schema("finite_lines", "A and B⁻¹ must be symmetric positive definite"));
        }
        Ok(FiniteLines { a, b_inv, delta, lengths, ends })
    }

    pub fn n(&self) -> usize {
        self.delta.len()
    }

    fn wave(&self, i: usize, omega: f64) -> Wave {
        let k = omega / self.delta[i].sqrt();
        let d = self.lengths[i];
        let (p, q) = match self.ends[i] {
            Termination::Open => (1.0, 0.0),
            Termination::Short => (0.0, 1.0),
            Termination::Capacitive(ad) => (1.0, omega * ad / self.delta[i].sqrt()),
        };
        Wave { k, d, p, q }
    }

    /// Number of poles of `Δ_i φ_i′(0)/φ_i(0)` in `(0, Ω)`.
    fn poles_below(&self, i: usize, omega: f64) -> usize {
        let t = omega / self.delta[i].sqrt() * self.lengths[i];
        match self.ends[i] {
            Termination::Open => (t / PI + 0.5).floor() as usize,
            Termination::Short => (t / PI).floor() as usize,
            Termination::Capacitive(ad) => {
                // Poles solve cot t = α t with α = a_d/d: one in each
                // (jπ, jπ + π/2), where cos t − α t sin t changes sign.
                let alpha = ad / self.lengths[i];
                let j = (t / PI).floor();
                let r = t - j * PI;
                let sign = if (j as i64) % 2 == 0 { 1.0 } else { -1.0 };
                let passed = r >= PI / 2.0 || sign * (t.cos() - alpha * t * t.sin()) < 0.0;
                j as usize + passed as usize
            }
        }
    }

    /// The boundary matrix `S(Ω)`.
    pub fn boundary_matrix(&self, omega: f64) -> DMatrix<f64> {
        let mut s = &self.b_inv - &self.a * (omega * omega);
        for i in 0..self.n() {
            let w = self.wave(i, omega);
            s[(i, i)] -= self.delta[i] * w.derivative(0.0) / w.value(0.0);
        }
        s
    }

    fn negative_count(&self, omega: f64) -> usize {
        let s = self.boundary_matrix(omega);
        SymmetricEigen::new(s).eigenvalues.iter().filter(|v| **v < 0.0).count()
    }

    /// Number of eigenfrequencies in `(0, Ω)`.
    pub fn mode_count(&self, omega: f64) -> usize {
        let eps = 1e-9 * self.scale();
        let base = self.negative_count(eps);
        let poles: usize = (0..self.n()).map(|i| self.poles_below(i, omega)).sum();
        (self.negative_count(omega) + poles).saturating_sub(base)
    }

    /// Characteristic frequency used for bracketing.
    fn scale(&self) -> f64 {
        (0..self.n()).map(|i| self.delta[i].sqrt() / self.lengths[i]).fold(0.0, f64::max)
    }

    /// The lowest `count` eigenfrequencies, each bisected to `rel_tol`.
    pub fn eigenfrequencies(&self, count: usize, rel_tol: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        let mut hi = self.scale();
        for n in 1..=count {
            let mut lo = out.last().copied().unwrap_or(0.0);
            let mut guard = 0;
            while self.mode_count(hi) < n {
                lo = hi;
                hi *= 1.5;
                guard += 1;
                if guard > 200 {
                    return Err(Error::Numerical(format!(
                        "could not bracket mode {n}: count stuck at {}",
                        self.mode_count(hi)
                    )));
                }
            }
            let mut top = hi;
            // Invariant: count(lo) < n ≤ count(top).
            for _ in 0..200 {
                if top - lo <= rel_tol * top {
                    break;
                }
                let mid = 0.5 * (lo + top);
                if self.mode_count(mid) >= n {
                    top = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(top);
        }
        Ok(out)
    }

    /// Normalized modes at the given eigenfrequencies.  Frequencies equal to
    /// `1e−10` relative are treated as one degenerate eigenspace whose basis
    /// is taken from the smallest right singular vectors of `S(Ω)`.
    pub fn modes(&self, freqs: &[f64]) -> Result<Vec<FiniteMode>> {
        let n = self.n();
        let mut out = Vec::new();
        let mut i = 0;
        while i < freqs.len() {
            let mut j = i + 1;
            while j < freqs.len() && (freqs[j] - freqs[i]).abs() <= 1e-10 * freqs[i] {
                j += 1;
            }
            let mult = j - i;
            let omega = freqs[i..j].iter().sum::<f64>() / mult as f64;
            let s = self.boundary_matrix(omega);
            let eig = SymmetricEigen::new(s);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&x, &y| eig.eigenvalues[x].abs().partial_cmp(&eig.eigenvalues[y].abs()).unwrap());
            for &c in idx.iter().take(mult) {
                let u = eig.eigenvectors.column(c).into_owned();
                out.push(self.build_mode(omega, &u)?);
            }
            i = j;
        }
        Ok(out)
    }

    fn build_mode(&self, omega: f64, u: &DVector<f64>) -> Result<FiniteMode> {
        let n = self.n();
        let waves: Vec<Wave> = (0..n).map(|i| self.wave(i, omega)).collect();
        let mut amp: Vec<f64> = (0..n).map(|i| u[i] / waves[i].value(0.0)).collect();
        if amp.iter().any(|a| !a.is_finite()) {
            return Err(Error::Numerical(format!("mode at Ω = {omega} has a node at the boundary")));
        }
        let mut norm = u.dot(&(&self.a * u));
        for i in 0..n {
            norm += amp[i] * amp[i] * waves[i].norm_squared();
            if let Termination::Capacitive(ad) = self.ends[i] {
                let ud = amp[i] * waves[i].value(self.lengths[i]);
                norm += ad * ud * ud;
            }
        }
        let scale = 1.0 / norm.sqrt();
        amp.iter_mut().for_each(|a| *a *= scale);
        let u0 = u * scale;
        let ud = DVector::from_fn(n, |i, _| amp[i] * waves[i].value(self.lengths[i]));
        let vd = DVector::from_fn(n, |i, _| -self.delta[i] * amp[i] * waves[i].derivative(self.lengths[i]) / omega);
        // V′ = −Δ U″/Ω = Ω U.
        let dvd = &ud * omega;
        Ok(FiniteMode {
            omega,
            u0,
            ud,
            vd,
            dvd,
            amplitudes: amp,
            waves: waves.iter().map(|w| (w.k, w.d, w.p, w.q)).collect(),
        })
    }

    /// `⟨F, F⟩` of a mode computed by composite quadrature instead of the
    /// closed form, for cross-checking the normalization.
    pub fn norm_by_quadrature(&self, mode: &FiniteMode, panels: usize) -> f64 {
        let rule = crate::numerics::GaussRule::new(8);
        let mut total = mode.u0.dot(&(&self.a * &mode.u0));
        for i in 0..self.n() {
            let d = self.lengths[i];
            let h = d / panels as f64;
            total += (0..panels)
                .map(|p| rule.integrate(|x| mode.u(i, x).powi(2), p as f64 * h, (p + 1) as f64 * h))
                .sum::<f64>();
            if let Termination::Capacitive(ad) = self.ends[i] {
                total += ad * mode.ud[i] * mode.ud[i];
            }
        }
        total
    }

    /// Weyl estimate `Ω Σ_i d_i/√Δ_i / π` of the mode count below `Ω`.
    pub fn weyl_count(&self, omega: f64) -> f64 {
        omega * (0..self.n()).map(|i| self.lengths[i] / self.delta[i].sqrt()).sum::<f64>() / PI
    }
}

/// Far end of a line for the Foster analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarEnd {
    Open,
    Short,
}

/// One resonance of a Foster impedance expansion: a parallel `L_n C_n`
/// tank contributing `2 k_n s/(s² + ω_n²)`.
#[derive(Clone, Debug, Serialize)]
pub struct FosterPole {
    pub omega: f64,
    /// Residue `k_n` of `Z(s)` at `s = iω_n`.
    pub residue: f64,
    pub c: f64,
    pub l: f64,
}

/// Foster form of the input impedance of a terminated line.
#[derive(Clone, Debug, Serialize)]
pub struct FosterForm {
    /// Leading series capacitor (pole at zero), present for an open end.
    pub c0: Option<f64>,
    pub poles: Vec<FosterPole>,
}

/// Input impedance poles of a line with per-length `c`, `l` and length `d`.
///
/// `Z(s) = Z₀ N(sτ)/D(sτ)` with `τ = d√(lc)`, `Z₀ = √(l/c)` and
/// `(N, D) = (cosh, sinh)` for an open end, `(sinh, cosh)` for a short.  On
/// the imaginary axis the denominator becomes `sin ωτ` or `cos ωτ`; its
/// roots are bracketed on a grid and refined by bisection, and residues
/// follow from `N(s₀)/D′(s₀)`.  Poles are returned up to `count` or below
/// `omega_max`, whichever is reached first.
pub fn foster_poles(c: f64, l: f64, d: f64, end: FarEnd, count: usize, omega_max: f64) -> Result<FosterForm> {
    if !(c > 0.0 && l > 0.0 && d >= 0.0) {
        return Err(Error::schema("line", "c and l must be positive and the length nonnegative"));
    }
    let z0 = (l / c).sqrt();
    let tau = d * (l * c).sqrt();
    let c0 = match end {
        FarEnd::Open => Some(c * d),
        FarEnd::Short => None,
    };
    if tau == 0.0 {
        return Ok(FosterForm { c0, poles: Vec::new() });
    }
    // Real-valued denominator on s = iω (up to a constant factor i).
    let den = |w: f64| match end {
        FarEnd::Open => (w * tau).sin(),
        FarEnd::Short => (w * tau).cos(),
    };
    let step = 0.25 * PI / tau;
    let mut poles = Vec::new();
    let mut w0 = step * 1e-3;
    let mut f0 = den(w0);
    while poles.len() < count {
        let w1 = w0 + step;
        if w1 > omega_max {
            break;
        }
        let f1 = den(w1);
        if f0 == 0.0 || f0.signum() != f1.signum() {
            let (mut lo, mut hi) = (w0, w1);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if den(lo).signum() == den(mid).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 4.0 * f64::EPSILON * hi {
                    break;
                }
            }
            let w = 0.5 * (lo + hi);
            if w <= omega_max {
                // N(s₀)/D′(s₀) with s₀ = iω: cosh/(τ cosh) or sinh/(τ sinh).
                let residue = z0 / tau;
                let cn = 1.0 / (2.0 * residue);
                poles.push(FosterPole { omega: w, residue, c: cn, l: 1.0 / (w * w * cn) });
            }
        }
        w0 = w1;
        f0 = f1;
    }
    Ok(FosterForm { c0, poles })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(a0: f64, b0: f64, delta: f64, d: f64, end: Termination) -> FiniteLines {
        FiniteLines::new(
            DMatrix::from_element(1, 1, a0),
            DMatrix::from_element(1, 1, 1.0 / b0),
            DVector::from_element(1, delta),
            DVector::from_element(1, d),
            vec![end],
        )
        .unwrap()
    }

    #[test]
    fn weak_boundary_open_line_approaches_half_wave_ladder() {
        // Tiny A and huge B: the x = 0 end is effectively open, apart from
        // the slow plasma-like mode of the whole line against B, at
        // Ω ≈ 1/√(b₀ d).
        let lines = single(1e-9, 1e9, 1.0, 1.0, Termination::Open);
        let w = lines.eigenfrequencies(6, 1e-14).unwrap();
        assert!((w[0] * 1e9f64.sqrt() - 1.0).abs() < 1e-6, "{}", w[0]);
        for (n, w) in w[1..].iter().enumerate() {
            assert!((w - (n + 1) as f64 * PI).abs() < 1e-6, "{n}: {w}");
        }
    }

    #[test]
    fn modes_are_normalized_and_dual() {
        let lines = FiniteLines::new(
            DMatrix::from_row_slice(2, 2, &[0.3, 0.05, 0.05, 0.2]),
            DMatrix::from_row_slice(2, 2, &[2.0, -0.4, -0.4, 1.5]),
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![1.0, 0.7]),
            vec![Termination::Capacitive(0.15), Termination::Short],
        )
        .unwrap();
        let f = lines.eigenfrequencies(12, 1e-15).unwrap();
        let modes = lines.modes(&f).unwrap();
        for m in &modes {
            assert!((lines.norm_by_quadrature(m, 64) - 1.0).abs() < 1e-10);
            // Boundary rows at x = 0 hold for the normalized mode.
            let du0 = DVector::from_fn(2, |i, _| lines.delta[i] * m.du(i, 0.0));
            let r = -&du0 + &lines.b_inv * &m.u0 - &lines.a * &m.u0 * (m.omega * m.omega);
            assert!(r.amax() < 1e-8 * (1.0 + m.omega * m.omega), "{}", r.amax());
            assert!(m.ud[1].abs() < 1e-12);
            assert!((m.vd[0] + 0.15 * m.omega * m.ud[0]).abs() < 1e-10 * m.omega.max(1.0));
        }
    }

    #[test]
    fn foster_ladders() {
        let (c, l, d): (f64, f64, f64) = (2.0, 0.5, 3.0);
        let tau = d * (l * c).sqrt();
        let open = foster_poles(c, l, d, FarEnd::Open, 6, f64::INFINITY).unwrap();
        assert_eq!(open.c0, Some(6.0));
        for (n, p) in open.poles.iter().enumerate() {
            assert!((p.omega - (n + 1) as f64 * PI / tau).abs() < 1e-12 * p.omega);
        }
        let short = foster_poles(c, l, d, FarEnd::Short, 6, f64::INFINITY).unwrap();
        assert!(short.c0.is_none());
        for (n, p) in short.poles.iter().enumerate() {
            assert!((p.omega - (2 * n + 1) as f64 * PI / (2.0 * tau)).abs() < 1e-12 * p.omega);
        }
        let lumped = foster_poles(c, l, 0.0, FarEnd::Open, 6, 1e3).unwrap();
        assert!(lumped.poles.is_empty() && lumped.c0 == Some(0.0));
    }
}
