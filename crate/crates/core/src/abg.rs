//! Semi-infinite transmission lines meeting at a capacitive (A), inductive
//! (B) and gyrative (G) boundary.
//!
//! Fields on `N` lines are written `W = (U, V)(x)` with `U` the flux-like and
//! `V` the charge-like components, in rescaled units where the line
//! capacitance is one and `Δ` holds the squared propagation velocities.  The
//! single-excitation operator acts as `−Δ W''` in the bulk with the
//! eigenvalue-dependent boundary rows
//!
//! ```text
//! −Δ U′ + B⁻¹ U + G V′ = Ω² A U
//!              −B⁻¹ V′ = Ω² (V − A V′ − G U)        at x = 0.
//! ```
//!
//! In every eigenspace `Ω²` the solutions are `c cos(kx) + s sin(kx)` with
//! `k_i = Ω/√Δ_i`.  With `Ẽ⁻¹/Ω = (B̃⁻¹ − Ω² Ã)/Ω` (tilde = conjugated by
//! `Δ^{−1/2}`) the boundary rows reduce to a symmetric `2N × 2N` matrix
//! `M_N = [[M, N], [−N, M]]`, whose eigenvalues come in degenerate pairs
//! related by `(e, r) ↦ (−r, e)`.  Each pair yields a dual couple of modes
//! `W^F`, `W^G` with `𝒯 W^F = iΩ W^G`, normalized to `δ(Ω − Ω′)`.
//!
//! `Ẽ` is never inverted, so frequencies where `B̃⁻¹ − Ω²Ã` is singular need
//! no special treatment.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{geometric_grid, integrate_log_panels, par_map};

/// Boundary data of `N` semi-infinite lines, in rescaled units.
#[derive(Clone, Debug, Serialize)]
pub struct BoundarySpec {
    /// Rescaled capacitance matrix `c^{−1/2} C c^{−1/2}` (symmetric positive definite).
    pub a: DMatrix<f64>,
    /// Rescaled inductance matrix `c^{1/2} L c^{1/2}` (symmetric positive definite).
    pub b: DMatrix<f64>,
    /// Rescaled gyration matrix `c^{−1/2} Y c^{−1/2}` (skew).
    pub g: DMatrix<f64>,
    /// Squared velocities, the diagonal of `Δ`.
    pub delta: DVector<f64>,
}

fn check_square(m: &DMatrix<f64>, n: usize, name: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::schema(name, format!("expected {n}×{n} matrix")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::schema(name, "non-finite entry"));
    }
    Ok(())
}

impl BoundarySpec {
    /// Validates and stores boundary data.  `A`, `B` must be symmetric
    /// positive definite and `G` skew (asymmetries up to `1e−12` relative
    /// are projected away); `Δ` must be positive.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, g: DMatrix<f64>, delta: DVector<f64>) -> Result<Self> {
        let n = delta.len();
        if n == 0 {
            return Err(Error::schema("delta", "no lines"));
        }
        check_square(&a, n, "A")?;
        check_square(&b, n, "B")?;
        check_square(&g, n, "G")?;
        if delta.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::schema("delta", "squared velocities must be positive"));
        }
        let sym = |m: &DMatrix<f64>, name: &str| -> Result<DMatrix<f64>> {
            let scale = m.amax().max(f64::MIN_POSITIVE);
            if (m - m.transpose()).amax() > 1e-12 * scale {
                return Err(Error::schema(name, "matrix is not symmetric"));
            }
            let s = (m + m.transpose()) * 0.5;
            if s.clone().cholesky().is_none() {
                return Err(Error::schema(name, "matrix is not positive definite"));
            }
            Ok(s)
        };
        let a = sym(&a, "A")?;
        let b = sym(&b, "B")?;
        let scale = g.amax().max(f64::MIN_POSITIVE);
        if (&g + g.transpose()).amax() > 1e-12 * scale {
            return Err(Error::schema("G", "gyration matrix is not skew-symmetric"));
        }
        let g = (&g - g.transpose()) * 0.5;
        Ok(BoundarySpec { a, b, g, delta })
    }

    /// One line with scalar boundary capacitance `a0` and inductance `b0`.
    pub fn single(a0: f64, b0: f64, delta: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, a0),
            DMatrix::from_element(1, 1, b0),
            DMatrix::zeros(1, 1),
            DVector::from_element(1, delta),
        )
    }

    /// Number of lines.
    /// Seeded random boundary: `A`, `B` = `XXᵀ + 0.3·1` with entries of `X`
    /// uniform in `[−1, 1]`, `G = Y − Yᵀ` with `Y` uniform in `[−1.5, 1.5]`,
    /// and `Δ_i` uniform in `[0.4, 2.5]`.
    pub fn random(n: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let spd = |rng: &mut rand_chacha::ChaCha8Rng| {
            let x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            &x * x.transpose() + DMatrix::identity(n, n) * 0.3
        };
        let a = spd(&mut rng);
        let b = spd(&mut rng);
        let x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.5..1.5));
        let g = &x - x.transpose();
        let d = DVector::from_fn(n, |_, _| rng.gen_range(0.4..2.5));
        BoundarySpec::new(a, b, g, d).expect("random boundary is valid by construction")
    }

    pub fn n(&self) -> usize {
        self.delta.len()
    }

    /// Capacitive and inductive cutoff frequencies: inverse eigenvalues of
    /// `Δ^{−1/4} A Δ^{−1/4}` and of `Δ^{1/4} B Δ^{1/4}`.  For one line these
    /// are `√Δ/a₀` and `1/(b₀√Δ)`.
    pub fn cutoffs(&self) -> (Vec<f64>, Vec<f64>) {
        let q = self.delta.map(|d| d.powf(0.25));
        let n = self.n();
        let mut sa = self.a.clone();
        let mut sb = self.b.clone();
        for i in 0..n {
            for j in 0..n {
                sa[(i, j)] /= q[i] * q[j];
                sb[(i, j)] *= q[i] * q[j];
            }
        }
        let inv = |m: DMatrix<f64>| -> Vec<f64> {
            let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().map(|x| 1.0 / x).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        };
        (inv(sa), inv(sb))
    }

    /// Smallest and largest cutoff frequency.
    pub fn cutoff_range(&self) -> (f64, f64) {
        let (a, b) = self.cutoffs();
        let all = a.iter().chain(&b);
        let lo = all.clone().cloned().fold(f64::INFINITY, f64::min);
        let hi = all.cloned().fold(0.0, f64::max);
        (lo, hi)
    }
}

/// Ω-grid settings for spectral sweeps and quadratures.
#[derive(Clone, Debug, Serialize)]
pub struct OmegaGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

impl OmegaGrid {
    /// `Ω_min = 10⁻³·min cutoff`, `Ω_max = 10³·max cutoff`, 4096 points.
    pub fn default_for(spec: &BoundarySpec) -> Self {
        let (lo, hi) = spec.cutoff_range();
        OmegaGrid { omega_min: 1e-3 * lo, omega_max: 1e3 * hi, points: 4096 }
    }

    /// Geometric grid points.
    pub fn nodes(&self) -> Vec<f64> {
        geometric_grid(self.omega_min, self.omega_max, self.points)
    }
}

/// A field `c ∘ cos(κx) + s ∘ sin(κx)` on the `2N` components, with
/// `κ = (k, k)`.
#[derive(Clone, Debug, Serialize)]
pub struct ModeFunction {
    pub cos: DVector<f64>,
    pub sin: DVector<f64>,
    kappa: DVector<f64>,
}

impl ModeFunction {
    /// Field value at `x`.
    pub fn value(&self, x: f64) -> DVector<f64> {
        DVector::from_fn(self.cos.len(), |i, _| {
            let t = self.kappa[i] * x;
            self.cos[i] * t.cos() + self.sin[i] * t.sin()
        })
    }

    /// First derivative at `x`.
    pub fn derivative(&self, x: f64) -> DVector<f64> {
        DVector::from_fn(self.cos.len(), |i, _| {
            let k = self.kappa[i];
            let t = k * x;
            k * (self.sin[i] * t.cos() - self.cos[i] * t.sin())
        })
    }

    /// Second derivative at `x`.
    pub fn second_derivative(&self, x: f64) -> DVector<f64> {
        let v = self.value(x);
        DVector::from_fn(v.len(), |i, _| -self.kappa[i] * self.kappa[i] * v[i])
    }

    /// `U(0)`, the flux-like boundary value.
    pub fn u0(&self) -> DVector<f64> {
        let n = self.cos.len() / 2;
        self.cos.rows(0, n).into_owned()
    }

    /// `V(0)`.
    pub fn v0(&self) -> DVector<f64> {
        let n = self.cos.len() / 2;
        self.cos.rows(n, n).into_owned()
    }

    /// `U′(0)`.
    pub fn du0(&self) -> DVector<f64> {
        let n = self.cos.len() / 2;
        self.sin.rows(0, n).component_mul(&self.kappa.rows(0, n))
    }

    /// `V′(0)`.
    pub fn dv0(&self) -> DVector<f64> {
        let n = self.cos.len() / 2;
        self.sin.rows(n, n).component_mul(&self.kappa.rows(n, n))
    }
}

/// One degenerate eigenpair of `M_N` and its dual modes.
#[derive(Clone, Debug, Serialize)]
pub struct ModePair {
    /// Eigenvalue `m_λ` (Rayleigh quotient of the chosen vector).
    pub m: f64,
    pub e: DVector<f64>,
    pub r: DVector<f64>,
    pub f: ModeFunction,
    pub g: ModeFunction,
}

/// All modes of one eigenspace `Ω²`.
#[derive(Clone, Debug, Serialize)]
pub struct ModeSet {
    pub omega: f64,
    /// Sorted eigenvalues of `M_N` (length `2N`).
    pub eigenvalues: Vec<f64>,
    pub pairs: Vec<ModePair>,
}

impl ModeSet {
    /// Largest relative splitting within nominally degenerate pairs of the
    /// sorted spectrum of `M_N`.
    pub fn degeneracy_residual(&self) -> f64 {
        let scale = self.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        self.eigenvalues.chunks(2).map(|c| (c[1] - c[0]).abs()).fold(0.0, f64::max) / scale
    }

    /// All `2N` mode functions, ordered `F₁, G₁, F₂, G₂, …`.
    pub fn functions(&self) -> Vec<&ModeFunction> {
        self.pairs.iter().flat_map(|p| [&p.f, &p.g]).collect()
    }

    /// `Σ_λ U^F U^Fᵀ + U^G U^Gᵀ` at `x = 0`.
    pub fn boundary_gram(&self) -> DMatrix<f64> {
        let n = self.pairs.first().map_or(0, |p| p.e.len());
        let mut s = DMatrix::zeros(n, n);
        for f in self.functions() {
            let u = f.u0();
            s += &u * u.transpose();
        }
        s
    }

    /// `Σ_λ (U^G U^Fᵀ − U^F U^Gᵀ)/Ω` at `x = 0`, the integrand of `𝖴`.
    pub fn u_integrand(&self) -> DMatrix<f64> {
        let n = self.pairs.first().map_or(0, |p| p.e.len());
        let mut s = DMatrix::zeros(n, n);
        for p in &self.pairs {
            let (uf, ug) = (p.f.u0(), p.g.u0());
            s += &ug * uf.transpose() - &uf * ug.transpose();
        }
        s / self.omega
    }
}

/// Precomputed rescaled matrices for repeated solves.
#[derive(Clone, Debug)]
pub struct AbgSolver {
    pub spec: BoundarySpec,
    sqrt_delta: DVector<f64>,
    a_t: DMatrix<f64>,
    b_inv_t: DMatrix<f64>,
    g_t: DMatrix<f64>,
    b_inv: DMatrix<f64>,
    a_inv: DMatrix<f64>,
}

/// `D X D` for diagonal `D = diag(d)`.
fn conj_diag(x: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| d[i] * x[(i, j)] * d[j])
}

/// `diag(d) X`.
fn left_diag(d: &DVector<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| d[i] * x[(i, j)])
}

impl AbgSolver {
    pub fn new(spec: BoundarySpec) -> Result<Self> {
        let sqrt_delta = spec.delta.map(f64::sqrt);
        let inv_sqrt = sqrt_delta.map(|v| 1.0 / v);
        let b_inv = spec.b.clone().try_inverse().ok_or_else(|| Error::Numerical("B is singular".into()))?;
        let a_inv = spec.a.clone().try_inverse().ok_or_else(|| Error::Numerical("A is singular".into()))?;
        Ok(AbgSolver {
            a_t: conj_diag(&spec.a, &inv_sqrt),
            b_inv_t: conj_diag(&b_inv, &inv_sqrt),
            g_t: conj_diag(&spec.g, &inv_sqrt),
            b_inv,
            a_inv,
            sqrt_delta,
            spec,
        })
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    /// `B⁻¹`.
    pub fn b_inv(&self) -> &DMatrix<f64> {
        &self.b_inv
    }

    /// `A⁻¹`.
    pub fn a_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    /// Wavenumbers `k_i = Ω/√Δ_i`.
    pub fn wavenumbers(&self, omega: f64) -> DVector<f64> {
        self.sqrt_delta.map(|s| omega / s)
    }

    /// `Ẽ⁻¹/Ω = (B̃⁻¹ − Ω² Ã)/Ω`.
    fn e_hat(&self, omega: f64) -> DMatrix<f64> {
        (&self.b_inv_t - &self.a_t * (omega * omega)) / omega
    }

    /// The symmetric matrix `M_N = [[M, N], [−N, M]]` with
    /// `M = Δ^{−1/2} + Ê Δ^{1/2} Ê + G̃ᵀ Δ^{1/2} G̃` and
    /// `N = Ê Δ^{1/2} G̃ − G̃ᵀ Δ^{1/2} Ê`.
    pub fn assemble_mn(&self, omega: f64) -> DMatrix<f64> {
        let n = self.n();
        let eh = self.e_hat(omega);
        let dh_eh = left_diag(&self.sqrt_delta, &eh);
        let dh_g = left_diag(&self.sqrt_delta, &self.g_t);
        let mut m = &eh * &dh_eh + self.g_t.transpose() * &dh_g;
        for i in 0..n {
            m[(i, i)] += 1.0 / self.sqrt_delta[i];
        }
        let nn = &eh * &dh_g - self.g_t.transpose() * &dh_eh;
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        // Symmetrize explicitly so M_N = M_Nᵀ holds bit-for-bit.
        let m = (&m + m.transpose()) * 0.5;
        let nn = (&nn - nn.transpose()) * 0.5;
        out.view_mut((0, 0), (n, n)).copy_from(&m);
        out.view_mut((n, n), (n, n)).copy_from(&m);
        out.view_mut((0, n), (n, n)).copy_from(&nn);
        out.view_mut((n, 0), (n, n)).copy_from(&(-&nn));
        out
    }

    /// Solves the eigenspace `Ω²`: diagonalizes `M_N`, groups eigenvectors
    /// into `(v, Jv)` pairs by projecting each eigenvector (in ascending
    /// eigenvalue order) off the span already chosen, and builds the
    /// normalized dual modes.
    pub fn modes(&self, omega: f64) -> Result<ModeSet> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::Numerical(format!("invalid frequency {omega}")));
        }
        let n = self.n();
        let mn = self.assemble_mn(omega);
        let eig = SymmetricEigen::new(mn.clone());
        let mut order: Vec<usize> = (0..2 * n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

        let jmap = |v: &DVector<f64>| -> DVector<f64> {
            let mut out = DVector::zeros(2 * n);
            for i in 0..n {
                out[i] = -v[n + i];
                out[n + i] = v[i];
            }
            out
        };
        let mut chosen: Vec<DVector<f64>> = Vec::new();
        let mut pairs = Vec::new();
        for &i in &order {
            if pairs.len() == n {
                break;
            }
            let mut v = eig.eigenvectors.column(i).into_owned();
            for c in &chosen {
                v -= c * c.dot(&v);
            }
            if v.norm_squared() <= 0.5 {
                continue;
            }
            v /= v.norm();
            let jv = jmap(&v);
            let m = v.dot(&(&mn * &v));
            pairs.push(self.pair_from(omega, m, &v));
            chosen.push(v);
            chosen.push(jv);
        }
        if pairs.len() != n {
            return Err(Error::Numerical(format!("could not pair the spectrum of M_N at Ω = {omega}")));
        }
        Ok(ModeSet { omega, eigenvalues, pairs })
    }

    /// Builds the normalized `F`/`G` modes from an eigenvector `(e, r)`.
    fn pair_from(&self, omega: f64, m: f64, v: &DVector<f64>) -> ModePair {
        let n = self.n();
        let e = v.rows(0, n).into_owned();
        let r = v.rows(n, n).into_owned();
        let eh = self.e_hat(omega);
        let s = (2.0 / (PI * m)).sqrt();
        let dh = &self.sqrt_delta;
        let dmh = dh.map(|x| 1.0 / x);
        let ge = &self.g_t * &e;
        let gr = &self.g_t * &r;
        let ee = &eh * &e;
        let er = &eh * &r;
        let stack = |top: DVector<f64>, bottom: DVector<f64>| -> DVector<f64> {
            let mut out = DVector::zeros(2 * n);
            out.rows_mut(0, n).copy_from(&top);
            out.rows_mut(n, n).copy_from(&bottom);
            out * s
        };
        let k = self.wavenumbers(omega);
        let kappa = DVector::from_fn(2 * n, |i, _| k[i % n]);
        let f = ModeFunction {
            cos: stack(dmh.component_mul(&e), dh.component_mul(&(&ge - &er))),
            sin: stack(&gr + &ee, r.clone()),
            kappa: kappa.clone(),
        };
        let g = ModeFunction {
            cos: stack(-dmh.component_mul(&r), -dh.component_mul(&(&gr + &ee))),
            sin: stack(&ge - &er, e.clone()),
            kappa,
        };
        ModePair { m, e, r, f, g }
    }

    /// Closed form of `Σ_λ (U^F U^Fᵀ + U^G U^Gᵀ)(0)`:
    /// `(2/π) Δ^{−1/2} [M_N⁻¹]₁₁ Δ^{−1/2}`.
    pub fn boundary_gram_closed(&self, omega: f64) -> Result<DMatrix<f64>> {
        Ok(self.inverse_blocks(omega)?.0)
    }

    /// Closed form of the `𝖴` integrand, `(2/π) Δ^{−1/2} [M_N⁻¹]₁₂ Δ^{−1/2} / Ω`.
    pub fn u_integrand_closed(&self, omega: f64) -> Result<DMatrix<f64>> {
        Ok(self.inverse_blocks(omega)?.1 / omega)
    }

    /// `(2/π) Δ^{−1/2} [M_N⁻¹]_{11, 12} Δ^{−1/2}`.
    fn inverse_blocks(&self, omega: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.n();
        let inv = self
            .assemble_mn(omega)
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("M_N not positive definite at Ω = {omega}")))?
            .inverse();
        let dmh = self.sqrt_delta.map(|x| 1.0 / x);
        let s11 = conj_diag(&inv.view((0, 0), (n, n)).into_owned(), &dmh) * (2.0 / PI);
        let s12 = conj_diag(&inv.view((0, n), (n, n)).into_owned(), &dmh) * (2.0 / PI);
        Ok(((&s11 + s11.transpose()) * 0.5, (&s12 - s12.transpose()) * 0.5))
    }

    /// Largest residual of the two boundary rows at `x = 0` over all modes,
    /// relative to the size of the terms involved.
    pub fn boundary_residual(&self, set: &ModeSet) -> f64 {
        let (a, g, b_inv) = (&self.spec.a, &self.spec.g, &self.b_inv);
        let w2 = set.omega * set.omega;
        let mut worst: f64 = 0.0;
        for f in set.functions() {
            let (u, v, du, dv) = (f.u0(), f.v0(), f.du0(), f.dv0());
            let ddu = DVector::from_fn(u.len(), |i, _| self.spec.delta[i] * du[i]);
            let r1 = -&ddu + b_inv * &u + g * &dv - a * &u * w2;
            let r2 = -(b_inv * &dv) - (&v - a * &dv - g * &u) * w2;
            let scale = [ddu.amax(), (b_inv * &u).amax(), (a * &u).amax() * w2, v.amax() * w2, dv.amax() * w2]
                .into_iter()
                .fold(f64::MIN_POSITIVE, f64::max);
            worst = worst.max(r1.amax().max(r2.amax()) / scale);
        }
        worst
    }

    /// Analytic residual of the duality relations for every pair:
    /// bulk `V^F′ = −Ω U^G`, `Δ U^F′ = −Ω V^G`, the reverse relations
    /// `V^G′ = Ω U^F`, `Δ U^G′ = Ω V^F`, and the boundary row
    /// `−B⁻¹ U^F(0) = Ω (V^G − A V^G′ − G U^G)(0)`.
    pub fn duality_residual(&self, set: &ModeSet) -> f64 {
        let n = self.n();
        let w = set.omega;
        let d = &self.spec.delta;
        let mut worst: f64 = 0.0;
        // Sample at a few points; the relations are trigonometric identities
        // coefficient by coefficient, so three generic points suffice.
        let xs = [0.0, 0.37 / self.wavenumbers(w).amax(), 2.1 / self.wavenumbers(w).amax()];
        for p in &set.pairs {
            let scale = p.f.cos.amax().max(p.f.sin.amax()).max(p.g.cos.amax()).max(p.g.sin.amax()) * w;
            for &x in &xs {
                let (f, df, g, dg) = (p.f.value(x), p.f.derivative(x), p.g.value(x), p.g.derivative(x));
                for i in 0..n {
                    let res = [
                        df[n + i] + w * g[i],
                        d[i] * df[i] + w * g[n + i],
                        dg[n + i] - w * f[i],
                        d[i] * dg[i] - w * f[n + i],
                    ];
                    worst = res.iter().fold(worst, |acc, r| acc.max(r.abs() / scale));
                }
            }
            let bd = -(&self.b_inv * p.f.u0()) - (p.g.v0() - &self.spec.a * p.g.dv0() - &self.spec.g * p.g.u0()) * w;
            worst = worst.max(bd.amax() / scale.max(f64::MIN_POSITIVE));
        }
        worst
    }

    /// `2N × 2N` matrix of Ω-independent inner products
    /// `(π/2) Σ_i w_i (c_i c′_i + s_i s′_i)` with weights `√Δ_i` on the
    /// `U` rows and `1/√Δ_i` on the `V` rows; the coefficient of
    /// `δ(Ω − Ω′)` in `⟨W^a_Ω, W^b_{Ω′}⟩`.
    pub fn gram_matrix(&self, set: &ModeSet) -> DMatrix<f64> {
        let n = self.n();
        let wt = DVector::from_fn(2 * n, |i, _| {
            let s = self.sqrt_delta[i % n];
            0.5 * PI * if i < n { s } else { 1.0 / s }
        });
        let fs = set.functions();
        DMatrix::from_fn(fs.len(), fs.len(), |i, j| {
            let (a, b) = (fs[i], fs[j]);
            (0..2 * n).map(|c| wt[c] * (a.cos[c] * b.cos[c] + a.sin[c] * b.sin[c])).sum()
        })
    }

    /// Residual of `𝒯 W^F = iΩ W^G` with derivatives replaced by
    /// second-order finite differences on `x_j = j h`, `j = 0..=n_steps`
    /// (central in the interior, one-sided second order at the ends).  The
    /// boundary row uses the discrete `V^G′(0)`.  Relative to `Ω·max|W^G|`.
    pub fn tau_residual_discrete(&self, set: &ModeSet, h: f64, n_steps: usize) -> f64 {
        let n = self.n();
        let w = set.omega;
        let d = &self.spec.delta;
        let mut worst: f64 = 0.0;
        for p in &set.pairs {
            let f: Vec<DVector<f64>> = (0..=n_steps).map(|j| p.f.value(j as f64 * h)).collect();
            let g: Vec<DVector<f64>> = (0..=n_steps).map(|j| p.g.value(j as f64 * h)).collect();
            let scale = g.iter().map(|v| v.amax()).fold(f64::MIN_POSITIVE, f64::max) * w;
            let df = fd_derivative(&f, h);
            let dg = fd_derivative(&g, h);
            for j in 0..=n_steps {
                for i in 0..n {
                    let r1 = df[j][n + i] + w * g[j][i];
                    let r2 = d[i] * df[j][i] + w * g[j][n + i];
                    worst = worst.max(r1.abs().max(r2.abs()) / scale);
                }
            }
            let u0 = g[0].rows(0, n).into_owned();
            let v0 = g[0].rows(n, n).into_owned();
            let dv0 = dg[0].rows(n, n).into_owned();
            let bd = -(&self.b_inv * f[0].rows(0, n)) - (v0 - &self.spec.a * dv0 - &self.spec.g * u0) * w;
            worst = worst.max(bd.amax() / scale);
        }
        worst
    }

    /// Discretized quadratic form `⟨W, 𝓛 W⟩` of a real field sampled on
    /// `x_j = j h` (decaying to zero at the far end): bulk term
    /// `∫ Wᵀ Σ (−Δ W″)` by the trapezoidal rule with second-order
    /// stencils, plus the boundary pairing `w₁ᵀ A⁻¹ w̃₁ + w₂ᵀ B w̃₂`.
    pub fn quadratic_form_discrete(&self, samples: &[DVector<f64>], h: f64) -> f64 {
        let n = self.n();
        let d = &self.spec.delta;
        let dw = fd_derivative(samples, h);
        let ddw = fd_derivative(&dw, h);
        let last = samples.len() - 1;
        let mut bulk = 0.0;
        for (j, (w, dd)) in samples.iter().zip(&ddw).enumerate() {
            // Σ = diag(1, Δ⁻¹) and 𝓛 = −Δ ∂² give −Uᵀ Δ U″ − Vᵀ V″.
            let mut v = 0.0;
            for i in 0..n {
                v -= w[i] * d[i] * dd[i] + w[n + i] * dd[n + i];
            }
            let wt = if j == 0 || j == last { 0.5 } else { 1.0 };
            bulk += wt * h * v;
        }
        let u = samples[0].rows(0, n).into_owned();
        let v = samples[0].rows(n, n).into_owned();
        let du = dw[0].rows(0, n).into_owned();
        let dv = dw[0].rows(n, n).into_owned();
        let (a, b, g) = (&self.spec.a, &self.spec.b, &self.spec.g);
        let w1 = a * &u;
        let w2 = &v - a * &dv - g * &u;
        let lt1 = -DVector::from_fn(n, |i, _| d[i] * du[i]) + &self.b_inv * &u + g * &dv;
        let lt2 = -(&self.b_inv * &dv);
        bulk + w1.dot(&(&self.a_inv * lt1)) + w2.dot(&(b * lt2))
    }

    /// The energy form the quadratic form must equal after integration by
    /// parts: `∫ (U′ᵀ Δ U′ + V′ᵀ V′) + U₀ᵀ B⁻¹ U₀ + V₀′ᵀ A V₀′`.
    pub fn energy_form_discrete(&self, samples: &[DVector<f64>], h: f64) -> f64 {
        let n = self.n();
        let d = &self.spec.delta;
        let dw = fd_derivative(samples, h);
        let last = samples.len() - 1;
        let mut bulk = 0.0;
        for (j, dv) in dw.iter().enumerate() {
            let mut v = 0.0;
            for i in 0..n {
                v += d[i] * dv[i] * dv[i] + dv[n + i] * dv[n + i];
            }
            let wt = if j == 0 || j == last { 0.5 } else { 1.0 };
            bulk += wt * h * v;
        }
        let u0 = samples[0].rows(0, n).into_owned();
        let dv0 = dw[0].rows(n, n).into_owned();
        bulk + u0.dot(&(&self.b_inv * &u0)) + dv0.dot(&(&self.spec.a * &dv0))
    }

    /// Evaluates `S(Ω) = Σ_λ U U ᵀ(0)` on `Ω` values in parallel.
    pub fn sweep(&self, omegas: &[f64], threads: usize) -> Result<Vec<ModeSet>> {
        par_map(omegas.len(), threads, |i| self.modes(omegas[i])).into_iter().collect()
    }
}

/// Second-order finite-difference derivative of a sampled vector field.
pub fn fd_derivative(f: &[DVector<f64>], h: f64) -> Vec<DVector<f64>> {
    let n = f.len();
    assert!(n >= 3, "need at least three samples");
    (0..n)
        .map(|j| {
            if j == 0 {
                (&f[0] * -3.0 + &f[1] * 4.0 - &f[2]) / (2.0 * h)
            } else if j == n - 1 {
                (&f[n - 1] * 3.0 - &f[n - 2] * 4.0 + &f[n - 3]) / (2.0 * h)
            } else {
                (&f[j + 1] - &f[j - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Results of integrating boundary quantities over Ω.
#[derive(Clone, Debug, Serialize)]
pub struct SumRuleReport {
    pub omega_min: f64,
    pub omega_max: f64,
    /// `∫ S dΩ` over the grid only.
    pub integral_a: DMatrix<f64>,
    /// Grid integral plus low- and high-frequency tail estimates.
    pub integral_a_corrected: DMatrix<f64>,
    /// `‖∫ S − A⁻¹‖_F / ‖A⁻¹‖_F` without tails.
    pub residual_a_raw: f64,
    /// Same with tails.
    pub residual_a: f64,
    /// `∫ S/Ω² dΩ` with tails.
    pub integral_b_corrected: DMatrix<f64>,
    /// `‖∫ S/Ω² − B‖_F / ‖B‖_F`.
    pub residual_b: f64,
}

/// Integration settings: panel breakpoints form a geometric grid and each
/// panel uses a Gauss–Legendre rule in `ln Ω`.
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub grid: OmegaGrid,
    pub order: usize,
    pub threads: usize,
}

impl Quadrature {
    pub fn new(grid: OmegaGrid) -> Self {
        Quadrature { grid, order: 8, threads: 1 }
    }
}

fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unflatten(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

fn rel_frobenius(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (x - y).norm() / y.norm()
}

impl AbgSolver {
    /// High-frequency asymptote `S(Ω) ≈ S_∞/Ω²` with
    /// `S_∞ = (2/π) A⁻¹ Δ^{1/2} A⁻¹`.
    pub fn s_infinity(&self) -> DMatrix<f64> {
        &self.a_inv * left_diag(&self.sqrt_delta, &self.a_inv) * (2.0 / PI)
    }

    /// Checks the sum rules `∫ S dΩ = A⁻¹` and `∫ S/Ω² dΩ = B`.
    ///
    /// Tails: above `Ω_max` the asymptote gives `S_∞/Ω_max` and
    /// `S_∞/(3Ω_max³)`; below `Ω_min`, `S ∝ Ω²` gives `S(Ω_min)Ω_min/3`
    /// and `S(Ω_min)/Ω_min` (the `Ω⁻²`-weighted integrand is flat there).
    pub fn sum_rules(&self, q: &Quadrature) -> Result<SumRuleReport> {
        let n = self.n();
        let nodes = q.grid.nodes();
        let len = 2 * n * n;
        let failed = std::sync::Mutex::new(None);
        let v = integrate_log_panels(
            |w| match self.boundary_gram_closed(w) {
                Ok(s) => {
                    let mut out = DVector::zeros(len);
                    out.rows_mut(0, n * n).copy_from(&flatten(&s));
                    out.rows_mut(n * n, n * n).copy_from(&flatten(&(s / (w * w))));
                    out
                }
                Err(e) => {
                    *failed.lock().unwrap() = Some(e);
                    DVector::zeros(len)
                }
            },
            &nodes,
            q.order,
            len,
            q.threads,
        );
        if let Some(e) = failed.into_inner().unwrap() {
            return Err(e);
        }
        let ia = unflatten(&v.rows(0, n * n).into_owned(), n);
        let ib = unflatten(&v.rows(n * n, n * n).into_owned(), n);
        let (lo, hi) = (q.grid.omega_min, q.grid.omega_max);
        let s_lo = self.boundary_gram_closed(lo)?;
        let s_inf = self.s_infinity();
        let ia_c = &ia + &s_lo * (lo / 3.0) + &s_inf / hi;
        let ib_c = &ib + &s_lo / lo + &s_inf / (3.0 * hi * hi * hi);
        Ok(SumRuleReport {
            omega_min: lo,
            omega_max: hi,
            residual_a_raw: rel_frobenius(&ia, &self.a_inv),
            residual_a: rel_frobenius(&ia_c, &self.a_inv),
            residual_b: rel_frobenius(&ib_c, &self.spec.b),
            integral_a: ia,
            integral_a_corrected: ia_c,
            integral_b_corrected: ib_c,
        })
    }

    /// `𝖴 = ∫ dΩ Σ_λ (U^G U^Fᵀ − U^F U^Gᵀ)(0)/Ω` by log-panel quadrature.
    /// Both tails decay (as `Ω` below and `Ω⁻³` above) and are neglected.
    pub fn u_matrix(&self, q: &Quadrature) -> Result<DMatrix<f64>> {
        let n = self.n();
        let v = integrate_log_panels(
            |w| flatten(&self.u_integrand_closed(w).unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN))),
            &q.grid.nodes(),
            q.order,
            n * n,
            q.threads,
        );
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("𝖴 integrand failed to evaluate".into()));
        }
        let u = unflatten(&v, n);
        Ok((&u - u.transpose()) * 0.5)
    }
}

/// Closed form of `U_Ω(0)²` for one line with boundary `a₀`, `b₀`:
/// `Δ^{−1/2}·2Ω² / (π (Ω² + Δ⁻¹ (a₀Ω² − 1/b₀)²))`.
pub fn single_line_u0_squared(a0: f64, b0: f64, delta: f64, omega: f64) -> f64 {
    let w2 = omega * omega;
    let t = a0 * w2 - 1.0 / b0;
    2.0 * w2 / (PI * delta.sqrt() * (w2 + t * t / delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    fn random_spec(n: usize, seed: u64) -> BoundarySpec {
        BoundarySpec::random(n, seed)
    }

    #[test]
    fn single_line_matches_closed_form() {
        let s = AbgSolver::new(BoundarySpec::single(0.7, 1.3, 2.0).unwrap()).unwrap();
        for w in [0.01, 0.3, 1.0, 1.7, 25.0] {
            let set = s.modes(w).unwrap();
            let got = set.boundary_gram()[(0, 0)];
            let exact = single_line_u0_squared(0.7, 1.3, 2.0, w);
            assert!((got / exact - 1.0).abs() < 1e-12, "{w}: {got} vs {exact}");
        }
    }

    #[test]
    fn cutoffs_single_line() {
        let spec = BoundarySpec::single(0.5, 2.0, 4.0).unwrap();
        let (a, b) = spec.cutoffs();
        assert!((a[0] - 4.0).abs() < 1e-14 && (b[0] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn random_three_line_modes_are_consistent() {
        let s = AbgSolver::new(random_spec(3, 11)).unwrap();
        for w in [0.05, 0.8, 3.0] {
            let set = s.modes(w).unwrap();
            assert!(set.degeneracy_residual() < 1e-12);
            assert!(s.boundary_residual(&set) < 1e-12, "bc {}", s.boundary_residual(&set));
            assert!(s.duality_residual(&set) < 1e-12, "dual {}", s.duality_residual(&set));
            let gram = s.gram_matrix(&set);
            assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-10);
            let closed = s.boundary_gram_closed(w).unwrap();
            assert!((set.boundary_gram() - &closed).amax() < 1e-12 * closed.amax());
            let uc = s.u_integrand_closed(w).unwrap();
            assert!((set.u_integrand() - &uc).amax() < 1e-12 * uc.amax().max(1e-300));
        }
    }

    #[test]
    fn reciprocal_diagonal_case_decouples() {
        let spec = BoundarySpec::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, 1.1])),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.3, 0.4])),
            DMatrix::zeros(2, 2),
            DVector::from_vec(vec![2.0, 0.5]),
        )
        .unwrap();
        let s = AbgSolver::new(spec).unwrap();
        let gram = s.boundary_gram_closed(0.9).unwrap();
        assert!((gram[(0, 0)] / single_line_u0_squared(0.7, 1.3, 2.0, 0.9) - 1.0).abs() < 1e-12);
        assert!((gram[(1, 1)] / single_line_u0_squared(1.1, 0.4, 0.5, 0.9) - 1.0).abs() < 1e-12);
        assert!(gram[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn sum_rules_hold_for_coupled_lines() {
        let s = AbgSolver::new(random_spec(2, 5)).unwrap();
        let (lo, hi) = s.spec.cutoff_range();
        let q = Quadrature::new(OmegaGrid { omega_min: 1e-3 * lo, omega_max: 1e3 * hi, points: 600 });
        let r = s.sum_rules(&q).unwrap();
        assert!(r.residual_a < 1e-5, "{r:?}");
        assert!(r.residual_b < 1e-5, "{r:?}");
    }

    #[test]
    fn discrete_quadratic_form_matches_energy() {
        let s = AbgSolver::new(random_spec(2, 9)).unwrap();
        let h = 1e-3;
        let samples: Vec<DVector<f64>> = (0..=8000)
            .map(|j| {
                let x = j as f64 * h;
                let e = (-x * x).exp();
                DVector::from_vec(vec![e * (1.0 + x), 0.3 * e, -0.5 * e * x, e * (0.2 - x)])
            })
            .collect();
        let q = s.quadratic_form_discrete(&samples, h);
        let e = s.energy_form_discrete(&samples, h);
        assert!(q > 0.0 && ((q - e) / e).abs() < 1e-4, "{q} vs {e}");
    }
}
