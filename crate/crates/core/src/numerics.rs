//! Small numerical toolkit shared by the spectral and bath modules:
//! Gauss–Legendre rules, composite quadrature on logarithmic panels,
//! Cauchy principal values, geometric grids, deterministic parallel maps and
//! least-squares slope fits.

use nalgebra::DVector;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
///
/// Nodes are found by Newton iteration on `P_n` from the Chebyshev-like
/// initial guesses; accurate to machine precision for `n ≤ 100`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "empty Gauss–Legendre rule");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n(z) and its derivative.
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// A fixed Gauss–Legendre rule mapped onto arbitrary intervals.
#[derive(Clone, Debug)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        GaussRule { nodes, weights }
    }

    /// `(x, w)` pairs of the rule on `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let m = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (m + h * x, h * w))
    }

    /// `∫_a^b f`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// `n` geometrically spaced points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2, "invalid geometric grid");
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { hi } else { lo * (r * i as f64).exp() }).collect()
}

/// Runs `f(0..n)` on up to `threads` scoped worker threads and returns the
/// results in index order, so downstream reductions are deterministic.
pub fn par_map<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = threads.max(1).min(n.max(1));
    if threads == 1 {
        return (0..n).map(&f).collect();
    }
    let chunk = n.div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| s.spawn(move || (t * chunk..((t + 1) * chunk).min(n)).map(f).collect::<Vec<T>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}

/// Pairwise (cascade) summation of equally sized vectors.
pub fn pairwise_sum(items: &[DVector<f64>], len: usize) -> DVector<f64> {
    match items.len() {
        0 => DVector::zeros(len),
        1 => items[0].clone(),
        n => pairwise_sum(&items[..n / 2], len) + pairwise_sum(&items[n / 2..], len),
    }
}

/// Pairwise summation of scalars.
pub fn pairwise_sum_f64(items: &[f64]) -> f64 {
    match items.len() {
        0 => 0.0,
        1 => items[0],
        n => pairwise_sum_f64(&items[..n / 2]) + pairwise_sum_f64(&items[n / 2..]),
    }
}

/// Composite Gauss–Legendre integral of a vector-valued function over the
/// panels `[grid[i], grid[i+1]]`, each mapped to `t = ln Ω` so that rules
/// resolve features uniformly on a logarithmic scale.
///
/// Panels are evaluated in parallel and combined by pairwise summation.
pub fn integrate_log_panels<F>(f: F, grid: &[f64], order: usize, len: usize, threads: usize) -> DVector<f64>
where
    F: Fn(f64) -> DVector<f64> + Sync,
{
    let rule = GaussRule::new(order);
    let parts = par_map(grid.len().saturating_sub(1), threads, |i| {
        let (a, b) = (grid[i].ln(), grid[i + 1].ln());
        let mut acc = DVector::zeros(len);
        for (t, w) in rule.on(a, b) {
            let x = t.exp();
            acc += f(x) * (w * x);
        }
        acc
    });
    pairwise_sum(&parts, len)
}

/// Cauchy principal value `P∫_a^b g(x)/(x − w) dx` for `a < w < b`.
///
/// Uses singularity subtraction: the smooth remainder
/// `(g(x) − g(w))/(x − w)` is integrated with Gauss–Legendre panels on a
/// geometric grid refined towards `w`, and the excised pole contributes
/// the analytic term `g(w)·ln((b − w)/(w − a))`.
pub fn principal_value<G: Fn(f64) -> f64>(g: G, w: f64, a: f64, b: f64, panels: usize) -> f64 {
    assert!(a < w && w < b, "pole must lie inside the interval");
    let gw = g(w);
    let rule = GaussRule::new(8);
    let smooth = |x: f64| (g(x) - gw) / (x - w);
    let mut total = gw * ((b - w) / (w - a)).ln();
    // Breakpoints clustered geometrically around w on both sides.
    for (lo_dist, hi_dist, sign) in [(0.0, w - a, -1.0), (0.0, b - w, 1.0)] {
        let first = (hi_dist * 1e-6).max(f64::MIN_POSITIVE);
        let mut pts = vec![lo_dist];
        pts.extend(geometric_grid(first, hi_dist, panels.max(2)));
        for p in pts.windows(2) {
            let (x0, x1) = (w + sign * p[0], w + sign * p[1]);
            let (lo, hi) = if x0 < x1 { (x0, x1) } else { (x1, x0) };
            total += rule.integrate(smooth, lo, hi);
        }
    }
    total
}

/// `∫_X^∞ f(x)/x² dx` through the substitution `u = 1/x`, which turns it
/// into the regular integral `∫_0^{1/X} f(1/u) du`.
pub fn tail_inverse_square<F: Fn(f64) -> f64>(f: F, x: f64, panels: usize) -> f64 {
    let rule = GaussRule::new(8);
    let top = 1.0 / x;
    let h = top / panels as f64;
    (0..panels).map(|i| rule.integrate(|u| f(1.0 / u), i as f64 * h, (i + 1) as f64 * h)).sum()
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    fit_slope(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 8, 16] {
            let rule = GaussRule::new(n);
            for p in 0..(2 * n) {
                let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
                let got = rule.integrate(|x| x.powi(p as i32), -1.0, 1.0);
                assert!((got - exact).abs() < 1e-13, "n={n} p={p}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn log_panels_integrate_lorentzian() {
        let grid = geometric_grid(1e-4, 1e4, 200);
        let v = integrate_log_panels(|x| DVector::from_element(1, 1.0 / (1.0 + x * x)), &grid, 6, 1, 3);
        let exact = 1e4f64.atan() - 1e-4f64.atan();
        assert!((v[0] - exact).abs() < 1e-12);
    }

    #[test]
    fn principal_value_of_constant_and_linear() {
        // P∫_0^2 1/(x−1) = 0, P∫_0^3 x/(x−1) = 3 + ln 2.
        assert!(principal_value(|_| 1.0, 1.0, 0.0, 2.0, 20).abs() < 1e-13);
        let v = principal_value(|x| x, 1.0, 0.0, 3.0, 20);
        assert!((v - (3.0 + 2f64.ln())).abs() < 1e-12, "{v}");
    }

    #[test]
    fn inverse_square_tail_of_constant() {
        let v = tail_inverse_square(|_| 2.0, 4.0, 4);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn par_map_preserves_order() {
        let v = par_map(103, 4, |i| i * i);
        assert_eq!(v, (0..103).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn slope_of_power_law() {
        let x = geometric_grid(1.0, 100.0, 20);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-1.5)).collect();
        assert!((loglog_slope(&x, &y) + 1.5).abs() < 1e-12);
    }
}
