//! Exact rational linear algebra.
//!
//! Everything structural in the reduction pipeline (constraint matrices,
//! kernels, two-forms, zero modes, Darboux transforms) is computed over the
//! rationals so that ranks and kernel dimensions are exact facts rather than
//! floating-point guesses.  Floats only appear when a model is handed over to
//! the numerical back ends, via [`QMat::to_f64`].

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational scalar.
pub type Q = BigRational;

/// Builds a rational from an integer.
pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Builds the rational `n / d`.
pub fn qf(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Lossy conversion of a rational to `f64`.
pub fn q_to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Exact conversion of a finite `f64` to a rational (binary expansion).
pub fn q_from_f64(x: f64) -> Option<Q> {
    Q::from_float(x)
}

/// Parses an exact rational from a decimal or fraction string.
///
/// Accepted forms: `"3"`, `"-2.5"`, `"1e-3"`, `"6.02E23"`, `"1/3"`,
/// `"-7/12"`.  Decimal strings are converted exactly, never through `f64`.
pub fn parse_rational(s: &str) -> Result<Q> {
    let t = s.trim();
    if t.is_empty() {
        return Err(Error::Parse("empty number string".to_string()));
    }
    if let Some((n, d)) = t.split_once('/') {
        let num = parse_rational(n)?;
        let den = parse_rational(d)?;
        if den.is_zero() {
            return Err(Error::Parse(format!("zero denominator in '{s}'")));
        }
        return Ok(num / den);
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(pos) => {
            let e: i64 = t[pos + 1..].parse().map_err(|_| Error::Parse(format!("bad exponent in '{s}'")))?;
            (&t[..pos], e)
        }
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(Error::Parse(format!("no digits in '{s}'")));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(Error::Parse(format!("invalid number '{s}'")));
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num: BigInt = digits.parse().map_err(|_| Error::Parse(format!("invalid number '{s}'")))?;
    if neg {
        num = -num;
    }
    let scale = exponent - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        Q::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        Q::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(value)
}

/// Canonical string form of a rational (`"p"` or `"p/q"`).
pub fn format_rational(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Dense row-major matrix of exact rationals.
#[derive(Clone, PartialEq, Eq)]
pub struct QMat {
    rows: usize,
    cols: usize,
    data: Vec<Q>,
}

impl fmt::Debug for QMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "QMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| format_rational(&self[(i, j)])).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for QMat {
    type Output = Q;
    fn index(&self, (i, j): (usize, usize)) -> &Q {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for QMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Q {
        &mut self.data[i * self.cols + j]
    }
}

/// Result of a reduced row echelon computation.
#[derive(Clone, Debug)]
pub struct Rref {
    /// The reduced matrix.
    pub matrix: QMat,
    /// Pivot column of each nonzero row, in row order.
    pub pivots: Vec<usize>,
}

impl QMat {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMat { rows, cols, data: vec![Q::zero(); rows * cols] }
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Q::one();
        }
        m
    }

    /// Builds a matrix from rational rows.  All rows must share a length.
    pub fn from_rows(rows: &[Vec<Q>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row.iter().cloned());
        }
        QMat { rows: r, cols: c, data }
    }

    /// Builds a matrix from integer rows (handy in tests).
    pub fn from_i64(rows: &[&[i64]]) -> Self {
        let rows: Vec<Vec<Q>> = rows.iter().map(|r| r.iter().map(|&v| qi(v)).collect()).collect();
        Self::from_rows(&rows)
    }

    /// Builds a matrix whose columns are the given vectors, each of length `rows`.
    pub fn from_cols(rows: usize, cols: &[Vec<Q>]) -> Self {
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), rows, "column length mismatch");
            for (i, v) in c.iter().enumerate() {
                m[(i, j)] = v.clone();
            }
        }
        m
    }

    /// Diagonal matrix.
    pub fn diag(d: &[Q]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = v.clone();
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    /// Row `i` as a vector.
    pub fn row(&self, i: usize) -> Vec<Q> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    /// Column `j` as a vector.
    pub fn col(&self, j: usize) -> Vec<Q> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    /// All columns as vectors.
    pub fn cols_vec(&self) -> Vec<Vec<Q>> {
        (0..self.cols).map(|j| self.col(j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    /// Matrix product.
    pub fn mul(&self, other: &QMat) -> QMat {
        assert_eq!(self.cols, other.rows, "dimension mismatch in product");
        let mut out = QMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(k, j)];
                    if !b.is_zero() {
                        out[(i, j)] += a * b;
                    }
                }
            }
        }
        out
    }

    /// Matrix–vector product.
    pub fn mul_vec(&self, v: &[Q]) -> Vec<Q> {
        assert_eq!(self.cols, v.len(), "dimension mismatch in product");
        (0..self.rows)
            .map(|i| {
                let mut acc = Q::zero();
                for (k, x) in v.iter().enumerate() {
                    let a = &self[(i, k)];
                    if !a.is_zero() && !x.is_zero() {
                        acc += a * x;
                    }
                }
                acc
            })
            .collect()
    }

    /// Row vector times matrix, `vᵀ M`.
    pub fn vec_mul(&self, v: &[Q]) -> Vec<Q> {
        self.transpose().mul_vec(v)
    }

    pub fn add(&self, other: &QMat) -> QMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        QMat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &QMat) -> QMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        QMat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, s: &Q) -> QMat {
        QMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn neg(&self) -> QMat {
        self.scale(&qi(-1))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.sub(&self.transpose()).is_zero()
    }

    pub fn is_skew(&self) -> bool {
        self.rows == self.cols && self.add(&self.transpose()).is_zero()
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &QMat) -> QMat {
        if self.rows == 0 {
            return other.clone();
        }
        if other.rows == 0 {
            return self.clone();
        }
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend(other.data.iter().cloned());
        QMat { rows: self.rows + other.rows, cols: self.cols, data }
    }

    /// Places `other` to the right of `self`.
    pub fn hstack(&self, other: &QMat) -> QMat {
        self.transpose().vstack(&other.transpose()).transpose()
    }

    /// Sub-matrix of the given columns.
    pub fn select_cols(&self, cols: &[usize]) -> QMat {
        let mut m = QMat::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (jj, &j) in cols.iter().enumerate() {
                m[(i, jj)] = self[(i, j)].clone();
            }
        }
        m
    }

    /// Sub-matrix of the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> QMat {
        let mut m = QMat::zeros(rows.len(), self.cols);
        for (ii, &i) in rows.iter().enumerate() {
            for j in 0..self.cols {
                m[(ii, j)] = self[(i, j)].clone();
            }
        }
        m
    }

    /// Reduced row echelon form.
    ///
    /// Pivoting is partial on rational magnitude: within the current column
    /// the remaining row with the largest absolute value is chosen, ties going
    /// to the smallest row index.  Columns are processed left to right, so the
    /// pivot set is the lexicographically smallest set of independent columns.
    pub fn rref(&self) -> Rref {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let mut best: Option<usize> = None;
            for i in r..m.rows {
                if m[(i, c)].is_zero() {
                    continue;
                }
                match best {
                    None => best = Some(i),
                    Some(b) if m[(i, c)].abs() > m[(b, c)].abs() => best = Some(i),
                    _ => {}
                }
            }
            let Some(p) = best else { continue };
            if p != r {
                for j in 0..m.cols {
                    m.data.swap(p * m.cols + j, r * m.cols + j);
                }
            }
            let inv = m[(r, c)].recip();
            for j in c..m.cols {
                let v = &m[(r, j)] * &inv;
                m[(r, j)] = v;
            }
            for i in 0..m.rows {
                if i == r || m[(i, c)].is_zero() {
                    continue;
                }
                let f = m[(i, c)].clone();
                for j in c..m.cols {
                    if m[(r, j)].is_zero() {
                        continue;
                    }
                    let v = &m[(i, j)] - &f * &m[(r, j)];
                    m[(i, j)] = v;
                }
            }
            pivots.push(c);
            r += 1;
        }
        Rref { matrix: m, pivots }
    }

    pub fn rank(&self) -> usize {
        self.rref().pivots.len()
    }

    /// Basis of the right kernel, as columns of the returned matrix.
    ///
    /// One basis vector per free column, in increasing free-column order; the
    /// vector has a 1 in its free column and zeros in the other free columns.
    pub fn kernel(&self) -> QMat {
        let cols = self.kernel_with_free().0;
        QMat::from_cols(self.cols, &cols)
    }

    /// Kernel basis vectors together with the free column each one is anchored on.
    pub fn kernel_with_free(&self) -> (Vec<Vec<Q>>, Vec<usize>) {
        let Rref { matrix, pivots } = self.rref();
        let mut is_pivot = vec![false; self.cols];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let mut out = Vec::new();
        let mut free = Vec::new();
        for f in 0..self.cols {
            if is_pivot[f] {
                continue;
            }
            let mut v = vec![Q::zero(); self.cols];
            v[f] = Q::one();
            for (row, &p) in pivots.iter().enumerate() {
                v[p] = -matrix[(row, f)].clone();
            }
            out.push(v);
            free.push(f);
        }
        (out, free)
    }

    /// Basis of the left kernel (vectors `y` with `yᵀ M = 0`), as columns.
    pub fn left_kernel(&self) -> QMat {
        self.transpose().kernel()
    }

    /// Exact inverse, or `None` if singular.
    pub fn inverse(&self) -> Option<QMat> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows;
        let aug = self.hstack(&QMat::identity(n));
        let Rref { matrix, pivots } = aug.rref();
        if pivots.len() < n || pivots[n - 1] != n - 1 {
            return None;
        }
        let idx: Vec<usize> = (n..2 * n).collect();
        Some(matrix.select_cols(&idx))
    }

    /// Solves `self · X = rhs` exactly for square invertible `self`.
    pub fn solve(&self, rhs: &QMat) -> Option<QMat> {
        self.inverse().map(|inv| inv.mul(rhs))
    }

    /// One solution of `self · x = b` (free variables set to zero), or `None`
    /// when the system is inconsistent.
    pub fn particular_solution(&self, b: &[Q]) -> Option<Vec<Q>> {
        let aug = self.hstack(&QMat::from_cols(self.rows, &[b.to_vec()]));
        let Rref { matrix, pivots } = aug.rref();
        if pivots.last() == Some(&self.cols) {
            return None;
        }
        let mut x = vec![Q::zero(); self.cols];
        for (row, &p) in pivots.iter().enumerate() {
            x[p] = matrix[(row, self.cols)].clone();
        }
        Some(x)
    }

    /// Lossy conversion to a float matrix.
    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| q_to_f64(&self[(i, j)]))
    }

    /// Entry strings in canonical rational form, row by row.
    pub fn to_strings(&self) -> Vec<Vec<String>> {
        (0..self.rows).map(|i| self.row(i).iter().map(format_rational).collect()).collect()
    }
}

/// Dot product of two rational vectors.
pub fn dot(a: &[Q], b: &[Q]) -> Q {
    assert_eq!(a.len(), b.len());
    let mut acc = Q::zero();
    for (x, y) in a.iter().zip(b) {
        if !x.is_zero() && !y.is_zero() {
            acc += x * y;
        }
    }
    acc
}

/// True when every entry is zero.
pub fn is_zero_vec(v: &[Q]) -> bool {
    v.iter().all(|x| x.is_zero())
}

/// Scales a rational vector to the primitive integer vector on the same ray
/// (coprime integer entries, first nonzero entry positive).
pub fn primitive(v: &[Q]) -> Vec<Q> {
    let mut lcm = BigInt::one();
    for x in v {
        lcm = lcm.lcm(x.denom());
    }
    let ints: Vec<BigInt> = v.iter().map(|x| (x * Q::from_integer(lcm.clone())).to_integer()).collect();
    let mut g = BigInt::zero();
    for x in &ints {
        g = g.gcd(x);
    }
    if g.is_zero() {
        return v.to_vec();
    }
    let sign = ints.iter().find(|x| !x.is_zero()).map_or(BigInt::one(), |x| x.signum());
    ints.into_iter().map(|x| Q::from_integer(x * &sign / &g)).collect()
}

/// Incrementally maintained echelon basis for fast independence tests.
#[derive(Clone, Debug, Default)]
pub struct Echelon {
    rows: Vec<(usize, Vec<Q>)>,
}

impl Echelon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of independent vectors inserted so far.
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Residual of `v` after elimination against the basis.
    pub fn reduce(&self, v: &[Q]) -> Vec<Q> {
        let mut r = v.to_vec();
        for (p, row) in &self.rows {
            if r[*p].is_zero() {
                continue;
            }
            let f = r[*p].clone();
            for (x, y) in r.iter_mut().zip(row) {
                if !y.is_zero() {
                    *x -= &f * y;
                }
            }
        }
        r
    }

    /// Inserts `v` if it is independent of the basis; returns whether it was.
    pub fn insert(&mut self, v: &[Q]) -> bool {
        let r = self.reduce(v);
        match r.iter().position(|x| !x.is_zero()) {
            None => false,
            Some(p) => {
                let inv = r[p].recip();
                let row: Vec<Q> = r.iter().map(|x| x * &inv).collect();
                self.rows.push((p, row));
                true
            }
        }
    }

    /// True when `v` lies in the span of the basis.
    pub fn contains(&self, v: &[Q]) -> bool {
        is_zero_vec(&self.reduce(v))
    }
}

/// Greedy selection of a maximal independent subset of `candidates` that
/// extends the span of `base`.  Returns the indices of accepted candidates.
pub fn extend_independent(base: &[Vec<Q>], candidates: &[Vec<Q>], _dim: usize) -> Vec<usize> {
    let mut ech = Echelon::new();
    for b in base {
        ech.insert(b);
    }
    let mut accepted = Vec::new();
    for (idx, c) in candidates.iter().enumerate() {
        if ech.insert(c) {
            accepted.push(idx);
        }
    }
    accepted
}

/// True when `v` lies in the column span of `basis`.
pub fn in_span(basis: &[Vec<Q>], v: &[Q]) -> bool {
    let mut ech = Echelon::new();
    for b in basis {
        ech.insert(b);
    }
    ech.contains(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimal_fraction_and_exponent_forms() {
        assert_eq!(parse_rational("3").unwrap(), qi(3));
        assert_eq!(parse_rational("-2.5").unwrap(), qf(-5, 2));
        assert_eq!(parse_rational("1e-3").unwrap(), qf(1, 1000));
        assert_eq!(parse_rational("1.5E2").unwrap(), qi(150));
        assert_eq!(parse_rational("-7/12").unwrap(), qf(-7, 12));
        assert_eq!(parse_rational(".5").unwrap(), qf(1, 2));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn decimal_parse_is_exact_not_binary() {
        // 0.1 has no finite binary expansion; the parser must keep it exact.
        assert_eq!(parse_rational("0.1").unwrap(), qf(1, 10));
    }

    #[test]
    fn kernel_of_rank_deficient_matrix() {
        let m = QMat::from_i64(&[&[1, 2, 3], &[2, 4, 6]]);
        let k = m.kernel();
        assert_eq!(k.ncols(), 2);
        assert!(m.mul(&k).is_zero());
        assert_eq!(m.rank() + k.ncols(), 3);
    }

    #[test]
    fn inverse_roundtrip_and_singular_detection() {
        let m = QMat::from_i64(&[&[2, 1], &[1, 1]]);
        let inv = m.inverse().unwrap();
        assert_eq!(m.mul(&inv), QMat::identity(2));
        assert!(QMat::from_i64(&[&[1, 2], &[2, 4]]).inverse().is_none());
    }

    #[test]
    fn pivot_prefers_largest_magnitude_then_smallest_row() {
        let m = QMat::from_i64(&[&[1, 0], &[-3, 1], &[3, 2]]);
        let r = m.rref();
        assert_eq!(r.pivots, vec![0, 1]);
        // Full RREF is unique regardless of pivot order.
        assert_eq!(r.matrix.row(0), vec![qi(1), qi(0)]);
    }

    #[test]
    fn primitive_scaling() {
        let v = vec![qf(-1, 2), qf(3, 4), qi(0)];
        assert_eq!(primitive(&v), vec![qi(2), qi(-3), qi(0)]);
    }

    #[test]
    fn independence_helpers() {
        let base = vec![vec![qi(1), qi(0), qi(0)]];
        let cands = vec![vec![qi(2), qi(0), qi(0)], vec![qi(0), qi(1), qi(0)], vec![qi(1), qi(1), qi(0)]];
        assert_eq!(extend_independent(&base, &cands, 3), vec![1]);
        assert!(in_span(&[vec![qi(1), qi(1)]], &[qi(-2), qi(-2)]));
        assert!(!in_span(&[vec![qi(1), qi(1)]], &[qi(1), qi(0)]));
    }
}
