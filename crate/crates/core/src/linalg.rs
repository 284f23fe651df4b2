//! Dense complex matrices and the Hermitian positive-definite solvers used by
//! the LMMSE module and the OMP refit.

use std::ops::{Index, IndexMut};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{czero, Cx, Real};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Cx<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![czero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Cx<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<Cx<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Square diagonal matrix.
    pub fn from_diag(diag: &[Cx<T>]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Cx<T>] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Cx<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Cx<T>] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Cx<T>> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn diag(&self) -> Vec<Cx<T>> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&self, s: Cx<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| *z * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a + *b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a - *b).collect(),
        })
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, a) in self.row(r).iter().enumerate() {
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += *a * *b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `self^H y`.
    pub fn adjoint_matvec(&self, y: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(y.len(), self.rows, "adjoint matvec dimension");
        let mut out = vec![czero(); self.cols];
        for (r, yr) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a.conj() * *yr;
            }
        }
        out
    }

    /// `self^H self`.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ai = row[i].conj();
                if ai.re == T::zero() && ai.im == T::zero() {
                    continue;
                }
                let g_row = &mut g.data[i * n..(i + 1) * n];
                for (gj, aj) in g_row.iter_mut().zip(row) {
                    *gj += ai * *aj;
                }
            }
        }
        g
    }

    /// Sub-matrix made of the listed columns.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |r, c| self[(r, cols[c])])
    }

    pub fn frobenius_norm_sqr(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Real part of the trace of `self * other` for square matrices.
    pub fn trace_product_re(&self, other: &Self) -> T {
        let n = self.rows;
        let mut acc = T::zero();
        for i in 0..n {
            for j in 0..n {
                let p = self[(i, j)] * other[(j, i)];
                acc += p.re;
            }
        }
        acc
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Cx<T>;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Cx<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Cx<T> {
        &mut self.data[r * self.cols + c]
    }
}

/// Unconjugated dot product `sum a_i b_i`.
#[inline]
pub fn dot<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Cx<T> {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + *x * *y)
}

/// Conjugated dot product `a^H b`.
#[inline]
pub fn dotc<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Cx<T> {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x.conj() * *y)
}

pub fn norm_sqr<T: Real>(v: &[Cx<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Lower Cholesky factor `L` of a Hermitian positive-definite matrix,
/// `A = L L^H`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: CMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &CMatrix<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension("cholesky of a non-square matrix".into()));
        }
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let (row_j, below) = l.data[j * n..].split_at_mut(n);
            let mut d = a[(j, j)].re;
            for z in &row_j[..j] {
                d -= z.norm_sqr();
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "matrix not positive definite at pivot {j}"
                )));
            }
            let ljj = d.sqrt();
            row_j[j] = Complex::new(ljj, T::zero());
            let inv = T::one() / ljj;
            for (off, row_i) in below.chunks_mut(n).enumerate() {
                let i = j + 1 + off;
                let mut s = a[(i, j)];
                for (x, y) in row_i[..j].iter().zip(&row_j[..j]) {
                    s -= *x * y.conj();
                }
                row_i[j] = s.scale(inv);
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &CMatrix<T> {
        &self.l
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[Cx<T>]) -> Vec<Cx<T>> {
        let n = self.l.rows();
        assert_eq!(b.len(), n, "cholesky solve dimension");
        let mut z = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = z[i];
            for k in 0..i {
                s -= row[k] * z[k];
            }
            z[i] = s.unscale(row[i].re);
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l[(k, i)].conj() * z[k];
            }
            z[i] = s.unscale(self.l[(i, i)].re);
        }
        z
    }

    /// `L^{-1}` (lower triangular), built by forward row elimination.
    pub fn inverse_factor(&self) -> CMatrix<T> {
        let n = self.l.rows();
        let mut y = CMatrix::zeros(n, n);
        for i in 0..n {
            let (done, rest) = y.data.split_at_mut(i * n);
            let row_i = &mut rest[..n];
            row_i[i] = Complex::new(T::one(), T::zero());
            let l_row = self.l.row(i);
            for k in 0..i {
                let lik = l_row[k];
                if lik.re == T::zero() && lik.im == T::zero() {
                    continue;
                }
                let row_k = &done[k * n..k * n + k + 1];
                for (t, s) in row_i[..=k].iter_mut().zip(row_k) {
                    *t -= lik * *s;
                }
            }
            let inv = T::one() / l_row[i].re;
            for t in row_i[..=i].iter_mut() {
                *t = t.scale(inv);
            }
        }
        y
    }

    /// Diagonal of `A^{-1}` together with `L^{-1}`.
    pub fn inverse_diag(&self) -> (Vec<T>, CMatrix<T>) {
        let y = self.inverse_factor();
        let n = y.rows();
        let mut d = vec![T::zero(); n];
        for i in 0..n {
            for (dk, z) in d.iter_mut().zip(&y.row(i)[..=i]) {
                *dk += z.norm_sqr();
            }
        }
        (d, y)
    }

    /// Full `A^{-1} = L^{-H} L^{-1}` from a precomputed `L^{-1}`.
    pub fn inverse_from_factor(y: &CMatrix<T>) -> CMatrix<T> {
        let n = y.rows();
        let mut inv = CMatrix::zeros(n, n);
        for i in 0..n {
            let row = &y.row(i)[..=i];
            for a in 0..=i {
                let ya = row[a].conj();
                let out = &mut inv.data[a * n..a * n + a + 1];
                for (o, yb) in out.iter_mut().zip(&row[..=a]) {
                    *o += ya * *yb;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                inv[(b, a)] = inv[(a, b)].conj();
            }
        }
        inv
    }

    pub fn inverse(&self) -> CMatrix<T> {
        Self::inverse_from_factor(&self.inverse_factor())
    }
}

/// Cholesky with escalating diagonal loading. Returns the factor and the
/// loading that was added (zero when none was needed).
pub fn cholesky_regularized<T: Real>(a: &CMatrix<T>) -> Result<(Cholesky<T>, T)> {
    if let Ok(c) = Cholesky::new(a) {
        return Ok((c, T::zero()));
    }
    let n = a.rows();
    let mean_diag = (0..n).map(|i| a[(i, i)].re.abs()).sum::<T>() / T::from_usize(n.max(1)).unwrap();
    let mut load = mean_diag.max(T::min_positive_value()) * T::lit(1e-12);
    for _ in 0..30 {
        let mut loaded = a.clone();
        for i in 0..n {
            loaded[(i, i)].re += load;
        }
        if let Ok(c) = Cholesky::new(&loaded) {
            return Ok((c, load));
        }
        load *= T::lit(10.0);
    }
    Err(Error::Numerical("regularization failed to restore definiteness".into()))
}

/// Linear map `C^n -> C^m` with the products the estimators need.
pub trait LinearOperator<T: Real> {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[Cx<T>]) -> Vec<Cx<T>>;
    fn adjoint_apply(&self, y: &[Cx<T>]) -> Vec<Cx<T>>;
    /// `Phi^H Phi`.
    fn gram(&self) -> CMatrix<T>;
    fn column(&self, q: usize) -> Vec<Cx<T>>;
    fn to_dense(&self) -> CMatrix<T>;
}

impl<T: Real> LinearOperator<T> for CMatrix<T> {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &[Cx<T>]) -> Vec<Cx<T>> {
        self.matvec(x)
    }
    fn adjoint_apply(&self, y: &[Cx<T>]) -> Vec<Cx<T>> {
        self.adjoint_matvec(y)
    }
    fn gram(&self) -> CMatrix<T> {
        CMatrix::gram(self)
    }
    fn column(&self, q: usize) -> Vec<Cx<T>> {
        CMatrix::column(self, q)
    }
    fn to_dense(&self) -> CMatrix<T> {
        self.clone()
    }
}
