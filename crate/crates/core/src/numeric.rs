//! Dense complex linear algebra used by the channel and measurement models.
//!
//! Matrices are `ndarray` arrays of `Complex64` in standard (row-major)
//! layout. Everything here is a pure function.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = Array2<Complex64>;
pub type CVector = Array1<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Unitary DFT matrix, `F[j,k] = exp(-i 2 pi j k / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("DFT size must be at least 1".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(Array2::from_shape_fn((n, n), |(j, k)| {
        // reduce the exponent mod n before converting to keep the phase exact
        let m = (j * k) % n;
        Complex64::from_polar(scale, -2.0 * std::f64::consts::PI * m as f64 / n as f64)
    }))
}

pub fn identity(n: usize) -> CMatrix {
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { ONE } else { ZERO })
}

/// Conjugate transpose.
pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vector_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `<a, b> = a^H b`.
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Kronecker product with the standard block layout.
pub fn kron(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let rows = a
        .nrows()
        .checked_mul(b.nrows())
        .ok_or_else(|| Error::Capacity("kron row count".into()))?;
    let cols = a
        .ncols()
        .checked_mul(b.ncols())
        .ok_or_else(|| Error::Capacity("kron column count".into()))?;
    rows.checked_mul(cols)
        .filter(|&n| n <= isize::MAX as usize / std::mem::size_of::<Complex64>())
        .ok_or_else(|| Error::Capacity(format!("{rows}x{cols} kron result")))?;
    let (br, bc) = b.dim();
    let mut out = Array2::from_elem((rows, cols), ZERO);
    for ((i, j), &aij) in a.indexed_iter() {
        if aij == ZERO {
            continue;
        }
        let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
        block.zip_mut_with(b, |o, &bv| *o = aij * bv);
    }
    Ok(out)
}

/// Column-stacking vectorization.
pub fn vec(m: &CMatrix) -> CVector {
    m.t().iter().copied().collect()
}

/// Block-circulant matrix whose block `(j, k)` is `taps[(j - k) mod n_f]`
/// (zero when that index is past the last tap).
pub fn block_circulant(taps: &[CMatrix], n_f: usize) -> Result<CMatrix> {
    if taps.is_empty() || n_f == 0 {
        return Err(Error::InvalidDimension("block_circulant needs at least one tap and n_f >= 1".into()));
    }
    if taps.len() > n_f {
        return Err(Error::Shape(format!("{} taps exceed {} subcarriers", taps.len(), n_f)));
    }
    let (nr, nt) = taps[0].dim();
    if let Some(bad) = taps.iter().find(|t| t.dim() != (nr, nt)) {
        return Err(Error::Shape(format!(
            "tap dims {:?} differ from first tap {:?}",
            bad.dim(),
            (nr, nt)
        )));
    }
    let mut out = Array2::from_elem((n_f * nr, n_f * nt), ZERO);
    for j in 0..n_f {
        for k in 0..n_f {
            let l = (j + n_f - k) % n_f;
            if let Some(tap) = taps.get(l) {
                out.slice_mut(ndarray::s![j * nr..(j + 1) * nr, k * nt..(k + 1) * nt])
                    .assign(tap);
            }
        }
    }
    Ok(out)
}

/// `X^H X` for a tall data matrix, computed with real GEMMs.
pub fn gram(x: ArrayView2<'_, Complex64>) -> CMatrix {
    let re = x.mapv(|z| z.re);
    let im = x.mapv(|z| z.im);
    let rr = re.t().dot(&re) + im.t().dot(&im);
    let ii = re.t().dot(&im) - im.t().dot(&re);
    Array2::from_shape_fn(rr.dim(), |(i, j)| Complex64::new(rr[(i, j)], ii[(i, j)]))
}

/// Lower-triangular Cholesky factor `L` with `A = L L^H`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    // row-major lower triangle, full n*n storage
    l: Vec<Complex64>,
}

impl Cholesky {
    /// Factors `a + ridge*I`. Pivots below a small multiple of the largest
    /// diagonal entry are treated as zero.
    pub fn factor(a: &CMatrix, ridge: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape(format!("gram must be square, got {:?}", a.dim())));
        }
        if ridge < 0.0 || !ridge.is_finite() {
            return Err(Error::InvalidConfig(format!("ridge must be nonnegative, got {ridge}")));
        }
        let mut l: Vec<Complex64> = a.as_standard_layout().iter().copied().collect();
        for i in 0..n {
            l[i * n + i].re += ridge;
        }
        let max_diag = (0..n).map(|i| l[i * n + i].re.abs()).fold(0.0, f64::max);
        let tol = max_diag * n.max(1) as f64 * f64::EPSILON * 1e3;
        for j in 0..n {
            let (upper, lower) = l.split_at_mut((j + 1) * n);
            let row_j = &mut upper[j * n..];
            let d = row_j[j].re - row_j[..j].iter().map(|z| z.norm_sqr()).sum::<f64>();
            if !(d > tol) {
                return Err(Error::IllPosed(format!(
                    "matrix is singular to working precision (pivot {j} of {n})"
                )));
            }
            let djj = d.sqrt();
            row_j[j] = Complex64::new(djj, 0.0);
            for z in row_j[j + 1..].iter_mut() {
                *z = ZERO;
            }
            let prefix = &upper[j * n..j * n + j];
            for row_i in lower.chunks_exact_mut(n) {
                let (mut sr, mut si) = (row_i[j].re, row_i[j].im);
                for (x, y) in row_i[..j].iter().zip(prefix) {
                    // x * conj(y)
                    sr -= x.re * y.re + x.im * y.im;
                    si -= x.im * y.re - x.re * y.im;
                }
                row_i[j] = Complex64::new(sr / djj, si / djj);
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The factor `L` as a dense matrix.
    pub fn lower(&self) -> CMatrix {
        Array2::from_shape_vec((self.n, self.n), self.l.clone()).expect("square storage")
    }

    pub fn solve(&self, rhs: &CVector) -> Result<CVector> {
        let n = self.n;
        if rhs.len() != n {
            return Err(Error::Shape(format!("rhs length {} != {}", rhs.len(), n)));
        }
        // L u = b
        let mut u = rhs.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: Complex64 = row.iter().zip(&u[..i]).map(|(a, b)| a * b).sum();
            u[i] = (u[i] - s) / self.l[i * n + i].re;
        }
        // L^H x = u
        for i in (0..n).rev() {
            let xi = u[i] / self.l[i * n + i].re;
            u[i] = xi;
            for k in 0..i {
                let lik = self.l[i * n + k];
                u[k] -= lik.conj() * xi;
            }
        }
        Ok(Array1::from(u))
    }

    /// `A^{-1}` as a dense matrix.
    pub fn inverse(&self) -> Result<CMatrix> {
        let n = self.n;
        let mut inv = Array2::from_elem((n, n), ZERO);
        for c in 0..n {
            let mut e = Array1::from_elem(n, ZERO);
            e[c] = ONE;
            inv.column_mut(c).assign(&self.solve(&e)?);
        }
        Ok(inv)
    }
}

/// Solves `(gram + ridge*I) x = rhs` for Hermitian positive semidefinite
/// `gram` through a Cholesky factorization.
pub fn regularized_hermitian_solve(gram: &CMatrix, rhs: &CVector, ridge: f64) -> Result<CVector> {
    if rhs.len() != gram.nrows() {
        return Err(Error::Shape(format!(
            "rhs length {} does not match gram {:?}",
            rhs.len(),
            gram.dim()
        )));
    }
    Cholesky::factor(gram, ridge)?.solve(rhs)
}

/// Hermitian part `(m + m^H)/2`, used to scrub rounding asymmetry.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + &adjoint(m)).mapv(|z| z * 0.5)
}

/// Sum of |entries|^2 off the block diagonal for a square `nb x nb` block grid.
pub fn off_block_diagonal_mass(m: &CMatrix, block_rows: usize, block_cols: usize) -> f64 {
    let mut mass = 0.0;
    for ((i, j), z) in m.indexed_iter() {
        if i / block_rows != j / block_cols {
            mass += z.norm_sqr();
        }
    }
    mass.sqrt()
}

pub fn to_matrix(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<CMatrix> {
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Shape(e.to_string()))
}

pub fn column_norms(m: &CMatrix) -> Array1<f64> {
    m.map_axis(Axis(0), |c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
}
