//! Orthogonal matching pursuit in the delay-angle domain.
//!
//! The dictionary is `Ψ = F_{N_f}^H ⊗ F_{N_r} ⊗ conj(F_{N_t})`, so a channel
//! with few dominant delay taps and angles has few large coefficients.
//! Coefficient `(l, q)` sits at index `l * N_r N_t + q`.

use ndarray::{s, Array1, Array2};
use num_complex::Complex64;

use crate::channel::{ChannelDims, ChannelRealization};
use crate::error::{Error, Result};
use crate::measurement::{MeasurementOperator, ReceivedSignal};
use crate::numeric::{adjoint, dft_matrix, kron, CMatrix, CVector, ZERO};

fn spatial_basis(dims: ChannelDims) -> Result<CMatrix> {
    kron(&dft_matrix(dims.n_rx)?, &dft_matrix(dims.n_tx)?.mapv(|z| z.conj()))
}

/// Dense `Ψ`, for small instances and tests.
pub fn omp_dictionary(dims: ChannelDims) -> Result<CMatrix> {
    kron(&adjoint(&dft_matrix(dims.n_f)?), &spatial_basis(dims)?)
}

/// `A Ψ` assembled subcarrier by subcarrier.
pub fn omp_sensing_matrix(op: &MeasurementOperator) -> Result<CMatrix> {
    let dims = op.dims();
    let sp = spatial_basis(dims)?;
    let fh = adjoint(&dft_matrix(dims.n_f)?);
    let q = sp.ncols();
    let mut m = Array2::from_elem((op.n_rows(), dims.len()), ZERO);
    for k in 0..dims.n_f {
        let (rows, a) = op.subcarrier_block(k);
        let p = a.dot(&sp);
        for (ri, &row) in rows.iter().enumerate() {
            for l in 0..dims.n_f {
                let c = fh[(k, l)];
                let mut dst = m.slice_mut(s![row, l * q..(l + 1) * q]);
                dst.zip_mut_with(&p.row(ri), |d, &v| *d = c * v);
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub estimate: ChannelRealization,
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    pub coefficients: CVector,
    /// Residual norm before the first and after every selection.
    pub residual_norms: Vec<f64>,
}

/// Columns shorter than this fraction of the longest one count as zero.
pub const NULL_ATOM_RTOL: f64 = 1e-10;

fn dot_h(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Greedy pursuit on `m`: pick the atom with the largest normalized
/// correlation, project `y` onto the span of the picks, repeat. Stops after
/// `sparsity` atoms, when the residual norm drops to `tol`, or when the next
/// atom is numerically dependent on the picks.
///
/// Returns `(support, coefficients, residual norms)`.
pub fn orthogonal_matching_pursuit(
    m: &CMatrix,
    y: &CVector,
    sparsity: usize,
    tol: f64,
) -> Result<(Vec<usize>, CVector, Vec<f64>)> {
    if sparsity == 0 || sparsity > m.nrows() {
        return Err(Error::InvalidConfig(format!(
            "sparsity must lie in 1..={} measurements, got {sparsity}",
            m.nrows()
        )));
    }
    if y.len() != m.nrows() {
        return Err(Error::Shape(format!("observation {} != {} rows", y.len(), m.nrows())));
    }
    let col_norms: Vec<f64> = m.columns().into_iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect();
    // atoms the operator annihilates up to rounding are never eligible
    let floor = NULL_ATOM_RTOL * col_norms.iter().cloned().fold(0.0, f64::max);
    let mh = adjoint(m);
    let mut used = vec![false; m.ncols()];
    let mut support = Vec::new();
    let mut q: Vec<CVector> = Vec::new();
    // column j holds the Gram-Schmidt coefficients of atom j
    let mut r_cols: Vec<Vec<Complex64>> = Vec::new();
    let mut residual = y.clone();
    let mut norms = vec![norm(&residual)];
    while support.len() < sparsity && *norms.last().unwrap() > tol {
        let corr = mh.dot(&residual);
        let best = (0..m.ncols())
            .filter(|&j| !used[j] && col_norms[j] > floor)
            .map(|j| (j, corr[j].norm() / col_norms[j]))
            .fold(None, |acc: Option<(usize, f64)>, (j, c)| match acc {
                Some((_, bc)) if bc >= c => acc,
                _ => Some((j, c)),
            });
        let Some((j, _)) = best else { break };
        let atom: CVector = m.column(j).to_owned();
        let mut v = atom.clone();
        let mut coeffs = vec![ZERO; q.len() + 1];
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot_h(qi, &v);
                coeffs[i] += c;
                v.zip_mut_with(qi, |a, b| *a -= c * b);
            }
        }
        let nv = norm(&v);
        if nv <= 1e-10 * col_norms[j] {
            break;
        }
        coeffs[q.len()] = Complex64::new(nv, 0.0);
        v.mapv_inplace(|z| z / nv);
        let c = dot_h(&v, &residual);
        residual.zip_mut_with(&v, |a, b| *a -= c * b);
        q.push(v);
        r_cols.push(coeffs);
        used[j] = true;
        support.push(j);
        norms.push(norm(&residual));
    }
    // R x = Q^H y
    let n = support.len();
    let qy: Vec<Complex64> = q.iter().map(|qi| dot_h(qi, y)).collect();
    let mut x = vec![ZERO; n];
    for i in (0..n).rev() {
        let s: Complex64 = (i + 1..n).map(|j| r_cols[j][i] * x[j]).sum();
        x[i] = (qy[i] - s) / r_cols[i][i];
    }
    Ok((support, Array1::from(x), norms))
}

/// OMP channel estimate with the residual stop at `sigma_n sqrt(rows)`.
pub fn estimate_omp(op: &MeasurementOperator, received: &ReceivedSignal, sparsity: usize) -> Result<OmpResult> {
    let dims = op.dims();
    let m = omp_sensing_matrix(op)?;
    let tol = received.noise_var.sqrt() * (op.n_rows() as f64).sqrt();
    let (support, coefficients, residual_norms) = orthogonal_matching_pursuit(&m, &received.y, sparsity, tol)?;
    let sp = spatial_basis(dims)?;
    let fh = adjoint(&dft_matrix(dims.n_f)?);
    let q = sp.ncols();
    let mut h = Array1::from_elem(dims.len(), ZERO);
    for (&j, &c) in support.iter().zip(coefficients.iter()) {
        let (l, qq) = (j / q, j % q);
        for k in 0..dims.n_f {
            let w = fh[(k, l)] * c;
            let mut dst = h.slice_mut(s![k * q..(k + 1) * q]);
            dst.zip_mut_with(&sp.column(qq), |d, &v| *d += w * v);
        }
    }
    Ok(OmpResult { estimate: ChannelRealization::from_vector(dims, &h)?, support, coefficients, residual_norms })
}
