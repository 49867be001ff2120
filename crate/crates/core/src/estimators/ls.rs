use ndarray::Array1;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::measurement::{MeasurementOperator, ReceivedSignal};
use crate::numeric::{adjoint, gram, CMatrix, Cholesky, CVector, ZERO};

/// Per-subcarrier `(row indices, A_k, A_k^H A_k)`. The normal equations of
/// the stacked operator are block diagonal with these blocks.
pub fn ls_gram_blocks(op: &MeasurementOperator) -> Vec<(Vec<usize>, CMatrix, CMatrix)> {
    (0..op.dims().n_f)
        .map(|k| {
            let (rows, a) = op.subcarrier_block(k);
            let g = gram(a.view());
            (rows, a, g)
        })
        .collect()
}

/// Least squares `(A^H A)^{-1} A^H y`, solved one subcarrier at a time.
///
/// Fails with [`Error::IllPosed`] when any subcarrier has fewer measurements
/// than unknowns or a singular gram.
pub fn estimate_ls(op: &MeasurementOperator, received: &ReceivedSignal) -> Result<ChannelRealization> {
    let dims = op.dims();
    if received.y.len() != op.n_rows() {
        return Err(Error::Shape(format!("observation {} != {} rows", received.y.len(), op.n_rows())));
    }
    let block = dims.n_rx * dims.n_tx;
    let mut h = Array1::from_elem(dims.len(), ZERO);
    for (k, (rows, a, g)) in ls_gram_blocks(op).into_iter().enumerate() {
        if rows.len() < block {
            return Err(Error::IllPosed(format!(
                "subcarrier {k} has {} measurements for {block} unknowns",
                rows.len()
            )));
        }
        let y_k: CVector = rows.iter().map(|&i| received.y[i]).collect();
        let rhs = adjoint(&a).dot(&y_k);
        let x = Cholesky::factor(&g, 0.0)
            .map_err(|e| match e {
                Error::IllPosed(m) => Error::IllPosed(format!("subcarrier {k}: {m}")),
                other => other,
            })?
            .solve(&rhs)?;
        h.slice_mut(ndarray::s![k * block..(k + 1) * block]).assign(&x);
    }
    ChannelRealization::from_vector(dims, &h)
}
