use ndarray::{s, Array2};

use crate::channel::{ChannelDataset, ChannelRealization};
use crate::error::{Error, Result};
use crate::estimators::ls::{estimate_ls, ls_gram_blocks};
use crate::measurement::{MeasurementOperator, ReceivedSignal};
use crate::numeric::{adjoint, gram, hermitian_part, kron, identity, CMatrix, Cholesky, ZERO};

/// Diagonal loading as a fraction of the mean eigenvalue.
pub const SHRINKAGE: f64 = 1e-3;

/// Where the channel covariance comes from.
#[derive(Debug, Clone)]
pub enum CovarianceSource<'a> {
    /// Sample covariance of a dataset plus diagonal loading.
    Dataset(&'a ChannelDataset),
    /// A known covariance, used as given.
    Analytic(CMatrix),
}

impl CovarianceSource<'_> {
    pub fn resolve(self) -> Result<CMatrix> {
        match self {
            CovarianceSource::Dataset(ds) => Ok(shrink_covariance(&sample_covariance(ds)?)),
            CovarianceSource::Analytic(r) => Ok(r),
        }
    }
}

/// `(1/n) sum h h^H` over stacked channel vectors (zero-mean model).
pub fn sample_covariance(ds: &ChannelDataset) -> Result<CMatrix> {
    if ds.is_empty() {
        return Err(Error::InvalidConfig("covariance needs at least one realization".into()));
    }
    let d = ds.dims().len();
    let mut x = Array2::from_elem((ds.len(), d), ZERO);
    for (mut row, r) in x.rows_mut().into_iter().zip(&ds.realizations) {
        row.assign(&r.to_vector());
    }
    // gram gives sum conj(h) h^T
    let g = gram(x.view());
    Ok(g.mapv(|z| z.conj() / ds.len() as f64))
}

/// Adds `SHRINKAGE * trace/dim` to the diagonal.
pub fn shrink_covariance(r: &CMatrix) -> CMatrix {
    let n = r.nrows();
    let delta = SHRINKAGE * r.diag().iter().map(|z| z.re).sum::<f64>() / n.max(1) as f64;
    let mut out = hermitian_part(r);
    for i in 0..n {
        out[(i, i)].re += delta;
    }
    out
}

/// Per-subcarrier blocks of the LS error covariance
/// `sigma^2 G_k^{-1} A_k^H (I ⊗ W_RF^H W_RF) A_k G_k^{-1}`.
pub fn gamma_blocks(op: &MeasurementOperator, noise_var: f64) -> Result<Vec<CMatrix>> {
    let cw = op.combiner_gram();
    let nrf = op.cfg.n_rx_rf;
    ls_gram_blocks(op)
        .into_iter()
        .enumerate()
        .map(|(k, (rows, a, g))| {
            if rows.len() < a.ncols() {
                return Err(Error::IllPosed(format!("subcarrier {k} is underdetermined")));
            }
            let noise = kron(&identity(rows.len() / nrf), &cw)?;
            let b = adjoint(&a).dot(&noise).dot(&a);
            let g_inv = Cholesky::factor(&g, 0.0)?.inverse()?;
            Ok(hermitian_part(&g_inv.dot(&b).dot(&g_inv)).mapv(|z| z * noise_var))
        })
        .collect()
}

/// `Γ` from the dense operator and the full slot noise covariance; only for
/// small instances.
pub fn gamma_dense_reference(op: &MeasurementOperator, noise_var: f64) -> Result<CMatrix> {
    let a = op.dense_matrix();
    let slots = op.n_rows() / op.cfg.n_rx_rf;
    let e_ww = kron(&identity(slots), &op.combiner_gram())?.mapv(|z| z * noise_var);
    let g_inv = Cholesky::factor(&adjoint(&a).dot(&a), 0.0)?.inverse()?;
    Ok(g_inv.dot(&adjoint(&a)).dot(&e_ww).dot(&a).dot(&g_inv))
}

/// `R_h (R_h + Γ)^{-1} ĥ_LS`.
pub fn estimate_lmmse(
    op: &MeasurementOperator,
    received: &ReceivedSignal,
    covariance: &CMatrix,
) -> Result<ChannelRealization> {
    let dims = op.dims();
    let d = dims.len();
    if covariance.dim() != (d, d) {
        return Err(Error::Shape(format!("covariance {:?} does not match {d} unknowns", covariance.dim())));
    }
    let h_ls = estimate_ls(op, received)?.to_vector();
    let mut m = covariance.clone();
    if received.noise_var > 0.0 {
        let block = dims.n_rx * dims.n_tx;
        for (k, g) in gamma_blocks(op, received.noise_var)?.iter().enumerate() {
            let mut view = m.slice_mut(s![k * block..(k + 1) * block, k * block..(k + 1) * block]);
            view += g;
        }
    }
    let x = Cholesky::factor(&m, 0.0)?.solve(&h_ls)?;
    ChannelRealization::from_vector(dims, &covariance.dot(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_dataset, ChannelDims, ClusterRayConfig};
    use crate::estimators::nmse_ratio;
    use crate::measurement::{
        add_awgn, build_operator, identity_networks, sample_pilots, TransceiverConfig,
    };
    use crate::numeric::frobenius_norm;
    use crate::seed::Rng;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn digital(cfg: &TransceiverConfig, seed: u64) -> MeasurementOperator {
        let mut rng = Rng::seed_from_u64(seed);
        let p = sample_pilots(cfg, 1.0, &mut rng).unwrap();
        let (f, w) = identity_networks(cfg).unwrap();
        build_operator(p, f, w, cfg).unwrap()
    }

    #[test]
    fn digital_gamma_is_scaled_inverse_gram() {
        let cfg = TransceiverConfig::fully_digital(2, 2, 2, 4);
        let op = digital(&cfg, 1);
        let sigma2 = 0.3;
        let blocks = gamma_blocks(&op, sigma2).unwrap();
        for (g, (_, _, gram)) in blocks.iter().zip(ls_gram_blocks(&op)) {
            let direct = Cholesky::factor(&gram, 0.0).unwrap().inverse().unwrap().mapv(|z| z * sigma2);
            assert!(frobenius_norm(&(g - &direct)) < 1e-10);
        }
        let dense = gamma_dense_reference(&op, sigma2).unwrap();
        let b = 4;
        for k in 0..2 {
            let d = dense.slice(s![k * b..(k + 1) * b, k * b..(k + 1) * b]).to_owned();
            assert!(frobenius_norm(&(&d - &blocks[k])) < 1e-10);
        }
        assert!(frobenius_norm(&dense.slice(s![..b, b..]).to_owned()) < 1e-10);
    }

    #[test]
    fn hybrid_gamma_matches_dense_formula() {
        // a fixed combiner only determines the channel when n_rx_rf == n_rx
        let cfg = TransceiverConfig { n_tx: 2, n_rx: 2, n_tx_rf: 2, n_rx_rf: 2, n_streams: 2, n_f: 2, n_frames: 6 };
        let mut rng = Rng::seed_from_u64(2);
        let p = sample_pilots(&cfg, 1.0, &mut rng).unwrap();
        // Hadamard precoder; unequal combiner column scales keep W^H W away from I
        let a = 0.5f64.sqrt();
        let hadamard = Array2::from_shape_vec((2, 2), vec![a, a, a, -a]).unwrap().mapv(|v| Complex64::new(v, 0.0));
        let w = hadamard.dot(&Array2::from_diag(&ndarray::arr1(&[Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)])));
        let op = build_operator(p, hadamard, w, &cfg).unwrap();
        assert!(frobenius_norm(&(op.combiner_gram() - identity(2))) > 0.1);
        let blocks = gamma_blocks(&op, 0.7).unwrap();
        let dense = gamma_dense_reference(&op, 0.7).unwrap();
        let b = 4;
        for k in 0..2 {
            let d = dense.slice(s![k * b..(k + 1) * b, k * b..(k + 1) * b]).to_owned();
            assert!(frobenius_norm(&(&d - &blocks[k])) < 1e-9 * frobenius_norm(&d));
        }
    }

    #[test]
    fn noiseless_lmmse_is_close_to_ls() {
        let ch = ClusterRayConfig { n_tx_h: 2, n_tx_v: 1, n_rx_h: 2, n_rx_v: 1, n_subcarriers: 2, n_taps: 1, ..Default::default() };
        let ds = generate_dataset(&ch, 300, 3).unwrap();
        let r = CovarianceSource::Dataset(&ds).resolve().unwrap();
        let cfg = TransceiverConfig::fully_digital(2, 2, 2, 4);
        let op = digital(&cfg, 4);
        let h = &ds.realizations[7];
        let y = add_awgn(&op, &op.apply_forward(h).unwrap(), f64::INFINITY, &mut Rng::seed_from_u64(5)).unwrap();
        let ls = estimate_ls(&op, &y).unwrap();
        let lm = estimate_lmmse(&op, &y, &r).unwrap();
        assert!(nmse_ratio(&ls, &lm).unwrap().sqrt() < 1e-2);
    }

    #[test]
    fn sample_covariance_of_known_vectors() {
        let dims = ChannelDims { n_f: 1, n_rx: 1, n_tx: 2 };
        let a = vec![Complex64::new(1.0, 1.0), Complex64::new(0.0, 2.0)];
        let r = ChannelRealization::from_vector(dims, &a.clone().into()).unwrap();
        let config = ClusterRayConfig { n_tx_h: 2, n_tx_v: 1, n_rx_h: 1, n_rx_v: 1, n_subcarriers: 1, n_taps: 1, ..Default::default() };
        assert_eq!(config.dims(), dims);
        let ds = ChannelDataset { config, realizations: vec![r], master_seed: 0 };
        let c = sample_covariance(&ds).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((c[(i, j)] - a[i] * a[j].conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn analytic_prior_beats_ls_at_zero_db() {
        let cfg = TransceiverConfig::fully_digital(2, 2, 2, 16);
        let d = 8;
        // exponential correlation 0.9^|i-j|
        let r = Array2::from_shape_fn((d, d), |(i, j)| Complex64::new(0.9f64.powi((i as i32 - j as i32).abs()), 0.0));
        let l = Cholesky::factor(&r, 0.0).unwrap().lower();
        let dims = cfg.channel_dims();
        let mut rng = Rng::seed_from_u64(6);
        let (mut e_ls, mut e_lm) = (0.0, 0.0);
        for t in 0..200 {
            let g: crate::numeric::CVector = (0..d)
                .map(|_| {
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(a, b) / 2f64.sqrt()
                })
                .collect();
            let h = ChannelRealization::from_vector(dims, &l.dot(&g)).unwrap();
            let op = digital(&cfg, 1000 + t);
            let y = add_awgn(&op, &op.apply_forward(&h).unwrap(), 0.0, &mut rng).unwrap();
            e_ls += nmse_ratio(&h, &estimate_ls(&op, &y).unwrap()).unwrap();
            e_lm += nmse_ratio(&h, &estimate_lmmse(&op, &y, &r).unwrap()).unwrap();
        }
        assert!(e_lm < e_ls, "lmmse {e_lm} ls {e_ls}");
    }
}
