//! Hybrid-transceiver pilot measurements.
//!
//! For an active pilot slot `(n, k)` the receiver observes
//! `y_k[n] = sqrt(rho) W_RF^H H_k F_RF s[n,k] + w_k[n]` where `s[n,k]` is the
//! pilot vector zero-padded to the transmit RF chains (the digital
//! precoder and combiner are identities). The operator keeps this factored
//! form and only materializes dense matrices on request.

use ndarray::{s, Array1, Array2};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelDims, ChannelRealization};
use crate::error::{Error, Result};
use crate::numeric::{adjoint, identity, kron, CMatrix, CVector, ZERO};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransceiverConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_tx_rf: usize,
    pub n_rx_rf: usize,
    pub n_streams: usize,
    pub n_f: usize,
    /// Pilot symbols per frame (`N_p`).
    pub n_frames: usize,
}

impl Default for TransceiverConfig {
    fn default() -> Self {
        Self { n_tx: 16, n_rx: 4, n_tx_rf: 4, n_rx_rf: 1, n_streams: 4, n_f: 16, n_frames: 4 }
    }
}

impl TransceiverConfig {
    /// One RF chain per antenna on both sides.
    pub fn fully_digital(n_tx: usize, n_rx: usize, n_f: usize, n_frames: usize) -> Self {
        Self { n_tx, n_rx, n_tx_rf: n_tx, n_rx_rf: n_rx, n_streams: n_tx, n_f, n_frames }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_tx_rf", self.n_tx_rf),
            ("n_rx_rf", self.n_rx_rf),
            ("n_streams", self.n_streams),
            ("n_f", self.n_f),
            ("n_frames", self.n_frames),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        if self.n_rx_rf > self.n_rx || self.n_tx_rf > self.n_tx || self.n_streams > self.n_tx_rf {
            return Err(Error::InvalidConfig(format!(
                "need n_rx_rf <= n_rx, n_tx_rf <= n_tx and n_streams <= n_tx_rf, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn channel_dims(&self) -> ChannelDims {
        ChannelDims { n_f: self.n_f, n_rx: self.n_rx, n_tx: self.n_tx }
    }

    pub fn is_fully_digital(&self) -> bool {
        self.n_tx_rf == self.n_tx && self.n_rx_rf == self.n_rx
    }
}

/// Pilot symbols `p[n,k]` over a frame plus the active-slot mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotFrame {
    pub n_frames: usize,
    pub n_f: usize,
    pub n_streams: usize,
    /// `[n][k][s]` flattened.
    pub symbols: Vec<Complex64>,
    /// `[n][k]` flattened, `true` where a pilot is sent.
    pub mask: Vec<bool>,
}

impl PilotFrame {
    pub fn symbol(&self, n: usize, k: usize) -> &[Complex64] {
        let base = (n * self.n_f + k) * self.n_streams;
        &self.symbols[base..base + self.n_streams]
    }

    pub fn is_active(&self, n: usize, k: usize) -> bool {
        self.mask[n * self.n_f + k]
    }

    /// Active `(frame, subcarrier)` slots in frame-major order.
    pub fn active_slots(&self) -> Vec<(usize, usize)> {
        (0..self.n_frames)
            .flat_map(|n| (0..self.n_f).map(move |k| (n, k)))
            .filter(|&(n, k)| self.is_active(n, k))
            .collect()
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Number of slots kept for pilot ratio `eta`.
pub fn active_slot_count(total: usize, eta: f64) -> usize {
    (((eta * total as f64) - 1e-9).ceil() as usize).clamp(1, total)
}

/// I.i.d. scaled-QPSK pilots `{+-1 +- i}/sqrt(2 N_s)` with `ceil(eta N_p N_f)`
/// active slots chosen uniformly without replacement.
pub fn sample_pilots(cfg: &TransceiverConfig, mask_ratio: f64, rng: &mut Rng) -> Result<PilotFrame> {
    cfg.validate()?;
    if !(mask_ratio > 0.0 && mask_ratio <= 1.0) {
        return Err(Error::InvalidConfig(format!("pilot ratio must lie in (0, 1], got {mask_ratio}")));
    }
    let amp = 1.0 / (2.0 * cfg.n_streams as f64).sqrt();
    let total = cfg.n_frames * cfg.n_f;
    let mut symbols: Vec<Complex64> = (0..total * cfg.n_streams)
        .map(|_| {
            let re = if rng.random::<bool>() { amp } else { -amp };
            let im = if rng.random::<bool>() { amp } else { -amp };
            Complex64::new(re, im)
        })
        .collect();
    let keep = active_slot_count(total, mask_ratio);
    let mut mask = vec![keep == total; total];
    if keep < total {
        for idx in rand::seq::index::sample(rng, total, keep) {
            mask[idx] = true;
        }
    }
    for (slot, &on) in mask.iter().enumerate() {
        if !on {
            symbols[slot * cfg.n_streams..(slot + 1) * cfg.n_streams].fill(ZERO);
        }
    }
    Ok(PilotFrame { n_frames: cfg.n_frames, n_f: cfg.n_f, n_streams: cfg.n_streams, symbols, mask })
}

/// One-bit analog networks: entries `+-1/sqrt(N_t)` and `+-1/sqrt(N_r)`.
pub fn sample_phase_networks(cfg: &TransceiverConfig, rng: &mut Rng) -> Result<(CMatrix, CMatrix)> {
    cfg.validate()?;
    let mut draw = |rows: usize, cols: usize, n: usize| {
        let a = 1.0 / (n as f64).sqrt();
        Array2::from_shape_fn((rows, cols), |_| Complex64::new(if rng.random::<bool>() { a } else { -a }, 0.0))
    };
    let f_rf = draw(cfg.n_tx, cfg.n_tx_rf, cfg.n_tx);
    let w_rf = draw(cfg.n_rx, cfg.n_rx_rf, cfg.n_rx);
    Ok((f_rf, w_rf))
}

/// Identity analog networks for a fully digital transceiver.
pub fn identity_networks(cfg: &TransceiverConfig) -> Result<(CMatrix, CMatrix)> {
    if !cfg.is_fully_digital() {
        return Err(Error::InvalidConfig("identity networks need one RF chain per antenna".into()));
    }
    Ok((identity(cfg.n_tx), identity(cfg.n_rx)))
}

#[derive(Debug, Clone)]
struct Slot {
    frame: usize,
    subcarrier: usize,
    /// `F_RF s[n,k]`, the effective transmit vector.
    tx: CVector,
}

/// The measurement map `h -> A h` in factored per-subcarrier form.
#[derive(Debug, Clone)]
pub struct MeasurementOperator {
    pub cfg: TransceiverConfig,
    pub pilots: PilotFrame,
    pub f_rf: CMatrix,
    pub w_rf: CMatrix,
    pub rho: f64,
    slots: Vec<Slot>,
    w_rf_h: CMatrix,
}

pub fn build_operator(
    pilots: PilotFrame,
    f_rf: CMatrix,
    w_rf: CMatrix,
    cfg: &TransceiverConfig,
) -> Result<MeasurementOperator> {
    cfg.validate()?;
    if f_rf.dim() != (cfg.n_tx, cfg.n_tx_rf) || w_rf.dim() != (cfg.n_rx, cfg.n_rx_rf) {
        return Err(Error::Shape(format!(
            "networks {:?}/{:?} do not match config {cfg:?}",
            f_rf.dim(),
            w_rf.dim()
        )));
    }
    if (pilots.n_frames, pilots.n_f, pilots.n_streams) != (cfg.n_frames, cfg.n_f, cfg.n_streams) {
        return Err(Error::Shape("pilot frame does not match config".into()));
    }
    let f_used = f_rf.slice(s![.., ..cfg.n_streams]).to_owned();
    let slots = pilots
        .active_slots()
        .into_iter()
        .map(|(n, k)| {
            let p = Array1::from(pilots.symbol(n, k).to_vec());
            Slot { frame: n, subcarrier: k, tx: f_used.dot(&p) }
        })
        .collect();
    let w_rf_h = adjoint(&w_rf);
    Ok(MeasurementOperator { cfg: cfg.clone(), pilots, f_rf, w_rf, rho: 1.0, slots, w_rf_h })
}

impl MeasurementOperator {
    pub fn dims(&self) -> ChannelDims {
        self.cfg.channel_dims()
    }

    pub fn n_rows(&self) -> usize {
        self.slots.len() * self.cfg.n_rx_rf
    }

    pub fn n_cols(&self) -> usize {
        self.dims().len()
    }

    /// `(frame, subcarrier)` of each block of `n_rx_rf` rows.
    pub fn row_slots(&self) -> Vec<(usize, usize)> {
        self.slots.iter().map(|s| (s.frame, s.subcarrier)).collect()
    }

    /// `sqrt(rho) A h` on the stacked channel vector.
    pub fn forward_vec(&self, h: &CVector) -> Result<CVector> {
        let dims = self.dims();
        if h.len() != dims.len() {
            return Err(Error::Shape(format!("channel vector {} != {}", h.len(), dims.len())));
        }
        let (nr, nt, nrf) = (dims.n_rx, dims.n_tx, self.cfg.n_rx_rf);
        let block = nr * nt;
        let amp = self.rho.sqrt();
        let mut out = Array1::from_elem(self.n_rows(), ZERO);
        let mut hx = vec![ZERO; nr];
        for (i, slot) in self.slots.iter().enumerate() {
            let hk = &h.as_slice().expect("contiguous")[slot.subcarrier * block..(slot.subcarrier + 1) * block];
            for (r, acc) in hx.iter_mut().enumerate() {
                *acc = hk[r * nt..(r + 1) * nt].iter().zip(slot.tx.iter()).map(|(a, b)| a * b).sum();
            }
            for j in 0..nrf {
                let v: Complex64 = (0..nr).map(|r| self.w_rf_h[(j, r)] * hx[r]).sum();
                out[i * nrf + j] = v * amp;
            }
        }
        Ok(out)
    }

    pub fn apply_forward(&self, channel: &ChannelRealization) -> Result<CVector> {
        channel.check_dims(self.dims())?;
        self.forward_vec(&channel.to_vector())
    }

    /// `sqrt(rho) A^H r` on the stacked channel vector.
    pub fn adjoint_vec(&self, residual: &CVector) -> Result<CVector> {
        if residual.len() != self.n_rows() {
            return Err(Error::Shape(format!("residual {} != {} rows", residual.len(), self.n_rows())));
        }
        let dims = self.dims();
        let (nr, nt, nrf) = (dims.n_rx, dims.n_tx, self.cfg.n_rx_rf);
        let block = nr * nt;
        let amp = self.rho.sqrt();
        let mut out = Array1::from_elem(dims.len(), ZERO);
        let out_s = out.as_slice_mut().expect("contiguous");
        for (i, slot) in self.slots.iter().enumerate() {
            let rs = &residual.as_slice().expect("contiguous")[i * nrf..(i + 1) * nrf];
            let hk = &mut out_s[slot.subcarrier * block..(slot.subcarrier + 1) * block];
            for r in 0..nr {
                // (W_RF r)_r
                let wr: Complex64 = (0..nrf).map(|j| self.w_rf[(r, j)] * rs[j]).sum::<Complex64>() * amp;
                for (t, g) in slot.tx.iter().enumerate() {
                    hk[r * nt + t] += wr * g.conj();
                }
            }
        }
        Ok(out)
    }

    pub fn apply_adjoint(&self, residual: &CVector) -> Result<ChannelRealization> {
        ChannelRealization::from_vector(self.dims(), &self.adjoint_vec(residual)?)
    }

    /// Dense rows of `A` restricted to subcarrier `k`: returns the row indices
    /// into the full measurement vector and the `rows x (N_r N_t)` block.
    pub fn subcarrier_block(&self, k: usize) -> (Vec<usize>, CMatrix) {
        let dims = self.dims();
        let (nr, nt, nrf) = (dims.n_rx, dims.n_tx, self.cfg.n_rx_rf);
        let amp = self.rho.sqrt();
        let mut rows = Vec::new();
        let mut data = Vec::new();
        for (i, slot) in self.slots.iter().enumerate().filter(|(_, s)| s.subcarrier == k) {
            for j in 0..nrf {
                rows.push(i * nrf + j);
                for r in 0..nr {
                    let w = self.w_rf_h[(j, r)] * amp;
                    data.extend(slot.tx.iter().map(|g| w * g));
                }
            }
        }
        let m = Array2::from_shape_vec((rows.len(), nr * nt), data).expect("block shape");
        (rows, m)
    }

    /// Full dense `sqrt(rho) A` assembled from the per-subcarrier blocks.
    pub fn dense_matrix(&self) -> CMatrix {
        let dims = self.dims();
        let block = dims.n_rx * dims.n_tx;
        let mut out = Array2::from_elem((self.n_rows(), self.n_cols()), ZERO);
        for k in 0..dims.n_f {
            let (rows, m) = self.subcarrier_block(k);
            for (ri, &row) in rows.iter().enumerate() {
                out.slice_mut(s![row, k * block..(k + 1) * block]).assign(&m.row(ri));
            }
        }
        out
    }

    /// Per-entry mean received signal power for a channel with unit mean
    /// entry power: `(1/N_s) * mean_j ||w_j||^2 * sum_{s < N_s} ||f_s||^2`.
    pub fn signal_power(&self) -> f64 {
        let nrf = self.cfg.n_rx_rf as f64;
        let w_pow: f64 = self.w_rf.iter().map(|z| z.norm_sqr()).sum::<f64>() / nrf;
        let f_pow: f64 = self.f_rf.slice(s![.., ..self.cfg.n_streams]).iter().map(|z| z.norm_sqr()).sum();
        self.rho * w_pow * f_pow / self.cfg.n_streams as f64
    }

    /// Noise variance giving `snr_db` against [`Self::signal_power`].
    pub fn noise_variance(&self, snr_db: f64) -> f64 {
        if snr_db == f64::INFINITY {
            0.0
        } else {
            self.signal_power() / 10f64.powf(snr_db / 10.0)
        }
    }

    /// `E[w w^H] / sigma^2` for one slot: `W_RF^H W_RF`.
    pub fn combiner_gram(&self) -> CMatrix {
        self.w_rf_h.dot(&self.w_rf)
    }
}

/// Builds `A` verbatim from the Kronecker expression
/// `A[n] = s[n]^T (I ⊗ F_RF^T) ⊗ (I ⊗ W_RF^H)` acting on `vec(H)` of the
/// block-diagonal channel, then keeps the rows of active slots and the
/// columns on the diagonal blocks (in stacked-channel order).
pub fn kronecker_reference_matrix(op: &MeasurementOperator) -> Result<CMatrix> {
    let cfg = &op.cfg;
    let dims = op.dims();
    let (nf, nr, nt, ntrf, nrrf) = (dims.n_f, dims.n_rx, dims.n_tx, cfg.n_tx_rf, cfg.n_rx_rf);
    let tx_side = kron(&identity(nf), &op.f_rf.t().to_owned())?;
    let rx_side = kron(&identity(nf), &adjoint(&op.w_rf))?;
    let big_rows = nf * nr;
    let col_of = |k: usize, r: usize, t: usize| (k * nt + t) * big_rows + k * nr + r;
    let mut rows = Vec::new();
    for n in 0..cfg.n_frames {
        let mut s_n = Array2::from_elem((1, nf * ntrf), ZERO);
        for k in 0..nf {
            for (q, p) in op.pilots.symbol(n, k).iter().enumerate() {
                s_n[(0, k * ntrf + q)] = *p;
            }
        }
        let a_n = kron(&s_n.dot(&tx_side), &rx_side)?;
        for k in 0..nf {
            if !op.pilots.is_active(n, k) {
                continue;
            }
            for j in 0..nrrf {
                let full = a_n.row(k * nrrf + j);
                let mut row = Vec::with_capacity(dims.len());
                for kk in 0..nf {
                    for r in 0..nr {
                        for t in 0..nt {
                            row.push(full[col_of(kk, r, t)] * op.rho.sqrt());
                        }
                    }
                }
                rows.push(row);
            }
        }
    }
    let n_rows = rows.len();
    Array2::from_shape_vec((n_rows, dims.len()), rows.concat()).map_err(|e| Error::Shape(e.to_string()))
}

/// A noisy observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignal {
    pub y: CVector,
    pub noise_var: f64,
}

fn complex_normal(rng: &mut Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Adds receiver noise at `snr_db` (pass `f64::INFINITY` for none).
///
/// Noise is white with variance `sigma^2` per receive antenna before the
/// analog combiner, so each slot sees `W_RF^H v` with covariance
/// `sigma^2 W_RF^H W_RF`.
pub fn add_awgn(op: &MeasurementOperator, clean: &CVector, snr_db: f64, rng: &mut Rng) -> Result<ReceivedSignal> {
    if clean.len() != op.n_rows() {
        return Err(Error::Shape(format!("signal length {} != {} rows", clean.len(), op.n_rows())));
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidConfig("SNR is NaN".into()));
    }
    let noise_var = op.noise_variance(snr_db);
    if noise_var == 0.0 {
        return Ok(ReceivedSignal { y: clean.clone(), noise_var });
    }
    let (nr, nrf) = (op.cfg.n_rx, op.cfg.n_rx_rf);
    let mut y = clean.clone();
    let mut v = Array1::from_elem(nr, ZERO);
    for slot in 0..op.slots.len() {
        v.iter_mut().for_each(|z| *z = complex_normal(rng, noise_var));
        let w = op.w_rf_h.dot(&v);
        for j in 0..nrf {
            y[slot * nrf + j] += w[j];
        }
    }
    Ok(ReceivedSignal { y, noise_var })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, ClusterRayConfig};
    use crate::numeric::{frobenius_norm, inner, vector_norm};
    use rand::SeedableRng;

    fn small_cfg() -> TransceiverConfig {
        TransceiverConfig { n_tx: 8, n_rx: 2, n_tx_rf: 2, n_rx_rf: 1, n_streams: 2, n_f: 4, n_frames: 3 }
    }

    fn random_channel(dims: ChannelDims, rng: &mut Rng) -> ChannelRealization {
        let v: CVector = (0..dims.len()).map(|_| complex_normal(rng, 1.0)).collect();
        ChannelRealization::from_vector(dims, &v).unwrap()
    }

    fn random_op(cfg: &TransceiverConfig, eta: f64, seed: u64) -> MeasurementOperator {
        let mut rng = Rng::seed_from_u64(seed);
        let pilots = sample_pilots(cfg, eta, &mut rng).unwrap();
        let (f, w) = sample_phase_networks(cfg, &mut rng).unwrap();
        build_operator(pilots, f, w, cfg).unwrap()
    }

    #[test]
    fn full_ratio_activates_everything() {
        let cfg = small_cfg();
        let p = sample_pilots(&cfg, 1.0, &mut Rng::seed_from_u64(1)).unwrap();
        assert!(p.mask.iter().all(|&m| m));
        let amp = 1.0 / (2.0 * cfg.n_streams as f64).sqrt();
        assert!(p.symbols.iter().all(|z| z.re.abs() == amp && z.im.abs() == amp));
        assert!(sample_pilots(&cfg, 0.0, &mut Rng::seed_from_u64(1)).is_err());
        assert!(sample_pilots(&cfg, -0.5, &mut Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn masked_slots_are_zero_and_counted() {
        let cfg = small_cfg();
        let p = sample_pilots(&cfg, 0.3, &mut Rng::seed_from_u64(2)).unwrap();
        assert_eq!(p.active_count(), 4); // ceil(0.3 * 12)
        for n in 0..cfg.n_frames {
            for k in 0..cfg.n_f {
                if !p.is_active(n, k) {
                    assert!(p.symbol(n, k).iter().all(|z| *z == ZERO));
                }
            }
        }
        let op = random_op(&cfg, 0.3, 2);
        assert_eq!(op.n_rows(), 4 * cfg.n_rx_rf);
    }

    #[test]
    fn pilots_zero_mean_monte_carlo() {
        let cfg = TransceiverConfig { n_frames: 50, n_f: 50, ..small_cfg() };
        let mut rng = Rng::seed_from_u64(3);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut count = 0usize;
        while count < 100_000 {
            let p = sample_pilots(&cfg, 1.0, &mut rng).unwrap();
            for z in &p.symbols {
                sum += z;
            }
            count += p.symbols.len();
        }
        let mean = sum / count as f64;
        assert!(mean.norm() < 0.01, "mean {mean}");
    }

    #[test]
    fn pilot_second_moment_is_scaled_identity() {
        let cfg = TransceiverConfig { n_streams: 4, n_tx_rf: 4, n_frames: 100, n_f: 100, ..small_cfg() };
        let p = sample_pilots(&cfg, 1.0, &mut Rng::seed_from_u64(4)).unwrap();
        let ns = cfg.n_streams;
        let mut acc = Array2::from_elem((ns, ns), ZERO);
        let draws = cfg.n_frames * cfg.n_f;
        for n in 0..cfg.n_frames {
            for k in 0..cfg.n_f {
                let v = p.symbol(n, k);
                for i in 0..ns {
                    for j in 0..ns {
                        acc[(i, j)] += v[i] * v[j].conj();
                    }
                }
            }
        }
        let target = 1.0 / ns as f64;
        for ((i, j), z) in acc.indexed_iter() {
            let m = *z / draws as f64;
            if i == j {
                assert!((m.re - target).abs() < 1e-12);
            } else {
                assert!(m.norm() < 0.02 * target * 2.0, "off-diagonal {m}");
            }
        }
    }

    #[test]
    fn phase_networks_constant_modulus_and_balanced() {
        let cfg = TransceiverConfig { n_tx: 64, n_tx_rf: 4, n_streams: 4, ..small_cfg() };
        let mut rng = Rng::seed_from_u64(5);
        let mut plus = 0usize;
        let mut total = 0usize;
        for _ in 0..100 {
            let (f, w) = sample_phase_networks(&cfg, &mut rng).unwrap();
            let a = 1.0 / (cfg.n_tx as f64).sqrt();
            assert!(f.iter().all(|z| z.im == 0.0 && z.re.abs() == a));
            let b = 1.0 / (cfg.n_rx as f64).sqrt();
            assert!(w.iter().all(|z| z.im == 0.0 && z.re.abs() == b));
            plus += f.iter().filter(|z| z.re > 0.0).count();
            total += f.len();
        }
        let frac = plus as f64 / total as f64;
        assert!((0.45..=0.55).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn identity_transceiver_selects_first_column() {
        let cfg = TransceiverConfig { n_tx: 3, n_rx: 2, n_tx_rf: 3, n_rx_rf: 2, n_streams: 3, n_f: 1, n_frames: 1 };
        let mut symbols = vec![ZERO; 3];
        symbols[0] = Complex64::new(1.0, 0.0);
        let pilots = PilotFrame { n_frames: 1, n_f: 1, n_streams: 3, symbols, mask: vec![true] };
        let (f, w) = identity_networks(&cfg).unwrap();
        let op = build_operator(pilots, f, w, &cfg).unwrap();
        let a = op.dense_matrix();
        // e_1^T ⊗ I acting on the stacked (r, t) layout picks H[:, 0]
        let mut rng = Rng::seed_from_u64(6);
        let ch = random_channel(cfg.channel_dims(), &mut rng);
        let y = op.apply_forward(&ch).unwrap();
        assert_eq!(a.dim(), (2, 6));
        for r in 0..2 {
            assert!((y[r] - ch.per_subcarrier[0][(r, 0)]).norm() < 1e-15);
        }
    }

    #[test]
    fn forward_matches_kronecker_reference() {
        // 8 tx x 2 rx x 4 subcarriers
        for (seed, eta) in [(7u64, 1.0), (8, 0.5)] {
            let cfg = small_cfg();
            let op = random_op(&cfg, eta, seed);
            let reference = kronecker_reference_matrix(&op).unwrap();
            assert!(frobenius_norm(&(&reference - &op.dense_matrix())) < 1e-12);
            let mut rng = Rng::seed_from_u64(seed);
            let h = random_channel(op.dims(), &mut rng).to_vector();
            let y = op.forward_vec(&h).unwrap();
            let err = vector_norm(&(&y - &reference.dot(&h))) / vector_norm(&y);
            assert!(err < 1e-10, "err {err}");
        }
    }

    #[test]
    fn forward_is_linear() {
        let op = random_op(&small_cfg(), 1.0, 9);
        let dims = op.dims();
        let zero = op.apply_forward(&ChannelRealization::zeros(dims)).unwrap();
        assert!(zero.iter().all(|z| *z == ZERO));
        let mut rng = Rng::seed_from_u64(10);
        let a = random_channel(dims, &mut rng).to_vector();
        let b = random_channel(dims, &mut rng).to_vector();
        let lhs = op.forward_vec(&(&a + &b)).unwrap();
        let rhs = op.forward_vec(&a).unwrap() + op.forward_vec(&b).unwrap();
        assert!(vector_norm(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn adjoint_identity_and_dense() {
        let op = random_op(&small_cfg(), 0.75, 11);
        let dense_h = adjoint(&op.dense_matrix());
        let mut rng = Rng::seed_from_u64(12);
        for _ in 0..20 {
            let h = random_channel(op.dims(), &mut rng).to_vector();
            let r: CVector = (0..op.n_rows()).map(|_| complex_normal(&mut rng, 1.0)).collect();
            let lhs = inner(&op.forward_vec(&h).unwrap(), &r);
            let rhs = inner(&h, &op.adjoint_vec(&r).unwrap());
            assert!((lhs - rhs).norm() / lhs.norm() < 1e-10);
            let d = dense_h.dot(&r);
            assert!(vector_norm(&(&d - &op.adjoint_vec(&r).unwrap())) < 1e-10 * vector_norm(&d));
        }
        let g = op.apply_adjoint(&Array1::from_elem(op.n_rows(), ZERO)).unwrap();
        assert_eq!(g.energy(), 0.0);
        assert!(op.adjoint_vec(&Array1::from_elem(3, ZERO)).is_err());
    }

    #[test]
    fn awgn_snr_and_determinism() {
        let cfg = TransceiverConfig { n_frames: 40, n_f: 64, n_rx_rf: 2, ..small_cfg() };
        let op = random_op(&cfg, 1.0, 13);
        let clean = Array1::from_elem(op.n_rows(), ZERO);
        assert!((op.signal_power() - 1.0).abs() < 1e-12);
        let r = add_awgn(&op, &clean, 7.0, &mut Rng::seed_from_u64(14)).unwrap();
        let noise_pow = r.y.iter().map(|z| z.norm_sqr()).sum::<f64>() / r.y.len() as f64;
        let snr = 10.0 * (op.signal_power() / noise_pow).log10();
        assert!((snr - 7.0).abs() < 0.2, "snr {snr}");
        let again = add_awgn(&op, &clean, 7.0, &mut Rng::seed_from_u64(14)).unwrap();
        assert_eq!(r, again);
        let pass = add_awgn(&op, &clean, f64::INFINITY, &mut Rng::seed_from_u64(14)).unwrap();
        assert_eq!(pass.y, clean);
        assert_eq!(pass.noise_var, 0.0);
    }

    #[test]
    fn signal_power_matches_channel_model() {
        let ch_cfg = ClusterRayConfig { n_tx_h: 4, n_tx_v: 2, n_rx_h: 2, n_rx_v: 1, n_subcarriers: 4, n_taps: 2, ..Default::default() };
        let cfg = small_cfg();
        let mut rng = Rng::seed_from_u64(15);
        let mut acc = 0.0;
        let mut n = 0usize;
        for _ in 0..400 {
            let op = random_op(&cfg, 1.0, rng.random());
            let ch = sample_channel(&ch_cfg, &mut rng).unwrap();
            let y = op.apply_forward(&ch).unwrap();
            acc += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
            n += y.len();
        }
        let empirical = acc / n as f64;
        assert!((empirical / 1.0 - 1.0).abs() < 0.1, "empirical {empirical}");
    }
}
