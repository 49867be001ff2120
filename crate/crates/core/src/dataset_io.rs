//! Binary channel dataset files.
//!
//! Layout, all little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `"GCHD"` | 4 bytes |
//! | version (= 1) | u16 |
//! | n_tx, n_rx, n_f, n_taps, count | u32 each |
//! | master_seed | u64 |
//! | config scalars (see [`CONFIG_SCALARS`]) | 10 x f64 |
//! | payload | `count` realizations, each `H_0..H_{n_f-1}` row-major, (re, im) f64 pairs |

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::channel::{ChannelDataset, ChannelDims, ChannelRealization, ClusterRayConfig};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GCHD";
pub const VERSION: u16 = 1;

/// Order of the f64 config block in the header.
pub const CONFIG_SCALARS: [&str; 10] = [
    "n_clusters",
    "n_rays",
    "angle_spread_deg",
    "delay_profile_decay",
    "antenna_spacing_wavelengths",
    "gain_truncation_sigma",
    "n_tx_h",
    "n_tx_v",
    "n_rx_h",
    "n_rx_v",
];

const HEADER_LEN: usize = 4 + 2 + 5 * 4 + 8 + 10 * 8;

pub fn encode_dataset(ds: &ChannelDataset) -> Result<Vec<u8>> {
    let cfg = &ds.config;
    let dims = ds.dims();
    for r in &ds.realizations {
        r.check_dims(dims)?;
    }
    let to_u32 = |v: usize, what: &str| -> Result<u32> {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} does not fit in u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * dims.len() * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (v, what) in [
        (dims.n_tx, "n_tx"),
        (dims.n_rx, "n_rx"),
        (dims.n_f, "n_f"),
        (cfg.n_taps, "n_taps"),
        (ds.len(), "count"),
    ] {
        out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    out.extend_from_slice(&ds.master_seed.to_le_bytes());
    let scalars = [
        cfg.n_clusters as f64,
        cfg.n_rays as f64,
        cfg.angle_spread_deg,
        cfg.delay_profile_decay,
        cfg.antenna_spacing_wavelengths,
        cfg.gain_truncation_sigma,
        cfg.n_tx_h as f64,
        cfg.n_tx_v as f64,
        cfg.n_rx_h as f64,
        cfg.n_rx_v as f64,
    ];
    for s in scalars {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for r in &ds.realizations {
        for h in &r.per_subcarrier {
            for z in h.iter() {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("truncated file: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn count_from_f64(v: f64, what: &str) -> Result<usize> {
    if v.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&v) {
        return Err(Error::Format(format!("{what} = {v} is not a valid count")));
    }
    Ok(v as usize)
}

pub fn decode_dataset(buf: &[u8]) -> Result<ChannelDataset> {
    let mut rd = Reader { buf, pos: 0 };
    if rd.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected GCHD".into()));
    }
    let version = rd.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let n_tx = rd.u32()? as usize;
    let n_rx = rd.u32()? as usize;
    let n_f = rd.u32()? as usize;
    let n_taps = rd.u32()? as usize;
    let count = rd.u32()? as usize;
    let master_seed = rd.u64()?;
    let mut s = [0.0; 10];
    for v in s.iter_mut() {
        *v = rd.f64()?;
    }
    let config = ClusterRayConfig {
        n_clusters: count_from_f64(s[0], "n_clusters")?,
        n_rays: count_from_f64(s[1], "n_rays")?,
        angle_spread_deg: s[2],
        delay_profile_decay: s[3],
        antenna_spacing_wavelengths: s[4],
        gain_truncation_sigma: s[5],
        n_tx_h: count_from_f64(s[6], "n_tx_h")?,
        n_tx_v: count_from_f64(s[7], "n_tx_v")?,
        n_rx_h: count_from_f64(s[8], "n_rx_h")?,
        n_rx_v: count_from_f64(s[9], "n_rx_v")?,
        n_subcarriers: n_f,
        n_taps,
    };
    if config.n_tx() != n_tx || config.n_rx() != n_rx {
        return Err(Error::Format(format!(
            "array shape {}x{} / {}x{} disagrees with n_tx={n_tx}, n_rx={n_rx}",
            config.n_tx_h, config.n_tx_v, config.n_rx_h, config.n_rx_v
        )));
    }
    config.validate().map_err(|e| Error::Format(format!("invalid config in header: {e}")))?;
    let dims = ChannelDims { n_f, n_rx, n_tx };
    let expected = count
        .checked_mul(dims.len())
        .and_then(|n| n.checked_mul(16))
        .ok_or_else(|| Error::Format("header dims overflow".into()))?;
    let remaining = buf.len() - rd.pos;
    if remaining != expected {
        return Err(Error::Format(format!(
            "payload is {remaining} bytes but header dims require {expected}"
        )));
    }
    let mut realizations = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = Vec::with_capacity(dims.len());
        for _ in 0..dims.len() {
            let re = rd.f64()?;
            let im = rd.f64()?;
            v.push(Complex64::new(re, im));
        }
        realizations.push(ChannelRealization::from_vector(dims, &v.into())?);
    }
    Ok(ChannelDataset { config, realizations, master_seed })
}

pub fn save_dataset(ds: &ChannelDataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<ChannelDataset> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_dataset;

    fn tiny() -> ChannelDataset {
        let cfg = ClusterRayConfig {
            n_clusters: 2,
            n_rays: 1,
            n_tx_h: 2,
            n_tx_v: 1,
            n_rx_h: 1,
            n_rx_v: 1,
            n_subcarriers: 2,
            n_taps: 1,
            ..Default::default()
        };
        generate_dataset(&cfg, 3, 77).unwrap()
    }

    #[test]
    fn roundtrip_through_file() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.gchd");
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = encode_dataset(&tiny()).unwrap();
        for cut in [3, 10, HEADER_LEN - 1, bytes.len() - 1] {
            assert!(matches!(decode_dataset(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn header_payload_mismatch_rejected() {
        let mut bytes = encode_dataset(&tiny()).unwrap();
        // bump the count field
        bytes[22..26].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(decode_dataset(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_dataset(&tiny()).unwrap();
        bytes.extend_from_slice(&[0u8; 16]);
        assert!(matches!(decode_dataset(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_dataset(&tiny()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_dataset(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_dataset(&tiny()).unwrap();
        bytes[4] = 9;
        assert!(matches!(decode_dataset(&bytes), Err(Error::Format(_))));
    }
}
