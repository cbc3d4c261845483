//! Received training block, noise calibration and the NMSE metric.

use rand::Rng;

use crate::chanmodel::{complex_normal, ChannelSet, SystemConfig};
use crate::error::{Error, Result};
use crate::numkit::{fro2, kron, CMatrix};
use crate::training::TrainingSet;

/// Noisy training block together with its noiseless counterpart.
#[derive(Debug, Clone)]
pub struct MeasurementBlock {
    /// `(N_R·K_T) × K_S`.
    pub y: CMatrix,
    pub y0: CMatrix,
    pub sigma2: f64,
    pub snr_db: f64,
}

/// Noiseless block `Y0 = (F^T ⊗ W^T)·H·Q`.
pub fn synthesize(cfg: &SystemConfig, ch: &ChannelSet, train: &TrainingSet) -> Result<CMatrix> {
    let expect = (cfg.m_r * cfg.m_t, cfg.m_s());
    if ch.h.shape() != expect {
        return Err(Error::dims(
            "synthesize",
            format!("H is {:?}, config expects {:?}", ch.h.shape(), expect),
        ));
    }
    if train.f.nrows() != cfg.m_t || train.w.nrows() != cfg.m_r || train.q.nrows() != cfg.m_s() {
        return Err(Error::dims("synthesize", "training set does not match config"));
    }
    let front = kron(&train.f.transpose(), &train.w.transpose());
    Ok(front * &ch.h * &train.q)
}

/// Adds circularly-symmetric white Gaussian noise at `snr_db`.
///
/// The noise variance is calibrated on the realised block:
/// `σ² = ‖Y0‖²_F / (10^{snr/10} · entries)`. `f64::INFINITY` means no
/// noise. The draws are unit-variance normals scaled by `σ`, so one seed
/// yields the same noise shape at every SNR.
pub fn add_noise(y0: &CMatrix, snr_db: f64, rng: &mut impl Rng) -> Result<MeasurementBlock> {
    if snr_db == f64::INFINITY {
        return Ok(MeasurementBlock {
            y: y0.clone(),
            y0: y0.clone(),
            sigma2: 0.0,
            snr_db,
        });
    }
    if snr_db.is_nan() {
        return Err(Error::Degenerate("SNR is NaN".into()));
    }
    let power = fro2(y0);
    if power == 0.0 {
        return Err(Error::Degenerate(
            "cannot calibrate a finite SNR on an all-zero block".into(),
        ));
    }
    let entries = y0.len() as f64;
    let sigma2 = power / (10f64.powf(snr_db / 10.0) * entries);
    let sigma = sigma2.sqrt();
    let (rows, cols) = y0.shape();
    let z = CMatrix::from_fn(rows, cols, |_, _| complex_normal(rng) * sigma);
    Ok(MeasurementBlock {
        y: y0 + z,
        y0: y0.clone(),
        sigma2,
        snr_db,
    })
}

/// `‖H − Ĥ‖²_F / ‖H‖²_F`.
pub fn nmse(h_true: &CMatrix, h_hat: &CMatrix) -> Result<f64> {
    if h_true.shape() != h_hat.shape() {
        return Err(Error::dims(
            "nmse",
            format!("{:?} vs {:?}", h_true.shape(), h_hat.shape()),
        ));
    }
    let denom = fro2(h_true);
    if denom == 0.0 {
        return Err(Error::Degenerate("reference channel is zero".into()));
    }
    Ok(fro2(&(h_true - h_hat)) / denom)
}

/// Per-subframe synthesis straight from the received-signal model
/// `y_{s,t} = W^T H_R diag(q_s) H_T f_t`, stacked over `t` then `s`.
/// Slow; meant for cross-checking [`synthesize`].
pub fn synthesize_by_subframe(ch: &ChannelSet, train: &TrainingSet) -> CMatrix {
    let n_r = train.w.ncols();
    let k_t = train.f.ncols();
    let k_s = train.q.ncols();
    let mut y = CMatrix::zeros(n_r * k_t, k_s);
    for s in 0..k_s {
        let dq = CMatrix::from_diagonal(&train.q.column(s).into_owned());
        let inner = train.w.transpose() * &ch.h_r * dq * &ch.h_t;
        for t in 0..k_t {
            let ys = &inner * train.f.column(t);
            for r in 0..n_r {
                y[(t * n_r + r, s)] = ys[r];
            }
        }
    }
    y
}
