//! ESPRIT on DFT-beamspace observations.
//!
//! With `u_p = e^{−j2πp/M}` and `z = e^{jν}`, the response of DFT beam `p`
//! to a source at `ν` satisfies `b_p·(1 − z·u_p) = (1 − z^M)/√M` for every
//! `p`. Taking differences of neighbouring beams gives the shift relation
//!
//! ```text
//! b_p − b_{p+1} = z·(u_p·b_p − u_{p+1}·b_{p+1})
//! ```
//!
//! which holds exactly for any number of consecutive beams. Stacking it over
//! `p = 0..B−2` yields two selection matrices `J1`, `J2` with
//! `J1·S = J2·S·diag(z)` for the beamspace steering matrix `S`, so the usual
//! subspace machinery applies as soon as `B − 1 ≥ L`.

use crate::chanmodel::{wrap, Sector, SystemConfig};
use crate::error::{Error, Result};
use crate::numkit::{dominant_left_subspace, lstsq_mat, rank1_approx, schur, CMatrix, CVector, C64};
use crate::training::{validate_config, Method};
use std::f64::consts::PI;

/// Relative singular-value floor below which the signal subspace is deemed
/// rank deficient.
const RANK_RTOL: f64 = 1e-10;

/// Mixing weight for the second axis in the pairing operator. Any complex
/// value that keeps the combined eigenvalues apart will do.
fn pairing_weight() -> C64 {
    C64::from_polar(0.5, 0.3)
}

/// Observations on the first `beams` rows of an `m`-point DFT.
#[derive(Debug, Clone)]
pub struct BeamspaceObs {
    /// `beams × snapshots`.
    pub data: CMatrix,
    pub m: usize,
    pub axis: &'static str,
}

impl BeamspaceObs {
    pub fn new(data: CMatrix, m: usize, axis: &'static str) -> Result<Self> {
        if data.nrows() > m || data.nrows() == 0 {
            return Err(Error::dims(
                "beamspace observation",
                format!("{} beams from a {m}-point DFT", data.nrows()),
            ));
        }
        Ok(BeamspaceObs { data, m, axis })
    }

    pub fn beams(&self) -> usize {
        self.data.nrows()
    }

    pub fn sector(&self) -> Option<Sector> {
        Sector::visible(self.beams(), self.m).ok()
    }
}

/// Position of one beam axis inside a stacked row index
/// `(outer·beams + p)·inner + i`.
#[derive(Debug, Clone, Copy)]
struct Axis {
    outer: usize,
    beams: usize,
    inner: usize,
    m: usize,
}

impl Axis {
    fn rows(&self) -> usize {
        self.outer * self.beams * self.inner
    }

    /// `(J1, J2)`, each `outer·(beams−1)·inner × rows`.
    fn selections(&self) -> (CMatrix, CMatrix) {
        let out_rows = self.outer * (self.beams - 1) * self.inner;
        let mut j1 = CMatrix::zeros(out_rows, self.rows());
        let mut j2 = CMatrix::zeros(out_rows, self.rows());
        let one = C64::new(1.0, 0.0);
        let u = |p: usize| C64::from_polar(1.0, -2.0 * PI * p as f64 / self.m as f64);
        for o in 0..self.outer {
            for p in 0..self.beams - 1 {
                for i in 0..self.inner {
                    let r = (o * (self.beams - 1) + p) * self.inner + i;
                    let c0 = (o * self.beams + p) * self.inner + i;
                    let c1 = c0 + self.inner;
                    j1[(r, c0)] = one;
                    j1[(r, c1)] = -one;
                    j2[(r, c0)] = u(p);
                    j2[(r, c1)] = -u(p + 1);
                }
            }
        }
        (j1, j2)
    }

    /// Least-squares solution `Ψ` of `J2·Es·Ψ = J1·Es`.
    fn shift_operator(&self, es: &CMatrix) -> Result<CMatrix> {
        let (j1, j2) = self.selections();
        lstsq_mat(&(&j2 * es), &(&j1 * es))
    }
}

fn signal_subspace(data: &CMatrix, l: usize) -> Result<CMatrix> {
    if l == 0 {
        return Err(Error::InvalidConfig("model order must be positive".into()));
    }
    let (es, s) = dominant_left_subspace(data, l)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| x > RANK_RTOL * smax).count();
    if smax == 0.0 || rank < l {
        return Err(Error::RankDeficient { rank, needed: l });
    }
    Ok(es)
}

fn warn_outside(freqs: &[f64], sector: Option<Sector>, axis: &str) {
    if let Some(s) = sector {
        for &f in freqs.iter().filter(|&&f| !s.contains(f)) {
            log::warn!(
                "{axis}: estimate {f:.4} outside visible sector [{:.4}, {:.4}); beamspace ESPRIT is not reliable there",
                s.lo,
                s.hi
            );
        }
    }
}

/// Estimates `l` frequencies in `[0, 2π)`, sorted ascending.
pub fn esprit_1d(obs: &BeamspaceObs, l: usize) -> Result<Vec<f64>> {
    if obs.beams() < l + 1 {
        return Err(Error::InvalidConfig(format!(
            "{}: {} beams cannot resolve {l} sources",
            obs.axis,
            obs.beams()
        )));
    }
    if obs.data.ncols() == 0 {
        return Err(Error::Degenerate("no snapshots".into()));
    }
    let es = signal_subspace(&obs.data, l)?;
    let axis = Axis {
        outer: 1,
        beams: obs.beams(),
        inner: 1,
        m: obs.m,
    };
    let (_, t) = schur(&axis.shift_operator(&es)?);
    let mut freqs: Vec<f64> = t.diagonal().iter().map(|z| wrap(z.arg())).collect();
    freqs.sort_by(f64::total_cmp);
    warn_outside(&freqs, obs.sector(), obs.axis);
    Ok(freqs)
}

/// Paired `(ψ_T, ψ_R)` estimates from the `(N_R·K_T) × K_S` training block,
/// `l_t·l_r` of them, sorted by `ψ_T` then `ψ_R`.
///
/// Both shift operators are diagonalised by the same basis. A generic
/// combination of the two has distinct eigenvalues, so its Schur basis
/// triangularises each operator on its own and the diagonals line up path
/// by path.
pub fn esprit_2d_stage1(y: &CMatrix, cfg: &SystemConfig, l_t: usize, l_r: usize) -> Result<Vec<(f64, f64)>> {
    let cfg = SystemConfig { l_t, l_r, ..*cfg };
    let report = validate_config(&cfg, &Method::TriceBes);
    if !report.is_valid() {
        let names: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
        return Err(Error::InvalidConfig(format!("failed checks: {}", names.join(", "))));
    }
    if y.nrows() != cfg.n_r * cfg.k_t {
        return Err(Error::dims(
            "esprit_2d_stage1",
            format!("{} rows, expected N_R*K_T = {}", y.nrows(), cfg.n_r * cfg.k_t),
        ));
    }
    let l = cfg.l();
    let es = signal_subspace(y, l)?;
    let t_axis = Axis {
        outer: 1,
        beams: cfg.k_t,
        inner: cfg.n_r,
        m: cfg.m_t,
    };
    let r_axis = Axis {
        outer: cfg.k_t,
        beams: cfg.n_r,
        inner: 1,
        m: cfg.m_r,
    };
    let psi_t = t_axis.shift_operator(&es)?;
    let psi_r = r_axis.shift_operator(&es)?;
    let (u, _) = schur(&(&psi_t + &psi_r * pairing_weight()));
    let dt = (u.adjoint() * &psi_t * &u).diagonal();
    let dr = (u.adjoint() * &psi_r * &u).diagonal();
    let mut pairs: Vec<(f64, f64)> = dt.iter().zip(dr.iter()).map(|(a, b)| (wrap(a.arg()), wrap(b.arg()))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let ts: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    warn_outside(&ts, Sector::visible(cfg.k_t, cfg.m_t).ok(), "psi_T");
    warn_outside(&rs, Sector::visible(cfg.n_r, cfg.m_r).ok(), "psi_R");
    Ok(pairs)
}

/// `(μ_v, μ_h)` of a single path from its length-`K_S` stage-2 vector.
///
/// Entry `s_v·K_S_h + s_h` of `y_n` is `b^v_{s_v}·b^h_{s_h}`, so the
/// column-major `K_S_h × K_S_v` reshape is the rank-one matrix
/// `b^h·(b^v)^T`; its dominant singular pair carries both beam vectors.
pub fn esprit_2d_stage2(y_n: &CVector, cfg: &SystemConfig) -> Result<(f64, f64)> {
    if y_n.len() != cfg.k_s() {
        return Err(Error::dims(
            "esprit_2d_stage2",
            format!("length {}, expected K_S = {}", y_n.len(), cfg.k_s()),
        ));
    }
    if cfg.k_s_v < 2 || cfg.k_s_h < 2 {
        return Err(Error::InvalidConfig("need at least two RIS beams per axis".into()));
    }
    if y_n.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::Degenerate("zero stage-2 vector".into()));
    }
    let mat = CMatrix::from_column_slice(cfg.k_s_h, cfg.k_s_v, y_n.as_slice());
    let r1 = rank1_approx(&mat);
    let col = |v: CVector| CMatrix::from_column_slice(v.len(), 1, v.as_slice());
    let h = esprit_1d(&BeamspaceObs::new(col(r1.u), cfg.m_s_h, "mu_h")?, 1)?;
    let v = esprit_1d(&BeamspaceObs::new(col(r1.v.map(|z| z.conj())), cfg.m_s_v, "mu_v")?, 1)?;
    Ok((v[0], h[0]))
}
