//! The two-stage estimator and the two baselines.
//!
//! Stage 1 finds the BS and MS frequencies from the training block, stage 2
//! projects the block onto the estimated link subspace and reads the RIS
//! frequencies and path gains off one length-`K_S` vector per path. The
//! cascaded channel is then rebuilt from the parameters and split into its
//! two link factors.
//!
//! The least-squares and joint 4D sparse-recovery baselines return the same
//! report type so the harness can treat all methods alike.

use std::time::{Duration, Instant};

use crate::chanmodel::{ris_response, steering_1d, steering_matrix, SystemConfig};
use crate::error::{Error, Result};
use crate::espritkit::{esprit_2d_stage1, esprit_2d_stage2};
use crate::numkit::{
    khatri_rao, kron, kron_vec, numerical_rank, pinv, rank1_approx, unvec, vec, CMatrix, CVector, C64, PINV_RTOL,
};
use crate::sparsekit::{dict_joint4d, dict_stage1, dict_stage2, omp, somp, GridSpec, JointLimits};
use crate::training::{validate_config, Method, TrainingSet};

/// Relative tolerance for the rank test before projection.
pub const PROJECT_RANK_RTOL: f64 = 1e-8;
/// Entry budget for the dense LS sensing matrix.
pub const DEFAULT_LS_ENTRIES: usize = 1 << 20;

/// Frequency estimator used inside both stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    /// DFT-beamspace ESPRIT.
    Bes,
    /// Grid-based sparse recovery (SOMP in stage 1, OMP in stage 2).
    Cs(GridSpec),
}

impl Variant {
    pub fn method(&self) -> Method {
        match self {
            Variant::Bes => Method::TriceBes,
            Variant::Cs(g) => Method::TriceCs(*g),
        }
    }
}

/// Estimated `(ψ_T, ψ_R)` per cascaded path and the matching columns
/// `kron(F^T v(ψ_T), W^T v(ψ_R))`.
#[derive(Debug, Clone)]
pub struct Stage1Result {
    pub pairs: Vec<(f64, f64)>,
    /// `(N_R·K_T) × L`.
    pub a_hat: CMatrix,
}

impl Stage1Result {
    pub fn from_pairs(pairs: Vec<(f64, f64)>, train: &TrainingSet) -> Result<Self> {
        let (t, r): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let at = train.f.transpose() * steering_matrix(&t, train.f.nrows());
        let ar = train.w.transpose() * steering_matrix(&r, train.w.nrows());
        Ok(Stage1Result {
            a_hat: khatri_rao(&at, &ar)?,
            pairs,
        })
    }
}

/// Effective RIS frequencies and gains, aligned with the stage-1 columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Result {
    pub mu_v: Vec<f64>,
    pub mu_h: Vec<f64>,
    pub alpha: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    pub psi_t: f64,
    pub psi_r: f64,
    pub mu_v: f64,
    pub mu_h: f64,
    pub alpha: C64,
}

impl PathEstimate {
    pub fn freqs(&self) -> [f64; 4] {
        [self.psi_t, self.psi_r, self.mu_v, self.mu_h]
    }
}

/// Output of any estimator run.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub method: &'static str,
    /// `(M_R·M_T) × M_S`.
    pub h_hat: CMatrix,
    /// `(H_T, H_R)` in the canonical gauge of [`lskrf`].
    pub factors: Option<(CMatrix, CMatrix)>,
    /// Empty for the LS baseline.
    pub paths: Vec<PathEstimate>,
    pub elapsed: Duration,
}

impl EstimateReport {
    pub fn nmse(&self, h_true: &CMatrix) -> Result<f64> {
        crate::sensing::nmse(h_true, &self.h_hat)
    }
}

fn check_block(y: &CMatrix, cfg: &SystemConfig) -> Result<()> {
    let want = (cfg.n_r * cfg.k_t, cfg.k_s());
    if y.shape() != want {
        return Err(Error::dims(
            "training block",
            format!("{:?}, expected {want:?}", y.shape()),
        ));
    }
    Ok(())
}

/// Least-squares channel estimate `pinv(F^T ⊗ W^T)·Y·pinv(Q)`.
///
/// This is the Kronecker-factored form of `pinv(Q^T ⊗ F^T ⊗ W^T)·vec(Y)`
/// and never builds the full sensing matrix.
pub fn ls_estimate(y: &CMatrix, train: &TrainingSet, cfg: &SystemConfig) -> Result<CMatrix> {
    check_block(y, cfg)?;
    let front = kron(&train.f.transpose(), &train.w.transpose());
    Ok(pinv(&front, PINV_RTOL) * y * pinv(&train.q, PINV_RTOL))
}

/// [`ls_estimate`] through the explicit sensing matrix. Refuses to build
/// it when it would exceed `max_entries`.
pub fn ls_estimate_dense(y: &CMatrix, train: &TrainingSet, cfg: &SystemConfig, max_entries: usize) -> Result<CMatrix> {
    check_block(y, cfg)?;
    let rows = y.len();
    let cols = cfg.m_r * cfg.m_t * cfg.m_s();
    if rows.saturating_mul(cols) > max_entries {
        return Err(Error::MemoryGuard {
            rows,
            cols,
            entries: rows * cols,
            limit: max_entries,
        });
    }
    let ups = kron(&train.q.transpose(), &kron(&train.f.transpose(), &train.w.transpose()));
    let h = pinv(&ups, PINV_RTOL) * vec(y);
    unvec(&h, cfg.m_r * cfg.m_t, cfg.m_s())
}

/// Stage 1: paired `(ψ_T, ψ_R)` for all `L` cascaded paths, sorted by
/// `ψ_T` then `ψ_R`.
pub fn stage1(y: &CMatrix, train: &TrainingSet, cfg: &SystemConfig, variant: &Variant) -> Result<Stage1Result> {
    check_block(y, cfg)?;
    let mut pairs = match variant {
        Variant::Bes => esprit_2d_stage1(y, cfg, cfg.l_t, cfg.l_r)?,
        Variant::Cs(g) => {
            let grids = g.build(cfg)?;
            let dict = dict_stage1(&train.f, &train.w, &grids.t, &grids.r)?;
            somp(&dict, y, cfg.l())?.labels
        }
    };
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Stage1Result::from_pairs(pairs, train)
}

/// `pinv(Â)·Y`, one row per path.
pub fn project(y: &CMatrix, a_hat: &CMatrix) -> Result<CMatrix> {
    if a_hat.nrows() != y.nrows() {
        return Err(Error::dims(
            "project",
            format!("A has {} rows, Y has {}", a_hat.nrows(), y.nrows()),
        ));
    }
    let rank = numerical_rank(a_hat, PROJECT_RANK_RTOL);
    if rank < a_hat.ncols() {
        return Err(Error::RankDeficient {
            rank,
            needed: a_hat.ncols(),
        });
    }
    Ok(pinv(a_hat, PINV_RTOL) * y)
}

/// LS gain of a single path given its RIS frequencies.
pub fn estimate_gain(y_n: &CVector, mu_v: f64, mu_h: f64, q_v: &CMatrix, q_h: &CMatrix) -> Result<C64> {
    let atom = kron_vec(
        &(q_v.transpose() * steering_1d(mu_v, q_v.nrows())),
        &(q_h.transpose() * steering_1d(mu_h, q_h.nrows())),
    );
    if atom.len() != y_n.len() {
        return Err(Error::dims(
            "estimate_gain",
            format!("atom length {}, vector length {}", atom.len(), y_n.len()),
        ));
    }
    let energy = atom.norm_squared();
    if energy == 0.0 {
        return Err(Error::Degenerate("zero gain atom".into()));
    }
    Ok(atom.dotc(y_n) / energy)
}

/// Stage 2: per-path RIS frequencies and gains from the rows of `Ȳ`.
pub fn stage2(ybar: &CMatrix, train: &TrainingSet, cfg: &SystemConfig, variant: &Variant) -> Result<Stage2Result> {
    if ybar.ncols() != cfg.k_s() {
        return Err(Error::dims(
            "stage2",
            format!("{} columns, expected K_S = {}", ybar.ncols(), cfg.k_s()),
        ));
    }
    let dict = match variant {
        Variant::Bes => None,
        Variant::Cs(g) => {
            let grids = g.build(cfg)?;
            Some(dict_stage2(&train.q_v, &train.q_h, &grids.v, &grids.h)?)
        }
    };
    let mut out = Stage2Result {
        mu_v: Vec::with_capacity(ybar.nrows()),
        mu_h: Vec::with_capacity(ybar.nrows()),
        alpha: Vec::with_capacity(ybar.nrows()),
    };
    for n in 0..ybar.nrows() {
        let y_n: CVector = ybar.row(n).transpose();
        if y_n.iter().all(|z| z.norm_sqr() == 0.0) {
            return Err(Error::Degenerate(format!("path {n} has a zero stage-2 vector")));
        }
        let (mv, mh) = match &dict {
            None => esprit_2d_stage2(&y_n, cfg)?,
            Some(d) => omp(d, &y_n, 1)?.labels[0],
        };
        out.alpha.push(estimate_gain(&y_n, mv, mh, &train.q_v, &train.q_h)?);
        out.mu_v.push(mv);
        out.mu_h.push(mh);
    }
    Ok(out)
}

fn assemble(pairs: &[(f64, f64)], mu_v: &[f64], mu_h: &[f64], alpha: &[C64], cfg: &SystemConfig) -> Result<CMatrix> {
    let l = pairs.len();
    if mu_v.len() != l || mu_h.len() != l || alpha.len() != l {
        return Err(Error::dims("reconstruct", "stage outputs disagree on the path count"));
    }
    let (t, r): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let links = khatri_rao(&steering_matrix(&t, cfg.m_t), &steering_matrix(&r, cfg.m_r))?;
    let b = ris_response(mu_v, mu_h, cfg.m_s_v, cfg.m_s_h)?.transpose();
    let g = CMatrix::from_diagonal(&CVector::from_column_slice(alpha));
    Ok(links * g * b)
}

/// Rebuilds `Ĥ = (Â_T ⊗ Â_R)·diag(α̂)·B̂` from the per-path parameters.
pub fn reconstruct(s1: &Stage1Result, s2: &Stage2Result, cfg: &SystemConfig) -> Result<CMatrix> {
    assemble(&s1.pairs, &s2.mu_v, &s2.mu_h, &s2.alpha, cfg)
}

/// Splits `Ĥ` into link factors with `khatri_rao(Ĥ_T^T, Ĥ_R) ≈ Ĥ`.
///
/// Each column is reshaped to `M_R × M_T` and replaced by its best rank-one
/// approximation. The `H_T` row gets unit norm and a real non-negative first
/// entry; the singular value and the compensating phase go to `H_R`.
/// Returns `(H_T, H_R)` of sizes `M_S × M_T` and `M_R × M_S`.
pub fn lskrf(h_hat: &CMatrix, cfg: &SystemConfig) -> Result<(CMatrix, CMatrix)> {
    let (m_t, m_r, m_s) = (cfg.m_t, cfg.m_r, cfg.m_s());
    if h_hat.shape() != (m_r * m_t, m_s) {
        return Err(Error::dims(
            "lskrf",
            format!("{:?}, expected {:?}", h_hat.shape(), (m_r * m_t, m_s)),
        ));
    }
    let mut h_t = CMatrix::zeros(m_s, m_t);
    let mut h_r = CMatrix::zeros(m_r, m_s);
    for m in 0..m_s {
        let blk = unvec(&h_hat.column(m).into_owned(), m_r, m_t)?;
        let r1 = rank1_approx(&blk);
        let a = r1.v.map(|z| z.conj());
        let phase = a
            .iter()
            .find(|z| z.norm() > 0.0)
            .map(|z| C64::from_polar(1.0, z.arg()))
            .unwrap_or(C64::new(1.0, 0.0));
        h_t.set_row(m, &(a * phase.conj()).transpose());
        h_r.set_column(m, &(r1.u * C64::new(r1.s, 0.0) * phase));
    }
    Ok((h_t, h_r))
}

fn paths_of(pairs: &[(f64, f64)], s2: &Stage2Result) -> Vec<PathEstimate> {
    pairs
        .iter()
        .enumerate()
        .map(|(n, &(psi_t, psi_r))| PathEstimate {
            psi_t,
            psi_r,
            mu_v: s2.mu_v[n],
            mu_h: s2.mu_h[n],
            alpha: s2.alpha[n],
        })
        .collect()
}

/// The full two-stage pipeline.
pub fn run_trice(y: &CMatrix, train: &TrainingSet, cfg: &SystemConfig, variant: &Variant) -> Result<EstimateReport> {
    let start = Instant::now();
    let report = validate_config(cfg, &variant.method());
    if !report.is_valid() {
        let names: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
        return Err(Error::InvalidConfig(format!("failed checks: {}", names.join(", "))).in_stage("validate"));
    }
    for c in report.failures() {
        log::debug!("{}: advisory check {} not met ({})", report.method, c.name, c.detail);
    }
    let s1 = stage1(y, train, cfg, variant).map_err(|e| e.in_stage("stage1"))?;
    let ybar = project(y, &s1.a_hat).map_err(|e| e.in_stage("project"))?;
    let s2 = stage2(&ybar, train, cfg, variant).map_err(|e| e.in_stage("stage2"))?;
    let h_hat = reconstruct(&s1, &s2, cfg).map_err(|e| e.in_stage("reconstruct"))?;
    let factors = lskrf(&h_hat, cfg).map_err(|e| e.in_stage("lskrf"))?;
    Ok(EstimateReport {
        method: variant.method().tag(),
        paths: paths_of(&s1.pairs, &s2),
        h_hat,
        factors: Some(factors),
        elapsed: start.elapsed(),
    })
}

/// LS baseline wrapped in a report.
pub fn run_ls(y: &CMatrix, train: &TrainingSet, cfg: &SystemConfig) -> Result<EstimateReport> {
    let start = Instant::now();
    let h_hat = ls_estimate(y, train, cfg).map_err(|e| e.in_stage("ls"))?;
    Ok(EstimateReport {
        method: Method::Ls.tag(),
        h_hat,
        factors: None,
        paths: Vec::new(),
        elapsed: start.elapsed(),
    })
}

/// Joint 4D OMP over `vec(Y)`; gains are the final least-squares refit.
pub fn run_joint_cs(
    y: &CMatrix,
    train: &TrainingSet,
    cfg: &SystemConfig,
    grids: &GridSpec,
    limits: JointLimits,
) -> Result<EstimateReport> {
    let start = Instant::now();
    check_block(y, cfg).map_err(|e| e.in_stage("joint"))?;
    let g = grids.build(cfg).map_err(|e| e.in_stage("dictionary"))?;
    let dict = dict_joint4d(&train.f, &train.w, &train.q, (cfg.m_s_v, cfg.m_s_h), &g, limits)
        .map_err(|e| e.in_stage("dictionary"))?;
    let res = omp(&dict, &vec(y), cfg.l()).map_err(|e| e.in_stage("omp"))?;
    let pairs: Vec<(f64, f64)> = res.labels.iter().map(|l| (l[0], l[1])).collect();
    let s2 = Stage2Result {
        mu_v: res.labels.iter().map(|l| l[2]).collect(),
        mu_h: res.labels.iter().map(|l| l[3]).collect(),
        alpha: res.coefficients.iter().copied().collect(),
    };
    let h_hat = assemble(&pairs, &s2.mu_v, &s2.mu_h, &s2.alpha, cfg).map_err(|e| e.in_stage("reconstruct"))?;
    let factors = lskrf(&h_hat, cfg).map_err(|e| e.in_stage("lskrf"))?;
    Ok(EstimateReport {
        method: Method::JointCs(*grids).tag(),
        paths: paths_of(&pairs, &s2),
        h_hat,
        factors: Some(factors),
        elapsed: start.elapsed(),
    })
}
