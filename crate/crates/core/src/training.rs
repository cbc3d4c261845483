//! DFT-based training matrices and identifiability checks.
//!
//! The MS combiner `W`, the BS precoders `F` and the RIS phase vectors `Q`
//! all take their transposes from the first rows of normalised DFT matrices.
//! `Q` is built as `Q_v ⊗ Q_h`, which is what lets the second estimation
//! stage separate vertical from horizontal RIS frequencies.

use std::f64::consts::PI;
use std::fmt;

use crate::chanmodel::SystemConfig;
use crate::error::Result;
use crate::numkit::{kron, CMatrix, C64};
use crate::sparsekit::GridSpec;

#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// `M_R × N_R`.
    pub w: CMatrix,
    /// `M_T × K_T`.
    pub f: CMatrix,
    /// `M_S_v × K_S_v`.
    pub q_v: CMatrix,
    /// `M_S_h × K_S_h`.
    pub q_h: CMatrix,
    /// `M_S × K_S`, equal to `kron(q_v, q_h)`.
    pub q: CMatrix,
}

/// Unitary DFT matrix, entry `(p, q) = e^{−j2πpq/M}/√M`.
pub fn dft_matrix(m: usize) -> CMatrix {
    let scale = 1.0 / (m as f64).sqrt();
    CMatrix::from_fn(m, m, |p, q| {
        // reduce the exponent first so large M keeps full phase accuracy
        let k = (p * q) % m;
        C64::from_polar(scale, -2.0 * PI * k as f64 / m as f64)
    })
}

/// First `rows` rows of the `m`-point DFT matrix, returned transposed
/// (`m × rows`), i.e. the training matrix whose transpose is the selection.
pub fn dft_rows_transposed(rows: usize, m: usize) -> CMatrix {
    dft_matrix(m).rows(0, rows).transpose()
}

pub fn build_training(cfg: &SystemConfig) -> Result<TrainingSet> {
    cfg.validate()?;
    let w = dft_rows_transposed(cfg.n_r, cfg.m_r);
    let f = dft_rows_transposed(cfg.k_t, cfg.m_t);
    let q_v = dft_rows_transposed(cfg.k_s_v, cfg.m_s_v);
    let q_h = dft_rows_transposed(cfg.k_s_h, cfg.m_s_h);
    let q = kron(&q_v, &q_h);
    Ok(TrainingSet { w, f, q_v, q_h, q })
}

/// Estimator families, with the grid resolution used by the CS ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Ls,
    TriceBes,
    TriceCs(GridSpec),
    JointCs(GridSpec),
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::TriceBes => "trice-bes",
            Method::TriceCs(_) => "trice-cs",
            Method::JointCs(_) => "joint-cs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Must hold for the estimator to be applicable.
    Required,
    /// Reported only.
    Advisory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub detail: String,
    pub passed: bool,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub method: &'static str,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    /// True when every required check passes.
    pub fn is_valid(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.passed || c.severity == Severity::Advisory)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}:", self.method)?;
        for c in &self.checks {
            let status = match (c.passed, c.severity) {
                (true, _) => "pass",
                (false, Severity::Required) => "FAIL",
                (false, Severity::Advisory) => "warn",
            };
            writeln!(f, "  [{status}] {:<18} {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

fn check(name: &str, lhs: f64, rhs: f64, severity: Severity) -> Check {
    Check {
        name: name.to_string(),
        detail: format!("{lhs} >= {rhs}"),
        passed: lhs >= rhs,
        severity,
    }
}

/// Training-overhead conditions for `method` under `cfg`.
///
/// The beamspace-ESPRIT variant gets hard checks; for the CS methods the
/// logarithmic overhead rules of thumb are reported as advisories, using
/// natural logarithms and a unit constant.
pub fn validate_config(cfg: &SystemConfig, method: &Method) -> ValidationReport {
    use Severity::*;
    let (n_r, k_t, k_s) = (cfg.n_r as f64, cfg.k_t as f64, cfg.k_s() as f64);
    let (l_t, l_r, l) = (cfg.l_t as f64, cfg.l_r as f64, cfg.l() as f64);
    let mut checks = Vec::new();
    match method {
        Method::Ls => {
            let need = (cfg.m_r * cfg.m_t * cfg.m_s()) as f64 / n_r;
            checks.push(check("K_T*K_S >= M_R*M_T*M_S/N_R", k_t * k_s, need, Advisory));
        }
        Method::TriceBes => {
            checks.push(check("K_S >= L", k_s, l, Required));
            checks.push(check("L >= 4", l, 4.0, Advisory));
            checks.push(check("N_R >= L_R+1", n_r, l_r + 1.0, Required));
            checks.push(check("K_T >= L_T+1", k_t, l_t + 1.0, Required));
            checks.push(check("(K_T-1)N_R >= L", (k_t - 1.0) * n_r, l, Required));
            checks.push(check("(N_R-1)K_T >= L", (n_r - 1.0) * k_t, l, Required));
            checks.push(check("K_S_v >= 2", cfg.k_s_v as f64, 2.0, Required));
            checks.push(check("K_S_h >= 2", cfg.k_s_h as f64, 2.0, Required));
        }
        Method::TriceCs(g) => {
            let [gt, gr, gv, gh] = g.counts(cfg).map(|c| c.max(1) as f64);
            checks.push(check(
                "N_R*K_T ~ L log(LT*LR/L)",
                n_r * k_t,
                l * (gt * gr / l).max(1.0).ln(),
                Advisory,
            ));
            checks.push(check("K_S ~ log(Lv*Lh)", k_s, (gv * gh).ln(), Advisory));
        }
        Method::JointCs(g) => {
            let prod: f64 = g.counts(cfg).iter().map(|&c| c.max(1) as f64).product();
            checks.push(check(
                "N_R*K_T*K_S ~ L log(prod/L)",
                n_r * k_t * k_s,
                l * (prod / l).max(1.0).ln(),
                Advisory,
            ));
        }
    }
    ValidationReport {
        method: method.tag(),
        checks,
    }
}
