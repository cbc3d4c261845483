//! Monte-Carlo experiment runner.
//!
//! An [`ExperimentSpec`] (usually read from TOML) names a base
//! configuration, the estimators to compare, an SNR list and an optional
//! sweep over `K_T` or `K_S`. [`run_sweep`] runs every (sweep point, trial)
//! pair, possibly in parallel, and returns detail rows in a fixed order
//! followed by one summary row per (method, sweep point).
//!
//! Every method at a given trial sees the same channel draw and the same
//! unit-variance noise shape, so comparisons between methods and between
//! SNR points are paired.
//!
//! ```toml
//! trials = 50
//! master_seed = 7
//! snr_db = [0.0, 10.0, 20.0]
//!
//! [config]
//! k_t = 6
//!
//! [[methods]]
//! kind = "trice-bes"
//!
//! [[methods]]
//! kind = "trice-cs"
//! label = "trice-cs:c2"
//! grids = { beta_t = 2, beta_r = 4, beta_s_v = 8, beta_s_h = 8 }
//! ```

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chanmodel::{realize, sample_paths, wrapped_distance, ChannelParams, SystemConfig};
use crate::error::{Error, Result};
use crate::sensing::{add_noise, synthesize};
use crate::sparsekit::{GridSpec, JointLimits};
use crate::training::{build_training, Method};
use crate::trice::{run_joint_cs, run_ls, run_trice, EstimateReport, Variant};
use crate::{CMatrix, C64};

pub const CSV_HEADER: &str = "method,snr_db,k_t,k_s_v,k_s_h,trial,seed,nmse,psi_rmse,mu_rmse,runtime_ms";

/// Paths up to this count are matched exhaustively; above it greedily.
const EXHAUSTIVE_MATCH_MAX: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Ls,
    TriceBes,
    TriceCs,
    JointCs,
}

impl MethodKind {
    pub fn tag(&self) -> &'static str {
        match self {
            MethodKind::Ls => "ls",
            MethodKind::TriceBes => "trice-bes",
            MethodKind::TriceCs => "trice-cs",
            MethodKind::JointCs => "joint-cs",
        }
    }

    fn uses_grids(&self) -> bool {
        matches!(self, MethodKind::TriceCs | MethodKind::JointCs)
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [MethodKind::Ls, MethodKind::TriceBes, MethodKind::TriceCs, MethodKind::JointCs]
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// One estimator entry. `grids` applies to the CS kinds only and defaults to
/// the DFT-resolution grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub kind: MethodKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids: Option<GridSpec>,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        MethodSpec {
            kind,
            label: None,
            grids: None,
        }
    }

    pub fn with_grids(kind: MethodKind, grids: GridSpec) -> Self {
        MethodSpec {
            kind,
            label: None,
            grids: Some(grids),
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.grids.unwrap_or_default()
    }

    /// Explicit label, else the kind tag, suffixed with the grid factors
    /// when they differ from the default.
    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.grids {
            Some(g) if self.kind.uses_grids() && g != GridSpec::C1 => {
                if g == GridSpec::C2 {
                    format!("{}:c2", self.kind.tag())
                } else {
                    format!(
                        "{}:b{}-{}-{}-{}",
                        self.kind.tag(),
                        g.beta_t,
                        g.beta_r,
                        g.beta_s_v,
                        g.beta_s_h
                    )
                }
            }
            _ => self.kind.tag().to_string(),
        }
    }

    pub fn method(&self) -> Method {
        match self.kind {
            MethodKind::Ls => Method::Ls,
            MethodKind::TriceBes => Method::TriceBes,
            MethodKind::TriceCs => Method::TriceCs(self.grid_spec()),
            MethodKind::JointCs => Method::JointCs(self.grid_spec()),
        }
    }

    pub fn estimate(&self, y: &CMatrix, cfg: &SystemConfig) -> Result<EstimateReport> {
        let train = build_training(cfg)?;
        match self.kind {
            MethodKind::Ls => run_ls(y, &train, cfg),
            MethodKind::TriceBes => run_trice(y, &train, cfg, &Variant::Bes),
            MethodKind::TriceCs => run_trice(y, &train, cfg, &Variant::Cs(self.grid_spec())),
            MethodKind::JointCs => run_joint_cs(y, &train, cfg, &self.grid_spec(), JointLimits::default()),
        }
    }
}

/// Parses `kind` or `kind:c1` / `kind:c2`, e.g. `trice-cs:c2`.
impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, grid) = match s.split_once(':') {
            Some((k, g)) => (k, Some(g)),
            None => (s, None),
        };
        let kind: MethodKind = kind.trim().parse()?;
        let grids = match grid.map(str::trim) {
            None => None,
            Some(_) if !kind.uses_grids() => {
                return Err(Error::InvalidConfig(format!("{} takes no grid preset", kind.tag())))
            }
            Some("c1") => Some(GridSpec::C1),
            Some("c2") => Some(GridSpec::C2),
            Some(g) => return Err(Error::InvalidConfig(format!("unknown grid preset {g:?}"))),
        };
        Ok(MethodSpec {
            kind,
            label: None,
            grids,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[default]
    Snr,
    KT,
    KS,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Snr => "snr",
            SweepAxis::KT => "k_t",
            SweepAxis::KS => "k_s",
        })
    }
}

/// A Monte-Carlo experiment.
///
/// With `sweep = "snr"` the points are the entries of `snr_db`. With
/// `sweep = "k_t"` (or `"k_s"`) every value of `k_t` (or `[k_s_v, k_s_h]`
/// pair of `k_s`) is run at every SNR, outer loop first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub config: SystemConfig,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_snr")]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub sweep: SweepAxis,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k_t: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k_s: Vec<[usize; 2]>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Wall-clock times make the CSV non-reproducible, so they are off by
    /// default and the column holds NaN.
    #[serde(default)]
    pub record_runtime: bool,
}

fn default_snr() -> Vec<f64> {
    vec![10.0]
}

fn default_trials() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub cfg: SystemConfig,
    pub snr_db: f64,
}

impl ExperimentSpec {
    /// Desk-scale defaults with the given methods.
    pub fn new(methods: Vec<MethodSpec>) -> Self {
        ExperimentSpec {
            config: SystemConfig::desk_scale(),
            methods,
            snr_db: default_snr(),
            sweep: SweepAxis::Snr,
            k_t: Vec::new(),
            k_s: Vec::new(),
            trials: default_trials(),
            master_seed: 0,
            record_runtime: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("spec file: {}", e.message())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods given".into());
        }
        if self.snr_db.is_empty() {
            return bad("snr_db is empty".into());
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return bad("snr_db entries must be numbers or +inf".into());
        }
        let mut labels: Vec<String> = self.methods.iter().map(MethodSpec::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate method label {:?}", w[0]));
        }
        for m in &self.methods {
            if m.grids.is_some() && !m.kind.uses_grids() {
                return bad(format!("{} takes no grids", m.kind.tag()));
            }
            let g = m.grid_spec();
            if [g.beta_t, g.beta_r, g.beta_s_v, g.beta_s_h].contains(&0) {
                return bad(format!("{}: grid factors must be positive", m.label()));
            }
        }
        match self.sweep {
            SweepAxis::Snr if !self.k_t.is_empty() || !self.k_s.is_empty() => {
                return bad("k_t / k_s lists need sweep = \"k_t\" / \"k_s\"".into())
            }
            SweepAxis::KT if self.k_t.is_empty() || !self.k_s.is_empty() => {
                return bad("sweep = \"k_t\" needs a non-empty k_t list and no k_s list".into())
            }
            SweepAxis::KS if self.k_s.is_empty() || !self.k_t.is_empty() => {
                return bad("sweep = \"k_s\" needs a non-empty k_s list and no k_t list".into())
            }
            _ => {}
        }
        for p in self.points() {
            p.cfg.validate()?;
            crate::chanmodel::visible_sectors(&p.cfg)?;
        }
        Ok(())
    }

    /// Sweep points in output order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let configs: Vec<SystemConfig> = match self.sweep {
            SweepAxis::Snr => vec![self.config],
            SweepAxis::KT => self.k_t.iter().map(|&k_t| SystemConfig { k_t, ..self.config }).collect(),
            SweepAxis::KS => self
                .k_s
                .iter()
                .map(|&[k_s_v, k_s_h]| SystemConfig {
                    k_s_v,
                    k_s_h,
                    ..self.config
                })
                .collect(),
        };
        configs
            .iter()
            .flat_map(|&cfg| self.snr_db.iter().map(move |&snr_db| SweepPoint { cfg, snr_db }))
            .collect()
    }
}

/// One CSV line. Summary rows have `trial = -1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub snr_db: f64,
    pub k_t: usize,
    pub k_s_v: usize,
    pub k_s_h: usize,
    pub trial: i64,
    pub seed: u64,
    pub nmse: f64,
    pub psi_rmse: f64,
    pub mu_rmse: f64,
    pub runtime_ms: f64,
    #[serde(skip)]
    pub error: Option<String>,
}

impl ResultRow {
    pub fn is_summary(&self) -> bool {
        self.trial < 0
    }

    fn cell_key(&self) -> (String, u64, usize, usize, usize) {
        (self.method.clone(), self.snr_db.to_bits(), self.k_t, self.k_s_v, self.k_s_h)
    }
}

/// Aggregates of one (method, sweep point) cell over its successful trials.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: String,
    pub point: SweepPoint,
    pub trials: usize,
    pub failures: usize,
    pub median_nmse: f64,
    pub mean_nmse: f64,
    pub median_psi_rmse: f64,
    pub median_mu_rmse: f64,
    pub median_runtime_ms: f64,
}

impl CellSummary {
    pub fn all_failed(&self) -> bool {
        self.failures == self.trials
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Detail rows ordered by sweep point, trial, then method.
    pub rows: Vec<ResultRow>,
    /// One per (sweep point, method), in that order.
    pub summaries: Vec<CellSummary>,
}

impl SweepResult {
    /// Detail rows followed by the summary rows.
    pub fn all_rows(&self) -> Vec<ResultRow> {
        let mut out = self.rows.clone();
        out.extend(self.summaries.iter().map(summary_row));
        out
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.all_rows())
    }

    pub fn any_cell_failed(&self) -> bool {
        self.summaries.iter().any(CellSummary::all_failed)
    }

    pub fn summary(&self, method: &str, point: &SweepPoint) -> Option<&CellSummary> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.point == *point)
    }
}

fn summary_row(s: &CellSummary) -> ResultRow {
    ResultRow {
        method: s.method.clone(),
        snr_db: s.point.snr_db,
        k_t: s.point.cfg.k_t,
        k_s_v: s.point.cfg.k_s_v,
        k_s_h: s.point.cfg.k_s_h,
        trial: -1,
        seed: 0,
        nmse: s.median_nmse,
        psi_rmse: s.median_psi_rmse,
        mu_rmse: s.median_mu_rmse,
        runtime_ms: s.median_runtime_ms,
        error: None,
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Degenerate(format!("bad CSV: {e}")))
}

/// Median of the finite entries; NaN when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// SplitMix64 output function.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial`. It does not depend on the sweep point, so the
/// same trial index replays the same random stream at every point.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    mix64(mix64(master_seed) ^ trial as u64)
}

/// Assignment of estimated to true paths that minimises the summed squared
/// wrapped `(ψ_T, ψ_R)` distance. `result[i]` is the true index of estimate
/// `i`. Exhaustive for small `L`, greedy otherwise.
pub fn match_paths(est: &[[f64; 4]], truth: &[[f64; 4]]) -> Vec<usize> {
    let cost = |i: usize, j: usize| {
        wrapped_distance(est[i][0], truth[j][0]).powi(2) + wrapped_distance(est[i][1], truth[j][1]).powi(2)
    };
    let n = est.len().min(truth.len());
    if n <= EXHAUSTIVE_MATCH_MAX && truth.len() <= EXHAUSTIVE_MATCH_MAX {
        let mut best = (f64::INFINITY, Vec::new());
        let mut perm: Vec<usize> = Vec::with_capacity(n);
        let mut used = vec![false; truth.len()];
        search(0, n, 0.0, &cost, &mut perm, &mut used, &mut best);
        return best.1;
    }
    let mut pairs: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| (0..truth.len()).map(move |j| (i, j)))
        .map(|(i, j)| (cost(i, j), i, j))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = vec![usize::MAX; n];
    let mut used = vec![false; truth.len()];
    for (_, i, j) in pairs {
        if out[i] == usize::MAX && !used[j] {
            out[i] = j;
            used[j] = true;
        }
    }
    out
}

fn search(
    i: usize,
    n: usize,
    acc: f64,
    cost: &impl Fn(usize, usize) -> f64,
    perm: &mut Vec<usize>,
    used: &mut [bool],
    best: &mut (f64, Vec<usize>),
) {
    if acc >= best.0 {
        return;
    }
    if i == n {
        *best = (acc, perm.clone());
        return;
    }
    for j in 0..used.len() {
        if !used[j] {
            used[j] = true;
            perm.push(j);
            search(i + 1, n, acc + cost(i, j), cost, perm, used, best);
            perm.pop();
            used[j] = false;
        }
    }
}

/// RMSE of the `(ψ_T, ψ_R)` and `(μ_v, μ_h)` estimates after optimal
/// matching. NaN when there are no estimated paths or the counts differ.
pub fn frequency_rmse(est: &[[f64; 4]], truth: &[[f64; 4]]) -> (f64, f64) {
    if est.is_empty() || est.len() != truth.len() {
        return (f64::NAN, f64::NAN);
    }
    let m = match_paths(est, truth);
    let rms = |a: usize, b: usize| {
        let s: f64 = m
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                wrapped_distance(est[i][a], truth[j][a]).powi(2) + wrapped_distance(est[i][b], truth[j][b]).powi(2)
            })
            .sum();
        (s / (2 * est.len()) as f64).sqrt()
    };
    (rms(0, 1), rms(2, 3))
}

/// Everything produced by one trial, for verbose inspection.
#[derive(Debug)]
pub struct TrialDetail {
    pub seed: u64,
    pub point: SweepPoint,
    pub params: ChannelParams,
    /// True cascaded paths `(ψ_T, ψ_R, μ_v, μ_h)`.
    pub truth: Vec<[f64; 4]>,
    pub gains: Vec<C64>,
    pub outcomes: Vec<(String, Result<EstimateReport>)>,
    pub rows: Vec<ResultRow>,
}

/// Runs every method of `spec` on trial `trial` at `point`.
///
/// Ground truth and noise come from one seeded stream shared by all
/// methods. Paths are drawn inside the visible sectors of the point's
/// configuration, so a `K` sweep changes the channel distribution too. Estimation failures are logged and leave NaN in the row.
pub fn run_trial_detail(spec: &ExperimentSpec, point: &SweepPoint, trial: usize) -> Result<TrialDetail> {
    let seed = trial_seed(spec.master_seed, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = point.cfg;
    let params = sample_paths(&cfg, &mut rng)?;
    let ch = realize(&cfg, &params)?;
    let train = build_training(&cfg)?;
    let y0 = synthesize(&cfg, &ch, &train)?;
    let block = add_noise(&y0, point.snr_db, &mut rng)?;
    let truth: Vec<[f64; 4]> = params
        .cascaded_paths()
        .iter()
        .zip(ch.mu_v_eff.iter().zip(&ch.mu_h_eff))
        .map(|(p, (&v, &h))| [p[0], p[1], v, h])
        .collect();

    let mut outcomes = Vec::with_capacity(spec.methods.len());
    let mut rows = Vec::with_capacity(spec.methods.len());
    for m in &spec.methods {
        let label = m.label();
        let res = m.estimate(&block.y, &cfg);
        let mut row = ResultRow {
            method: label.clone(),
            snr_db: point.snr_db,
            k_t: cfg.k_t,
            k_s_v: cfg.k_s_v,
            k_s_h: cfg.k_s_h,
            trial: trial as i64,
            seed,
            nmse: f64::NAN,
            psi_rmse: f64::NAN,
            mu_rmse: f64::NAN,
            runtime_ms: f64::NAN,
            error: None,
        };
        match &res {
            Ok(rep) => {
                row.nmse = rep.nmse(&ch.h)?;
                let est: Vec<[f64; 4]> = rep.paths.iter().map(|p| p.freqs()).collect();
                (row.psi_rmse, row.mu_rmse) = frequency_rmse(&est, &truth);
                if spec.record_runtime {
                    row.runtime_ms = rep.elapsed.as_secs_f64() * 1e3;
                }
            }
            Err(e) => {
                log::warn!("{label} failed at trial {trial} (seed {seed}): {e}");
                row.error = Some(e.to_string());
            }
        }
        rows.push(row);
        outcomes.push((label, res));
    }
    Ok(TrialDetail {
        seed,
        point: *point,
        params,
        truth,
        gains: ch.alpha_eff,
        outcomes,
        rows,
    })
}

/// One row per method for trial `trial` at `point`.
pub fn run_trial(spec: &ExperimentSpec, point: &SweepPoint, trial: usize) -> Result<Vec<ResultRow>> {
    Ok(run_trial_detail(spec, point, trial)?.rows)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

/// Runs the whole experiment. The output does not depend on the number of
/// threads.
pub fn run_sweep(spec: &ExperimentSpec, opts: &RunOptions) -> Result<SweepResult> {
    spec.validate()?;
    match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| sweep_inner(spec)),
        None => sweep_inner(spec),
    }
}

fn sweep_inner(spec: &ExperimentSpec) -> Result<SweepResult> {
    let points = spec.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.trials).map(move |t| (p, t)))
        .collect();
    let per_job: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|&(p, t)| run_trial(spec, &points[p], t))
        .collect::<Result<_>>()?;
    let rows: Vec<ResultRow> = per_job.into_iter().flatten().collect();

    let mut summaries = Vec::with_capacity(points.len() * spec.methods.len());
    for point in &points {
        for m in &spec.methods {
            let label = m.label();
            let key = (label.clone(), point.snr_db.to_bits(), point.cfg.k_t, point.cfg.k_s_v, point.cfg.k_s_h);
            let cell: Vec<&ResultRow> = rows.iter().filter(|r| r.cell_key() == key).collect();
            let pick = |f: fn(&ResultRow) -> f64| cell.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let nmse = pick(|r| r.nmse);
            summaries.push(CellSummary {
                method: label,
                point: *point,
                trials: cell.len(),
                failures: nmse.iter().filter(|x| !x.is_finite()).count(),
                median_nmse: median(&nmse),
                mean_nmse: mean(&nmse),
                median_psi_rmse: median(&pick(|r| r.psi_rmse)),
                median_mu_rmse: median(&pick(|r| r.mu_rmse)),
                median_runtime_ms: median(&pick(|r| r.runtime_ms)),
            });
        }
    }
    Ok(SweepResult { rows, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn spec(methods: &[&str], snr: &[f64], trials: usize) -> ExperimentSpec {
        ExperimentSpec {
            snr_db: snr.to_vec(),
            trials,
            master_seed: 11,
            ..ExperimentSpec::new(methods.iter().map(|m| m.parse().unwrap()).collect())
        }
    }

    #[test]
    fn seeds_are_stable_and_spread() {
        assert_eq!(trial_seed(1, 2), trial_seed(1, 2));
        let mut seen: Vec<u64> = (0..1000).map(|t| trial_seed(5, t)).collect();
        seen.extend((0..1000).map(|t| trial_seed(6, t)));
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 2000);
    }

    #[test]
    fn method_strings() {
        let m: MethodSpec = "trice-cs:c2".parse().unwrap();
        assert_eq!(m.kind, MethodKind::TriceCs);
        assert_eq!(m.grids, Some(GridSpec::C2));
        assert_eq!(m.label(), "trice-cs:c2");
        assert_eq!("joint-cs:c1".parse::<MethodSpec>().unwrap().label(), "joint-cs");
        assert_eq!("ls".parse::<MethodSpec>().unwrap().label(), "ls");
        assert!("ls:c2".parse::<MethodSpec>().is_err());
        assert!("trice-cs:c3".parse::<MethodSpec>().is_err());
        assert!("music".parse::<MethodSpec>().is_err());
        let custom = MethodSpec::with_grids(
            MethodKind::JointCs,
            GridSpec {
                beta_t: 1,
                beta_r: 2,
                beta_s_v: 3,
                beta_s_h: 4,
            },
        );
        assert_eq!(custom.label(), "joint-cs:b1-2-3-4");
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let text = r#"
            trials = 3
            master_seed = 9
            snr_db = [0.0, 10.0]

            [config]
            k_t = 6

            [[methods]]
            kind = "trice-bes"

            [[methods]]
            kind = "trice-cs"
            grids = { beta_t = 2, beta_r = 4, beta_s_v = 8, beta_s_h = 8 }
        "#;
        let s = ExperimentSpec::from_toml(text).unwrap();
        assert_eq!(s.config, SystemConfig { k_t: 6, ..SystemConfig::desk_scale() });
        assert_eq!(s.methods[1].label(), "trice-cs:c2");
        assert_eq!(s.sweep, SweepAxis::Snr);
        assert!(!s.record_runtime);
        assert_eq!(ExperimentSpec::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn spec_errors() {
        let base = "[[methods]]\nkind = \"ls\"\n";
        assert!(ExperimentSpec::from_toml(base).is_ok());
        for bad in [
            format!("{base}colour = 1\n"),
            format!("trials = 0\n{base}"),
            format!("sweep = \"k_t\"\n{base}"),
            format!("k_t = [4]\n{base}"),
            format!("sweep = \"k_s\"\nk_s = [[9, 2]]\n{base}"),
            format!("sweep = \"k_s\"\nk_s = [[1, 2]]\n{base}"),
            format!("snr_db = []\n{base}"),
            format!("{base}grids = {{ beta_t = 1, beta_r = 1, beta_s_v = 1, beta_s_h = 1 }}\n"),
            format!("{base}[[methods]]\nkind = \"ls\"\n"),
            format!("[config]\nm_t = 16\nbogus = 2\n{base}"),
            "methods = []\n".to_string(),
            "[[methods]]\nkind = \"magic\"\n".to_string(),
        ] {
            assert!(ExperimentSpec::from_toml(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn sweep_point_layout() {
        let mut s = spec(&["ls"], &[0.0, 5.0], 1);
        s.sweep = SweepAxis::KS;
        s.k_s = vec![[2, 2], [4, 4]];
        let p = s.points();
        assert_eq!(p.len(), 4);
        assert_eq!((p[1].cfg.k_s(), p[1].snr_db), (4, 5.0));
        assert_eq!((p[2].cfg.k_s(), p[2].snr_db), (16, 0.0));
    }

    #[test]
    fn k_t_axis_from_figure_ticks() {
        let mut s = spec(&["trice-bes", "ls"], &[5.0], 2);
        s.sweep = SweepAxis::KT;
        s.k_t = vec![4, 6, 8, 10, 12];
        s.validate().unwrap();
        let r = run_sweep(&s, &RunOptions::default()).unwrap();
        assert_eq!(r.rows.len(), 2 * 5 * 2);
        let k: Vec<usize> = r.summaries.iter().map(|c| c.point.cfg.k_t).collect();
        assert_eq!(k, [4, 4, 6, 6, 8, 8, 10, 10, 12, 12]);
        assert!(!r.any_cell_failed());
    }

    #[test]
    fn row_counts() {
        let r = run_sweep(&spec(&["trice-bes", "ls"], &[0.0, 10.0, 20.0], 5), &RunOptions::default()).unwrap();
        let all = r.all_rows();
        assert_eq!(all.iter().filter(|x| !x.is_summary()).count(), 30);
        assert_eq!(all.iter().filter(|x| x.is_summary()).count(), 6);
        assert!(all[..30].iter().all(|x| !x.is_summary()));
    }

    #[test]
    fn single_ls_trial_on_tiny_config() {
        let mut s = spec(&["ls"], &[f64::INFINITY], 1);
        s.config = SystemConfig {
            m_t: 4,
            m_r: 2,
            m_s_v: 2,
            m_s_h: 2,
            n_r: 2,
            k_t: 4,
            k_s_v: 2,
            k_s_h: 2,
            l_t: 1,
            l_r: 1,
        };
        let rows = run_trial(&s, &s.points()[0], 0).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].nmse < 1e-15);
        assert!(rows[0].psi_rmse.is_nan());
    }

    #[test]
    fn trials_are_paired_and_repeatable() {
        let s = spec(&["trice-cs", "joint-cs", "trice-bes"], &[15.0], 1);
        let a = run_trial_detail(&s, &s.points()[0], 3).unwrap();
        let b = run_trial_detail(&s, &s.points()[0], 3).unwrap();
        assert_eq!(rows_to_csv(&a.rows), rows_to_csv(&b.rows));
        assert!(a.rows.iter().all(|r| r.seed == a.seed));
        assert_eq!(a.params, b.params);
        // a changed SNR keeps the channel
        let mut hi = s.clone();
        hi.snr_db = vec![30.0];
        let c = run_trial_detail(&hi, &hi.points()[0], 3).unwrap();
        assert_eq!(a.params, c.params);
    }

    #[test]
    fn csv_is_identical_across_runs_and_thread_counts() {
        let s = spec(&["trice-bes", "trice-cs", "ls"], &[0.0, 20.0], 6);
        let a = run_sweep(&s, &RunOptions { threads: Some(1) }).unwrap().to_csv();
        let b = run_sweep(&s, &RunOptions { threads: Some(4) }).unwrap().to_csv();
        let c = run_sweep(&s, &RunOptions::default()).unwrap().to_csv();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert!(a.starts_with(CSV_HEADER));
        assert_eq!(a.lines().count(), 1 + 3 * 2 * 6 + 3 * 2);
    }

    #[test]
    fn summary_medians_recompute_from_csv() {
        let r = run_sweep(&spec(&["trice-bes", "trice-cs"], &[0.0, 10.0], 8), &RunOptions::default()).unwrap();
        let rows = rows_from_csv(&r.to_csv()).unwrap();
        let mut cells: BTreeMap<_, Vec<f64>> = BTreeMap::new();
        for row in rows.iter().filter(|r| !r.is_summary()) {
            cells.entry(row.cell_key()).or_default().push(row.nmse);
        }
        let summaries: Vec<&ResultRow> = rows.iter().filter(|r| r.is_summary()).collect();
        assert_eq!(summaries.len(), cells.len());
        for s in summaries {
            assert_eq!(s.nmse, median(&cells[&s.cell_key()]));
        }
    }

    #[test]
    fn failures_are_recorded_per_row() {
        let mut s = spec(&["trice-bes", "ls"], &[10.0], 3);
        // too few receive beams for two MS paths
        s.config.n_r = 2;
        let r = run_sweep(&s, &RunOptions::default()).unwrap();
        let bes: Vec<_> = r.rows.iter().filter(|x| x.method == "trice-bes").collect();
        assert_eq!(bes.len(), 3);
        assert!(bes.iter().all(|x| x.nmse.is_nan() && x.error.is_some()));
        assert!(r.summary("trice-bes", &s.points()[0]).unwrap().all_failed());
        assert!(!r.summary("ls", &s.points()[0]).unwrap().all_failed());
        assert!(r.any_cell_failed());
    }

    #[test]
    fn runtime_column_is_opt_in() {
        let mut s = spec(&["trice-bes"], &[10.0], 2);
        let r = run_sweep(&s, &RunOptions::default()).unwrap();
        assert!(r.rows.iter().all(|x| x.runtime_ms.is_nan()));
        s.record_runtime = true;
        let r = run_sweep(&s, &RunOptions::default()).unwrap();
        assert!(r.rows.iter().all(|x| x.runtime_ms >= 0.0));
    }

    #[test]
    fn noiseless_bes_rows_are_exact() {
        let r = run_sweep(&spec(&["trice-bes"], &[f64::INFINITY], 4), &RunOptions::default()).unwrap();
        for row in &r.rows {
            assert!(row.nmse < 1e-7);
            assert!(row.psi_rmse < 1e-6 && row.mu_rmse < 1e-6, "{row:?}");
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[f64::NAN, 1.0]), 1.0);
        assert!(median(&[f64::NAN]).is_nan());
        assert_eq!(mean(&[1.0, f64::NAN, 3.0]), 2.0);
    }

    #[test]
    fn matching_recovers_permutations() {
        let truth: Vec<[f64; 4]> = (0..4).map(|i| [0.3 * i as f64, 0.1 * i as f64, 0.0, 0.0]).collect();
        let est = vec![truth[2], truth[0], truth[3], truth[1]];
        assert_eq!(match_paths(&est, &truth), [2, 0, 3, 1]);
        let (p, m) = frequency_rmse(&est, &truth);
        assert_eq!((p, m), (0.0, 0.0));

        let big: Vec<[f64; 4]> = (0..9).map(|i| [0.2 * i as f64, 0.0, 0.0, 0.0]).collect();
        let mut rev = big.clone();
        rev.reverse();
        assert_eq!(match_paths(&rev, &big), (0..9).rev().collect::<Vec<_>>());
        assert!(frequency_rmse(&big[..3], &big).0.is_nan());
    }

    #[test]
    fn exhaustive_matching_beats_greedy_trap() {
        // greedy takes the closest pair (estimate 0, truth 0) and leaves
        // estimate 1 far from truth 1
        let truth = [[0.0, 0.0, 0.0, 0.0], [0.2, 0.0, 0.0, 0.0]];
        let est = [[0.099, 0.0, 0.0, 0.0], [-0.11, 0.0, 0.0, 0.0]];
        assert_eq!(match_paths(&est, &truth), [1, 0]);
    }
}
