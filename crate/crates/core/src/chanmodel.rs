//! Geometric channel model for the BS → RIS → MS link.
//!
//! Each link is a sum of a few specular paths. A path of the BS→RIS channel
//! `H_T` (size `M_S × M_T`) contributes `α · v2(μ_v, μ_h) · v1(ψ)^T`; a path
//! of the RIS→MS channel `H_R` (size `M_R × M_S`) contributes
//! `α · v1(ψ) · v2(μ_v, μ_h)^T`. The cascaded channel seen through the RIS
//! phase vector is `H = H_T^T ⋄ H_R`, of size `M_R·M_T × M_S`.
//!
//! All frequencies are spatial frequencies in radians per element.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{khatri_rao, kron, kron_vec, CMatrix, CVector, C64};

/// Minimum wrapped distance between the frequencies of two paths of one link.
pub const MIN_SEPARATION: f64 = 1e-6;

/// Array sizes, RF chains, training budget and model order.
///
/// Deserialising fills missing fields from [`SystemConfig::desk_scale`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// BS antennas.
    pub m_t: usize,
    /// MS antennas.
    pub m_r: usize,
    /// RIS rows (vertical elements).
    pub m_s_v: usize,
    /// RIS columns (horizontal elements).
    pub m_s_h: usize,
    /// MS RF chains, i.e. receive beams per subframe.
    pub n_r: usize,
    /// BS training vectors.
    pub k_t: usize,
    /// Vertical RIS training dimension.
    pub k_s_v: usize,
    /// Horizontal RIS training dimension.
    pub k_s_h: usize,
    /// Paths on the BS→RIS link.
    pub l_t: usize,
    /// Paths on the RIS→MS link.
    pub l_r: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig::desk_scale()
    }
}

impl SystemConfig {
    /// Small configuration used by the harness by default.
    pub fn desk_scale() -> Self {
        SystemConfig {
            m_t: 16,
            m_r: 8,
            m_s_v: 8,
            m_s_h: 8,
            n_r: 4,
            k_t: 4,
            k_s_v: 4,
            k_s_h: 4,
            l_t: 2,
            l_r: 2,
        }
    }

    /// The full-size setup: 64 BS antennas, 32 MS antennas, a 16×16 RIS,
    /// 8 RF chains, 8 BS beams and 4×4 RIS training vectors.
    pub fn full_scale() -> Self {
        SystemConfig {
            m_t: 64,
            m_r: 32,
            m_s_v: 16,
            m_s_h: 16,
            n_r: 8,
            k_t: 8,
            k_s_v: 4,
            k_s_h: 4,
            l_t: 2,
            l_r: 2,
        }
    }

    pub fn m_s(&self) -> usize {
        self.m_s_v * self.m_s_h
    }

    pub fn k_s(&self) -> usize {
        self.k_s_v * self.k_s_h
    }

    /// Number of cascaded paths `L_T · L_R`.
    pub fn l(&self) -> usize {
        self.l_t * self.l_r
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("m_t", self.m_t),
            ("m_r", self.m_r),
            ("m_s_v", self.m_s_v),
            ("m_s_h", self.m_s_h),
            ("n_r", self.n_r),
            ("k_t", self.k_t),
            ("k_s_v", self.k_s_v),
            ("k_s_h", self.k_s_h),
            ("l_t", self.l_t),
            ("l_r", self.l_r),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        let bounds = [
            ("n_r", self.n_r, "m_r", self.m_r),
            ("k_t", self.k_t, "m_t", self.m_t),
            ("k_s_v", self.k_s_v, "m_s_v", self.m_s_v),
            ("k_s_h", self.k_s_h, "m_s_h", self.m_s_h),
        ];
        for (a, va, b, vb) in bounds {
            if va > vb {
                return Err(Error::InvalidConfig(format!("{a} = {va} exceeds {b} = {vb}")));
            }
        }
        Ok(())
    }
}

/// Half-open frequency interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub lo: f64,
    pub hi: f64,
}

impl Sector {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if hi > lo && lo.is_finite() && hi.is_finite() {
            Ok(Sector { lo, hi })
        } else {
            Err(Error::EmptySector { lo, hi })
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }

    /// Sector covered by the first `beams` rows of an `elements`-point DFT:
    /// `[0, 2π(beams − 1)/elements)`.
    pub fn visible(beams: usize, elements: usize) -> Result<Self> {
        Sector::new(0.0, 2.0 * PI * (beams as f64 - 1.0) / elements as f64)
    }
}

/// Visible sectors of the four frequency axes for `cfg`:
/// `(ψ_T, ψ_R, μ_v, μ_h)`, the RIS ones for the effective frequencies.
pub fn visible_sectors(cfg: &SystemConfig) -> Result<[Sector; 4]> {
    Ok([
        Sector::visible(cfg.k_t, cfg.m_t)?,
        Sector::visible(cfg.n_r, cfg.m_r)?,
        Sector::visible(cfg.k_s_v, cfg.m_s_v)?,
        Sector::visible(cfg.k_s_h, cfg.m_s_h)?,
    ])
}

/// Ground-truth path parameters of both links.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub psi_t: Vec<f64>,
    pub psi_r: Vec<f64>,
    pub mu_v_t: Vec<f64>,
    pub mu_h_t: Vec<f64>,
    pub mu_v_r: Vec<f64>,
    pub mu_h_r: Vec<f64>,
    pub alpha_t: Vec<C64>,
    pub alpha_r: Vec<C64>,
}

impl ChannelParams {
    /// Effective cascaded path `n = ℓ·L_R + k` (0-based) as
    /// `(ψ_T, ψ_R, μ_v, μ_h)`.
    pub fn cascaded_paths(&self) -> Vec<[f64; 4]> {
        let mut out = Vec::with_capacity(self.psi_t.len() * self.psi_r.len());
        for l in 0..self.psi_t.len() {
            for k in 0..self.psi_r.len() {
                out.push([
                    self.psi_t[l],
                    self.psi_r[k],
                    wrap(self.mu_v_t[l] + self.mu_v_r[k]),
                    wrap(self.mu_h_t[l] + self.mu_h_r[k]),
                ]);
            }
        }
        out
    }
}

/// Realised channel matrices and the effective RIS-side parameters.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// BS→RIS channel, `M_S × M_T`.
    pub h_t: CMatrix,
    /// RIS→MS channel, `M_R × M_S`.
    pub h_r: CMatrix,
    /// Cascaded channel, `M_R·M_T × M_S`.
    pub h: CMatrix,
    pub mu_v_eff: Vec<f64>,
    pub mu_h_eff: Vec<f64>,
    pub alpha_eff: Vec<C64>,
}

/// Angle kinds accepted by [`freq_from_angle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleKind {
    /// ULA angle `φ`: `ψ = 2π(d/λ)cos φ`.
    Azimuth1d,
    /// RIS azimuth `θ^h`: `μ^h = 2π(d/λ)cos θ^h`.
    RisHorizontal,
    /// RIS elevation `θ^v`, with `θ^h` as auxiliary angle:
    /// `μ^v = 2π(d/λ) sin θ^h cos θ^v`.
    RisVertical,
}

/// Reduces `x` modulo 2π into `[0, 2π)`. Values that round to 2π map to 0.
pub fn wrap(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let r = x.rem_euclid(two_pi);
    if two_pi - r < 1e-12 {
        0.0
    } else {
        r
    }
}

/// Distance between two frequencies on the circle.
pub fn wrapped_distance(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    d.min(2.0 * PI - d)
}

/// `[1, e^{jν}, …, e^{j(M−1)ν}]^T`.
pub fn steering_1d(nu: f64, m: usize) -> CVector {
    CVector::from_fn(m, |k, _| C64::from_polar(1.0, k as f64 * nu))
}

/// `kron(v1(μ_v, M_v), v1(μ_h, M_h))`; entry `p·M_h + q` is
/// `e^{j(p·μ_v + q·μ_h)}`.
pub fn steering_2d(mu_v: f64, mu_h: f64, m_v: usize, m_h: usize) -> CVector {
    kron_vec(&steering_1d(mu_v, m_v), &steering_1d(mu_h, m_h))
}

/// Matrix whose columns are `v1(ν_i, m)`.
pub fn steering_matrix(freqs: &[f64], m: usize) -> CMatrix {
    CMatrix::from_fn(m, freqs.len(), |k, i| C64::from_polar(1.0, k as f64 * freqs[i]))
}

/// Converts a physical angle into a spatial frequency.
///
/// `aux_angle_deg` is only read for [`AngleKind::RisVertical`], where it is
/// the RIS azimuth `θ^h`.
pub fn freq_from_angle(
    angle_deg: f64,
    kind: AngleKind,
    aux_angle_deg: f64,
    d_over_lambda: f64,
) -> Result<f64> {
    let check = |a: f64, lim: f64| {
        if (-lim..=lim).contains(&a) {
            Ok(())
        } else {
            Err(Error::AngleOutOfDomain {
                angle_deg: a,
                min: -lim,
                max: lim,
            })
        }
    };
    let k = 2.0 * PI * d_over_lambda;
    match kind {
        AngleKind::Azimuth1d | AngleKind::RisHorizontal => {
            check(angle_deg, 180.0)?;
            Ok(k * angle_deg.to_radians().cos())
        }
        AngleKind::RisVertical => {
            check(angle_deg, 90.0)?;
            check(aux_angle_deg, 180.0)?;
            Ok(k * aux_angle_deg.to_radians().sin() * angle_deg.to_radians().cos())
        }
    }
}

/// Draws one circularly-symmetric complex normal sample with unit variance.
pub fn complex_normal(rng: &mut impl Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn well_separated(freqs: &[f64]) -> bool {
    freqs.iter().enumerate().all(|(i, &a)| {
        freqs[i + 1..]
            .iter()
            .all(|&b| wrapped_distance(a, b) >= MIN_SEPARATION)
    })
}

fn uniform_draws(rng: &mut impl Rng, n: usize, width: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * width).collect()
}

/// Draws path parameters inside the DFT-beamspace visible sectors.
///
/// `ψ_R ~ U(0, 2π(N_R−1)/M_R)` and `ψ_T ~ U(0, 2π(K_T−1)/M_T)`. The RIS
/// frequencies of each link are drawn over half of the corresponding
/// effective sector, so every sum `μ_T,ℓ + μ_R,k` falls inside it. Gains are
/// unit-variance complex normal per link. Paths of one link are redrawn until
/// their `ψ` values are at least [`MIN_SEPARATION`] apart.
pub fn sample_paths(cfg: &SystemConfig, rng: &mut impl Rng) -> Result<ChannelParams> {
    cfg.validate()?;
    let [s_t, s_r, s_v, s_h] = visible_sectors(cfg)?;

    let draw_distinct = |rng: &mut _, n: usize, width: f64| loop {
        let f = uniform_draws(rng, n, width);
        if well_separated(&f) {
            break f;
        }
    };
    let psi_t = draw_distinct(rng, cfg.l_t, s_t.width());
    let psi_r = draw_distinct(rng, cfg.l_r, s_r.width());
    let mu_v_t = uniform_draws(rng, cfg.l_t, s_v.width() / 2.0);
    let mu_h_t = uniform_draws(rng, cfg.l_t, s_h.width() / 2.0);
    let mu_v_r = uniform_draws(rng, cfg.l_r, s_v.width() / 2.0);
    let mu_h_r = uniform_draws(rng, cfg.l_r, s_h.width() / 2.0);
    let alpha_t = (0..cfg.l_t).map(|_| complex_normal(rng)).collect();
    let alpha_r = (0..cfg.l_r).map(|_| complex_normal(rng)).collect();
    Ok(ChannelParams {
        psi_t,
        psi_r,
        mu_v_t,
        mu_h_t,
        mu_v_r,
        mu_h_r,
        alpha_t,
        alpha_r,
    })
}

/// Draws path parameters whose frequencies lie exactly on the given grids.
///
/// `ψ_T` and `ψ_R` take distinct points of `grid_t` / `grid_r`. The RIS
/// grids describe effective frequencies; they must be uniform and start at
/// zero, and each link draws its RIS frequencies from the grid points below
/// half of the last point's successor, so every sum stays on the grid.
pub fn sample_on_grid(
    cfg: &SystemConfig,
    grid_t: &[f64],
    grid_r: &[f64],
    grid_v: &[f64],
    grid_h: &[f64],
    rng: &mut impl Rng,
) -> Result<ChannelParams> {
    cfg.validate()?;
    let pick_distinct = |rng: &mut _, n: usize, grid: &[f64], name: &str| {
        if grid.len() < n {
            return Err(Error::InvalidConfig(format!(
                "{name} grid has {} points, need {n} distinct",
                grid.len()
            )));
        }
        let idx = rand::seq::index::sample(rng, grid.len(), n);
        Ok(idx.iter().map(|i| grid[i]).collect::<Vec<_>>())
    };
    let half_grid = |grid: &[f64]| -> Vec<f64> {
        let step = if grid.len() > 1 { grid[1] - grid[0] } else { 0.0 };
        let span = grid.len() as f64 * step;
        grid.iter()
            .copied()
            .take_while(|&g| 2.0 * g < span - 1e-12 || g == 0.0)
            .collect()
    };
    let psi_t = pick_distinct(rng, cfg.l_t, grid_t, "psi_t")?;
    let psi_r = pick_distinct(rng, cfg.l_r, grid_r, "psi_r")?;
    let hv = half_grid(grid_v);
    let hh = half_grid(grid_h);
    if hv.is_empty() || hh.is_empty() {
        return Err(Error::InvalidConfig("empty RIS grid".into()));
    }
    let mut pick = |grid: &[f64], n: usize| -> Vec<f64> {
        (0..n).map(|_| grid[rng.random_range(0..grid.len())]).collect()
    };
    let mu_v_t = pick(&hv, cfg.l_t);
    let mu_h_t = pick(&hh, cfg.l_t);
    let mu_v_r = pick(&hv, cfg.l_r);
    let mu_h_r = pick(&hh, cfg.l_r);
    let alpha_t = (0..cfg.l_t).map(|_| complex_normal(rng)).collect();
    let alpha_r = (0..cfg.l_r).map(|_| complex_normal(rng)).collect();
    Ok(ChannelParams {
        psi_t,
        psi_r,
        mu_v_t,
        mu_h_t,
        mu_v_r,
        mu_h_r,
        alpha_t,
        alpha_r,
    })
}

/// RIS response matrix with columns `v1(μ_v,i) ⋄ v1(μ_h,i)`.
pub fn ris_response(mu_v: &[f64], mu_h: &[f64], m_s_v: usize, m_s_h: usize) -> Result<CMatrix> {
    khatri_rao(
        &steering_matrix(mu_v, m_s_v),
        &steering_matrix(mu_h, m_s_h),
    )
}

/// Builds `H_T`, `H_R` and the cascaded `H = (A_T ⊗ A_R)·G·B`.
pub fn realize(cfg: &SystemConfig, p: &ChannelParams) -> Result<ChannelSet> {
    cfg.validate()?;
    let lens = [
        (p.psi_t.len(), cfg.l_t),
        (p.mu_v_t.len(), cfg.l_t),
        (p.mu_h_t.len(), cfg.l_t),
        (p.alpha_t.len(), cfg.l_t),
        (p.psi_r.len(), cfg.l_r),
        (p.mu_v_r.len(), cfg.l_r),
        (p.mu_h_r.len(), cfg.l_r),
        (p.alpha_r.len(), cfg.l_r),
    ];
    if lens.iter().any(|(a, b)| a != b) {
        return Err(Error::dims("realize", "parameter lengths do not match L_T / L_R"));
    }

    let a_t = steering_matrix(&p.psi_t, cfg.m_t);
    let a_r = steering_matrix(&p.psi_r, cfg.m_r);
    let b_t = ris_response(&p.mu_v_t, &p.mu_h_t, cfg.m_s_v, cfg.m_s_h)?;
    let b_r = ris_response(&p.mu_v_r, &p.mu_h_r, cfg.m_s_v, cfg.m_s_h)?;
    let g_t = CMatrix::from_diagonal(&CVector::from_vec(p.alpha_t.clone()));
    let g_r = CMatrix::from_diagonal(&CVector::from_vec(p.alpha_r.clone()));

    let h_t = &b_t * &g_t * a_t.transpose();
    let h_r = &a_r * &g_r * b_r.transpose();

    let g = kron(&g_t, &g_r);
    let b = khatri_rao(&b_t.transpose(), &b_r.transpose())?;
    let h = kron(&a_t, &a_r) * &g * &b;

    let mut mu_v_eff = Vec::with_capacity(cfg.l());
    let mut mu_h_eff = Vec::with_capacity(cfg.l());
    let mut alpha_eff = Vec::with_capacity(cfg.l());
    for l in 0..cfg.l_t {
        for k in 0..cfg.l_r {
            mu_v_eff.push(wrap(p.mu_v_t[l] + p.mu_v_r[k]));
            mu_h_eff.push(wrap(p.mu_h_t[l] + p.mu_h_r[k]));
            alpha_eff.push(p.alpha_t[l] * p.alpha_r[k]);
        }
    }
    Ok(ChannelSet {
        h_t,
        h_r,
        h,
        mu_v_eff,
        mu_h_eff,
        alpha_eff,
    })
}
