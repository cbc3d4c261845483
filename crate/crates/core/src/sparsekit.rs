//! Frequency grids, structured dictionaries and greedy sparse solvers.
//!
//! Three dictionaries are used:
//!
//! * stage 1: atoms `kron(F^T v(ψ_T), W^T v(ψ_R))` over a `(ψ_T, ψ_R)` grid,
//!   matched against the columns of the training block;
//! * stage 2: atoms `kron(Q_v^T v(μ_v), Q_h^T v(μ_h))` over a `(μ_v, μ_h)`
//!   grid, matched against one projected path vector;
//! * joint 4D: atoms `kron(Q^T v2(μ_v, μ_h), kron(F^T v(ψ_T), W^T v(ψ_R)))`
//!   matched against the vectorised block.
//!
//! The joint dictionary factors as a Kronecker product of the other two
//! shapes, so correlations can be formed without materialising it.

use serde::{Deserialize, Serialize};

use crate::chanmodel::{ris_response, steering_matrix, Sector, SystemConfig};
use crate::error::{Error, Result};
use crate::numkit::{kron, kron_vec, lstsq, lstsq_mat, unvec, CMatrix, CVector};

/// Default hard limit on the number of joint-dictionary atoms.
pub const DEFAULT_ATOM_CAP: usize = 1 << 20;
/// Default limit on `atoms × atom length` before the joint dictionary is
/// kept in factored form.
pub const DEFAULT_DENSE_ENTRIES: usize = 1 << 22;

/// Relative margin under which two selection scores count as a tie.
const TIE_RTOL: f64 = 1e-12;

/// Sorted grid of spatial frequencies inside a sector.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub points: Vec<f64>,
    pub sector: Sector,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Spacing between neighbouring points (the sector width for one point).
    pub fn step(&self) -> f64 {
        self.sector.width() / self.points.len() as f64
    }
}

/// `count` uniformly spaced points over `[lo, hi)`, starting at `lo`.
pub fn make_grid(sector: Sector, count: usize) -> Result<Grid> {
    let sector = Sector::new(sector.lo, sector.hi)?;
    if count == 0 {
        return Err(Error::InvalidConfig("grid needs at least one point".into()));
    }
    let step = sector.width() / count as f64;
    let points = (0..count).map(|i| sector.lo + i as f64 * step).collect();
    Ok(Grid { points, sector })
}

/// Grid oversampling factors relative to the DFT resolution `2π/M` of each
/// axis. A factor β gives spacing `2π/(β·M)`; restricted to the visible
/// sector of `K` beams that is `β·(K − 1)` points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub beta_t: usize,
    pub beta_r: usize,
    pub beta_s_v: usize,
    pub beta_s_h: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::C1
    }
}

impl GridSpec {
    /// DFT-resolution grids on every axis.
    pub const C1: GridSpec = GridSpec {
        beta_t: 1,
        beta_r: 1,
        beta_s_v: 1,
        beta_s_h: 1,
    };
    /// Oversampled grids: 2× on the BS axis, 4× on the MS axis, 8× on both
    /// RIS axes.
    pub const C2: GridSpec = GridSpec {
        beta_t: 2,
        beta_r: 4,
        beta_s_v: 8,
        beta_s_h: 8,
    };

    /// Point counts `(ψ_T, ψ_R, μ_v, μ_h)` for `cfg`.
    pub fn counts(&self, cfg: &SystemConfig) -> [usize; 4] {
        [
            self.beta_t * cfg.k_t.saturating_sub(1),
            self.beta_r * cfg.n_r.saturating_sub(1),
            self.beta_s_v * cfg.k_s_v.saturating_sub(1),
            self.beta_s_h * cfg.k_s_h.saturating_sub(1),
        ]
    }

    pub fn build(&self, cfg: &SystemConfig) -> Result<GridSet> {
        if [self.beta_t, self.beta_r, self.beta_s_v, self.beta_s_h].contains(&0) {
            return Err(Error::InvalidConfig("grid factors must be positive".into()));
        }
        let sectors = crate::chanmodel::visible_sectors(cfg)?;
        let counts = self.counts(cfg);
        let mut grids = sectors.iter().zip(counts).map(|(s, c)| make_grid(*s, c));
        Ok(GridSet {
            t: grids.next().unwrap()?,
            r: grids.next().unwrap()?,
            v: grids.next().unwrap()?,
            h: grids.next().unwrap()?,
        })
    }
}

/// The four axis grids of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    pub t: Grid,
    pub r: Grid,
    pub v: Grid,
    pub h: Grid,
}

/// A collection of labelled atoms that can be correlated with residuals.
pub trait AtomSet {
    type Label: Copy;

    fn atom_count(&self) -> usize;
    fn atom_len(&self) -> usize;
    fn atom(&self, i: usize) -> CVector;
    fn atom_norm(&self, i: usize) -> f64;
    fn label(&self, i: usize) -> Self::Label;
    /// `atoms^H · r`, one row per atom.
    fn correlate(&self, r: &CMatrix) -> CMatrix;
}

/// Dense dictionary: one atom per column.
#[derive(Debug, Clone)]
pub struct Dictionary<L> {
    pub atoms: CMatrix,
    pub labels: Vec<L>,
    norms: Vec<f64>,
}

impl<L: Copy> Dictionary<L> {
    pub fn new(atoms: CMatrix, labels: Vec<L>) -> Result<Self> {
        if atoms.ncols() != labels.len() {
            return Err(Error::dims(
                "dictionary",
                format!("{} atoms, {} labels", atoms.ncols(), labels.len()),
            ));
        }
        let norms = atoms.column_iter().map(|c| c.norm()).collect();
        Ok(Dictionary {
            atoms,
            labels,
            norms,
        })
    }

    /// Copy with every atom scaled to unit norm (zero atoms stay zero).
    pub fn normalized(&self) -> Self {
        let mut atoms = self.atoms.clone();
        for (mut c, &n) in atoms.column_iter_mut().zip(&self.norms) {
            if n > 0.0 {
                c.unscale_mut(n);
            }
        }
        Dictionary::new(atoms, self.labels.clone()).expect("same shape")
    }
}

impl<L: Copy> AtomSet for Dictionary<L> {
    type Label = L;

    fn atom_count(&self) -> usize {
        self.atoms.ncols()
    }

    fn atom_len(&self) -> usize {
        self.atoms.nrows()
    }

    fn atom(&self, i: usize) -> CVector {
        self.atoms.column(i).into_owned()
    }

    fn atom_norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    fn label(&self, i: usize) -> L {
        self.labels[i]
    }

    fn correlate(&self, r: &CMatrix) -> CMatrix {
        self.atoms.ad_mul(r)
    }
}

fn pair_labels(a: &Grid, b: &Grid) -> Vec<(f64, f64)> {
    a.points
        .iter()
        .flat_map(|&x| b.points.iter().map(move |&y| (x, y)))
        .collect()
}

/// Stage-1 dictionary over `(ψ_T, ψ_R)`.
pub fn dict_stage1(f: &CMatrix, w: &CMatrix, grid_t: &Grid, grid_r: &Grid) -> Result<Dictionary<(f64, f64)>> {
    let at = f.transpose() * steering_matrix(&grid_t.points, f.nrows());
    let ar = w.transpose() * steering_matrix(&grid_r.points, w.nrows());
    Dictionary::new(kron(&at, &ar), pair_labels(grid_t, grid_r))
}

/// Stage-2 dictionary over effective `(μ_v, μ_h)`.
pub fn dict_stage2(q_v: &CMatrix, q_h: &CMatrix, grid_v: &Grid, grid_h: &Grid) -> Result<Dictionary<(f64, f64)>> {
    let bv = q_v.transpose() * steering_matrix(&grid_v.points, q_v.nrows());
    let bh = q_h.transpose() * steering_matrix(&grid_h.points, q_h.nrows());
    Dictionary::new(kron(&bv, &bh), pair_labels(grid_v, grid_h))
}

/// Size limits for [`dict_joint4d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointLimits {
    pub atom_cap: usize,
    pub dense_entries: usize,
}

impl Default for JointLimits {
    fn default() -> Self {
        JointLimits {
            atom_cap: DEFAULT_ATOM_CAP,
            dense_entries: DEFAULT_DENSE_ENTRIES,
        }
    }
}

/// Joint 4D dictionary over `(ψ_T, ψ_R, μ_v, μ_h)`.
///
/// Atom `i1·n2 + i2` is `kron(ris[i2], link[i1])`, where `link` holds the
/// stage-1 shaped atoms and `ris` the columns `Q^T (v(μ_v) ⋄ v(μ_h))`.
/// Labels are therefore in lexicographic `(ψ_T, ψ_R, μ_v, μ_h)` order.
#[derive(Debug, Clone)]
pub struct JointDictionary {
    link: Dictionary<(f64, f64)>,
    ris: Dictionary<(f64, f64)>,
    dense: Option<CMatrix>,
}

///
/// `ris_shape` is the `(M_S_v, M_S_h)` layout of the surface behind `Q`.
pub fn dict_joint4d(
    f: &CMatrix,
    w: &CMatrix,
    q: &CMatrix,
    ris_shape: (usize, usize),
    grids: &GridSet,
    limits: JointLimits,
) -> Result<JointDictionary> {
    let atoms = grids.t.len() * grids.r.len() * grids.v.len() * grids.h.len();
    if atoms > limits.atom_cap {
        return Err(Error::AtomCapExceeded {
            atoms,
            cap: limits.atom_cap,
        });
    }
    let link = dict_stage1(f, w, &grids.t, &grids.r)?;
    let (m_v, m_h) = ris_shape;
    if m_v * m_h != q.nrows() {
        return Err(Error::dims(
            "dict_joint4d",
            format!("Q has {} rows, RIS layout {m_v}x{m_h}", q.nrows()),
        ));
    }
    let labels = pair_labels(&grids.v, &grids.h);
    let (mv, mh): (Vec<f64>, Vec<f64>) = labels.iter().copied().unzip();
    let ris = Dictionary::new(q.transpose() * ris_response(&mv, &mh, m_v, m_h)?, labels)?;
    let mut dict = JointDictionary {
        link,
        ris,
        dense: None,
    };
    if atoms * dict.atom_len() <= limits.dense_entries {
        dict.dense = Some(dict.materialize());
    }
    Ok(dict)
}

impl JointDictionary {
    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn materialize(&self) -> CMatrix {
        let n2 = self.ris.atom_count();
        let mut out = CMatrix::zeros(self.atom_len(), self.atom_count());
        for i in 0..self.atom_count() {
            let a = kron_vec(&self.ris.atom(i % n2), &self.link.atom(i / n2));
            out.set_column(i, &a);
        }
        out
    }

    fn correlate_factored(&self, r: &CMatrix) -> CMatrix {
        let n1 = self.link.atom_count();
        let n2 = self.ris.atom_count();
        let inner = self.link.atom_len();
        let k_s = self.ris.atom_len();
        let mut out = CMatrix::zeros(n1 * n2, r.ncols());
        for c in 0..r.ncols() {
            let rm = unvec(&r.column(c).into_owned(), inner, k_s).expect("length checked by caller");
            let p = self.link.correlate(&rm);
            let cm = p * self.ris.atoms.map(|z| z.conj());
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    out[(i1 * n2 + i2, c)] = cm[(i1, i2)];
                }
            }
        }
        out
    }
}

impl AtomSet for JointDictionary {
    type Label = [f64; 4];

    fn atom_count(&self) -> usize {
        self.link.atom_count() * self.ris.atom_count()
    }

    fn atom_len(&self) -> usize {
        self.link.atom_len() * self.ris.atom_len()
    }

    fn atom(&self, i: usize) -> CVector {
        match &self.dense {
            Some(d) => d.column(i).into_owned(),
            None => {
                let n2 = self.ris.atom_count();
                kron_vec(&self.ris.atom(i % n2), &self.link.atom(i / n2))
            }
        }
    }

    fn atom_norm(&self, i: usize) -> f64 {
        let n2 = self.ris.atom_count();
        self.link.atom_norm(i / n2) * self.ris.atom_norm(i % n2)
    }

    fn label(&self, i: usize) -> [f64; 4] {
        let n2 = self.ris.atom_count();
        let (t, r) = self.link.label(i / n2);
        let (v, h) = self.ris.label(i % n2);
        [t, r, v, h]
    }

    fn correlate(&self, r: &CMatrix) -> CMatrix {
        match &self.dense {
            Some(d) => d.ad_mul(r),
            None => self.correlate_factored(r),
        }
    }
}

/// Output of [`omp`].
#[derive(Debug, Clone)]
pub struct OmpResult<L> {
    pub indices: Vec<usize>,
    pub labels: Vec<L>,
    pub coefficients: CVector,
    pub residual_norm: f64,
    /// Residual norm before the first and after every iteration.
    pub residual_history: Vec<f64>,
}

/// Output of [`somp`].
#[derive(Debug, Clone)]
pub struct SompResult<L> {
    pub indices: Vec<usize>,
    pub labels: Vec<L>,
    /// `sparsity × snapshots`.
    pub coefficients: CMatrix,
    pub residual_norm: f64,
}

fn check_solver_args<D: AtomSet>(dict: &D, len: usize, sparsity: usize) -> Result<()> {
    if sparsity == 0 || sparsity > dict.atom_count() {
        return Err(Error::InvalidConfig(format!(
            "sparsity {sparsity} outside 1..={}",
            dict.atom_count()
        )));
    }
    if len != dict.atom_len() {
        return Err(Error::dims(
            "sparse solver",
            format!("measurement length {len}, atom length {}", dict.atom_len()),
        ));
    }
    Ok(())
}

// Highest normalised score among unselected atoms; near-ties go to the
// lowest index.
fn select<D: AtomSet>(dict: &D, corr: &CMatrix, chosen: &[usize]) -> usize {
    let mut best = None::<(usize, f64)>;
    for i in 0..dict.atom_count() {
        if chosen.contains(&i) {
            continue;
        }
        let n = dict.atom_norm(i);
        let score = if n > 0.0 { corr.row(i).norm() / n } else { 0.0 };
        match best {
            Some((_, s)) if score <= s * (1.0 + TIE_RTOL) => {}
            _ => best = Some((i, score)),
        }
    }
    best.expect("sparsity bounded by atom count").0
}

fn selected_atoms<D: AtomSet>(dict: &D, idx: &[usize]) -> CMatrix {
    let mut m = CMatrix::zeros(dict.atom_len(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        m.set_column(c, &dict.atom(i));
    }
    m
}

/// Orthogonal matching pursuit with a fixed number of iterations.
pub fn omp<D: AtomSet>(dict: &D, y: &CVector, sparsity: usize) -> Result<OmpResult<D::Label>> {
    check_solver_args(dict, y.len(), sparsity)?;
    let mut indices = Vec::with_capacity(sparsity);
    let mut residual = y.clone();
    let mut history = vec![y.norm()];
    let mut coefficients = CVector::zeros(0);
    for _ in 0..sparsity {
        let corr = dict.correlate(&CMatrix::from_column_slice(residual.len(), 1, residual.as_slice()));
        indices.push(select(dict, &corr, &indices));
        let sub = selected_atoms(dict, &indices);
        coefficients = lstsq(&sub, y)?;
        residual = y - &sub * &coefficients;
        history.push(residual.norm());
    }
    Ok(OmpResult {
        labels: indices.iter().map(|&i| dict.label(i)).collect(),
        indices,
        coefficients,
        residual_norm: residual.norm(),
        residual_history: history,
    })
}

/// Simultaneous OMP: one shared support for all columns of `y`.
pub fn somp<D: AtomSet>(dict: &D, y: &CMatrix, sparsity: usize) -> Result<SompResult<D::Label>> {
    check_solver_args(dict, y.nrows(), sparsity)?;
    if y.ncols() == 0 {
        return Err(Error::Degenerate("SOMP needs at least one snapshot".into()));
    }
    let mut indices = Vec::with_capacity(sparsity);
    let mut residual = y.clone();
    let mut coefficients = CMatrix::zeros(0, y.ncols());
    for _ in 0..sparsity {
        let corr = dict.correlate(&residual);
        indices.push(select(dict, &corr, &indices));
        let sub = selected_atoms(dict, &indices);
        coefficients = lstsq_mat(&sub, y)?;
        residual = y - &sub * &coefficients;
    }
    Ok(SompResult {
        labels: indices.iter().map(|&i| dict.label(i)).collect(),
        indices,
        coefficients,
        residual_norm: residual.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanmodel::{steering_1d, steering_2d};
    use crate::numkit::testutil::{max_abs_diff, random_matrix, random_vector, rng};
    use crate::numkit::C64;
    use crate::training::build_training;
    use std::f64::consts::PI;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn grid_construction() {
        let g = make_grid(Sector::new(0.0, 2.0 * PI).unwrap(), 4).unwrap();
        let want = [0.0, PI / 2.0, PI, 1.5 * PI];
        assert!(g.points.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        let g = make_grid(Sector::new(0.3, 1.0).unwrap(), 1).unwrap();
        assert_eq!(g.points, vec![0.3]);
        assert!(make_grid(Sector { lo: 1.0, hi: 1.0 }, 3).is_err());

        let full = crate::chanmodel::SystemConfig::full_scale();
        let g = make_grid(Sector::new(0.0, 2.0 * PI).unwrap(), 2 * full.m_t).unwrap();
        assert_eq!(g.len(), 128);
    }

    #[test]
    fn grid_spec_matches_dft_resolution() {
        let cfg = SystemConfig::desk_scale();
        let g = GridSpec::C1.build(&cfg).unwrap();
        assert_eq!(g.t.len(), 3);
        assert!((g.t.step() - 2.0 * PI / 16.0).abs() < 1e-15);
        let g = GridSpec::C2.build(&cfg).unwrap();
        assert_eq!([g.t.len(), g.r.len(), g.v.len(), g.h.len()], [6, 12, 24, 24]);
        assert!((g.h.step() - 2.0 * PI / 64.0).abs() < 1e-15);
        for grid in [&g.t, &g.r, &g.v, &g.h] {
            assert!(grid.points.windows(2).all(|w| w[0] < w[1]));
            assert!(grid.points.iter().all(|&p| grid.sector.contains(p)));
        }
    }

    fn desk_dicts() -> (SystemConfig, crate::training::TrainingSet, GridSet) {
        let cfg = SystemConfig::desk_scale();
        let t = build_training(&cfg).unwrap();
        let g = GridSpec::C2.build(&cfg).unwrap();
        (cfg, t, g)
    }

    #[test]
    fn stage1_atoms_factor() {
        let (cfg, t, g) = desk_dicts();
        let d = dict_stage1(&t.f, &t.w, &g.t, &g.r).unwrap();
        assert_eq!(d.atom_count(), g.t.len() * g.r.len());
        for (it, &pt) in g.t.points.iter().enumerate() {
            for (ir, &pr) in g.r.points.iter().enumerate() {
                let i = it * g.r.len() + ir;
                let want = kron_vec(
                    &(t.f.transpose() * steering_1d(pt, cfg.m_t)),
                    &(t.w.transpose() * steering_1d(pr, cfg.m_r)),
                );
                assert!((d.atom(i) - want).camax() < 1e-13);
                assert_eq!(d.label(i), (pt, pr));
            }
        }
        let single = Grid {
            points: vec![0.4],
            sector: g.t.sector,
        };
        let d = dict_stage1(&t.f, &t.w, &single, &single).unwrap();
        assert_eq!(d.atom_count(), 1);
    }

    #[test]
    fn stage2_atom_equals_projected_2d_steering() {
        let (cfg, t, g) = desk_dicts();
        let d = dict_stage2(&t.q_v, &t.q_h, &g.v, &g.h).unwrap();
        assert_eq!(d.atom_count(), 24 * 24);
        for i in [0, 37, 575] {
            let (mv, mh) = d.label(i);
            let want = t.q.transpose() * steering_2d(mv, mh, cfg.m_s_v, cfg.m_s_h);
            assert!((d.atom(i) - want).camax() < 1e-12);
        }
        let zero = Grid {
            points: vec![0.0],
            sector: g.v.sector,
        };
        let d = dict_stage2(&t.q_v, &t.q_h, &zero, &zero).unwrap();
        let ones_v = t.q_v.transpose() * CVector::from_element(cfg.m_s_v, c(1.0));
        let ones_h = t.q_h.transpose() * CVector::from_element(cfg.m_s_h, c(1.0));
        assert!((d.atom(0) - kron_vec(&ones_v, &ones_h)).camax() < 1e-13);
    }

    #[test]
    fn stage2_exhaustive_scan_finds_true_label() {
        let (cfg, t, g) = desk_dicts();
        let d = dict_stage2(&t.q_v, &t.q_h, &g.v, &g.h).unwrap();
        for (iv, ih) in [(3, 17), (0, 0), (23, 5)] {
            let (mv, mh) = (g.v.points[iv], g.h.points[ih]);
            let y = t.q.transpose() * steering_2d(mv, mh, cfg.m_s_v, cfg.m_s_h) * C64::new(0.3, -1.2);
            let best = (0..d.atom_count())
                .max_by(|&a, &b| {
                    let sa = d.atom(a).dotc(&y).norm() / d.atom_norm(a);
                    let sb = d.atom(b).dotc(&y).norm() / d.atom_norm(b);
                    sa.total_cmp(&sb)
                })
                .unwrap();
            assert_eq!(d.label(best), (mv, mh));
        }
    }

    #[test]
    fn joint_dense_and_factored_agree() {
        let (cfg, t, g) = desk_dicts();
        let small = GridSet {
            t: g.t.clone(),
            r: Grid { points: g.r.points[..4].to_vec(), sector: g.r.sector },
            v: Grid { points: g.v.points[..5].to_vec(), sector: g.v.sector },
            h: Grid { points: g.h.points[..3].to_vec(), sector: g.h.sector },
        };
        let dense = dict_joint4d(&t.f, &t.w, &t.q, (cfg.m_s_v, cfg.m_s_h), &small, JointLimits::default()).unwrap();
        let lazy = dict_joint4d(
            &t.f,
            &t.w,
            &t.q,
            (cfg.m_s_v, cfg.m_s_h),
            &small,
            JointLimits { dense_entries: 0, ..Default::default() },
        )
        .unwrap();
        assert!(dense.is_dense() && !lazy.is_dense());
        assert_eq!(dense.atom_count(), 6 * 4 * 5 * 3);
        let mut r = rng(3);
        let y = random_matrix(&mut r, dense.atom_len(), 1);
        assert!(max_abs_diff(&dense.correlate(&y), &lazy.correlate(&y)) < 1e-10);
        for i in [0, 59, 359] {
            assert!((dense.atom(i) - lazy.atom(i)).camax() < 1e-13);
            assert!((dense.atom_norm(i) - dense.atom(i).norm()).abs() < 1e-10);
        }
        let yv = y.column(0).into_owned();
        let a = omp(&dense, &yv, 3).unwrap();
        let b = omp(&lazy, &yv, 3).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn joint_label_order_and_cap() {
        let (cfg, t, g) = desk_dicts();
        let d = dict_joint4d(&t.f, &t.w, &t.q, (cfg.m_s_v, cfg.m_s_h), &g, JointLimits::default()).unwrap();
        let n = d.atom_count();
        assert_eq!(n, 6 * 12 * 24 * 24);
        assert!(!d.is_dense());
        assert_eq!(d.label(0), [g.t.points[0], g.r.points[0], g.v.points[0], g.h.points[0]]);
        assert_eq!(d.label(1), [g.t.points[0], g.r.points[0], g.v.points[0], g.h.points[1]]);
        assert_eq!(d.label(n - 1)[0], *g.t.points.last().unwrap());

        let err = dict_joint4d(&t.f, &t.w, &t.q, (cfg.m_s_v, cfg.m_s_h), &g, JointLimits { atom_cap: 1000, ..Default::default() });
        assert!(matches!(err, Err(Error::AtomCapExceeded { atoms, .. }) if atoms == n));
    }

    #[test]
    fn joint_full_scale_dft_grid_count() {
        let cfg = SystemConfig::full_scale();
        let t = build_training(&cfg).unwrap();
        let full = |m: usize| make_grid(Sector::new(0.0, 2.0 * PI).unwrap(), m).unwrap();
        let g = GridSet {
            t: full(64),
            r: full(32),
            v: full(16),
            h: full(16),
        };
        let d = dict_joint4d(&t.f, &t.w, &t.q, (cfg.m_s_v, cfg.m_s_h), &g, JointLimits::default()).unwrap();
        assert_eq!(d.atom_count(), 524_288);
    }

    #[test]
    fn joint_l1_scan_recovers_tuple() {
        let (cfg, t, g) = desk_dicts();
        let g = GridSet {
            t: g.t,
            r: g.r,
            v: Grid { points: g.v.points.iter().step_by(4).copied().collect(), sector: g.v.sector },
            h: Grid { points: g.h.points.iter().step_by(4).copied().collect(), sector: g.h.sector },
        };
        let d = dict_joint4d(&t.f, &t.w, &t.q, (cfg.m_s_v, cfg.m_s_h), &g, JointLimits::default()).unwrap();
        let truth = [g.t.points[4], g.r.points[7], g.v.points[2], g.h.points[5]];
        let atom = kron_vec(
            &(t.q.transpose() * steering_2d(truth[2], truth[3], cfg.m_s_v, cfg.m_s_h)),
            &kron_vec(
                &(t.f.transpose() * steering_1d(truth[0], cfg.m_t)),
                &(t.w.transpose() * steering_1d(truth[1], cfg.m_r)),
            ),
        );
        let res = omp(&d, &(atom * C64::new(-0.7, 0.2)), 1).unwrap();
        assert_eq!(res.labels[0], truth);
        assert!(res.residual_norm < 1e-9);
    }

    #[test]
    fn omp_trivial_cases() {
        let id = Dictionary::new(CMatrix::identity(4, 4), vec![1usize, 2, 3, 4]).unwrap();
        let mut e2 = CVector::zeros(4);
        e2[1] = c(1.0);
        let r = omp(&id, &e2, 1).unwrap();
        assert_eq!(r.labels, vec![2]);
        assert!((r.coefficients[0] - c(1.0)).norm() < 1e-14);
        assert!(r.residual_norm < 1e-14);

        let mut rr = rng(1);
        let q = random_matrix(&mut rr, 6, 4).qr().q();
        let d = Dictionary::new(q.clone(), vec![1usize, 2, 3, 4]).unwrap();
        let y = q.column(0) * c(2.0) + q.column(2);
        let r = omp(&d, &y, 2).unwrap();
        let mut pairs: Vec<_> = r.labels.iter().copied().zip(r.coefficients.iter().copied()).collect();
        pairs.sort_by_key(|p| p.0);
        assert_eq!(pairs[0].0, 1);
        assert_eq!(pairs[1].0, 3);
        assert!((pairs[0].1 - c(2.0)).norm() < 1e-12 && (pairs[1].1 - c(1.0)).norm() < 1e-12);

        assert!(omp(&d, &y, 0).is_err());
        assert!(omp(&d, &y, 5).is_err());
        assert!(omp(&d, &CVector::zeros(3), 1).is_err());
    }

    #[test]
    fn omp_ties_pick_lowest_index() {
        let d = Dictionary::new(CMatrix::identity(3, 3), vec![0usize, 1, 2]).unwrap();
        let y = CVector::from_element(3, c(1.0));
        let r = omp(&d, &y, 1).unwrap();
        assert_eq!(r.indices, vec![0]);
    }

    // Exhaustive least-squares search over all supports of size 2.
    fn best_pair(d: &Dictionary<usize>, y: &CVector) -> (usize, usize) {
        let n = d.atom_count();
        let mut best = (0, 1, f64::INFINITY);
        for a in 0..n {
            for b in a + 1..n {
                let mut sub = CMatrix::zeros(y.len(), 2);
                sub.set_column(0, &d.atom(a));
                sub.set_column(1, &d.atom(b));
                let x = lstsq(&sub, y).unwrap();
                let res = (y - &sub * x).norm();
                if res < best.2 {
                    best = (a, b, res);
                }
            }
        }
        (best.0, best.1)
    }

    #[test]
    fn omp_agrees_with_exhaustive_oracle_on_random_dictionary() {
        let mut r = rng(2);
        let mut agree = 0;
        for _ in 0..20 {
            let d = Dictionary::new(random_matrix(&mut r, 6, 8), (0..8).collect()).unwrap();
            let x = random_vector(&mut r, 2);
            let (i, j) = (1, 5);
            let y = d.atom(i) * x[0] + d.atom(j) * x[1];
            let mut got = omp(&d, &y, 2).unwrap().indices;
            got.sort();
            let want = best_pair(&d, &y);
            if (got[0], got[1]) == want {
                agree += 1;
            }
        }
        assert!(agree >= 18, "{agree}/20");
    }

    #[test]
    fn somp_single_column_matches_omp() {
        let mut r = rng(4);
        let d = Dictionary::new(random_matrix(&mut r, 10, 30), (0..30).collect::<Vec<usize>>()).unwrap();
        for _ in 0..5 {
            let y = random_vector(&mut r, 10);
            let a = omp(&d, &y, 3).unwrap();
            let b = somp(&d, &CMatrix::from_column_slice(10, 1, y.as_slice()), 3).unwrap();
            assert_eq!(a.indices, b.indices);
        }
    }

    #[test]
    fn somp_single_nonzero_row() {
        let mut r = rng(5);
        let q = random_matrix(&mut r, 8, 8).qr().q();
        let d = Dictionary::new(q.clone(), (0..8).collect::<Vec<usize>>()).unwrap();
        let row = random_matrix(&mut r, 1, 5);
        let y = q.column(6) * row;
        let res = somp(&d, &y, 1).unwrap();
        assert_eq!(res.labels, vec![6]);
        assert!(res.residual_norm < 1e-12);
    }

    #[test]
    fn somp_recovers_on_grid_stage1_pairs() {
        let (cfg, t, g) = desk_dicts();
        let d = dict_stage1(&t.f, &t.w, &g.t, &g.r).unwrap();
        let (pt, pr) = ([g.t.points[0], g.t.points[3]], [g.r.points[2], g.r.points[9]]);
        let at = steering_matrix(&pt, cfg.m_t);
        let ar = steering_matrix(&pr, cfg.m_r);
        let a = kron(&(t.f.transpose() * at), &(t.w.transpose() * ar));
        let mut r = rng(6);
        let y = &a * random_matrix(&mut r, 4, cfg.k_s());
        let res = somp(&d, &y, 4).unwrap();
        let mut got = res.labels.clone();
        got.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut want: Vec<_> = pt.iter().flat_map(|&x| pr.iter().map(move |&y| (x, y))).collect();
        want.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(got, want);
        assert!(res.residual_norm < 1e-9);
    }

    #[test]
    fn normalized_dictionary_has_unit_atoms() {
        let mut r = rng(7);
        let d = Dictionary::new(random_matrix(&mut r, 5, 7), (0..7).collect::<Vec<usize>>()).unwrap();
        let n = d.normalized();
        for i in 0..7 {
            assert!((n.atom_norm(i) - 1.0).abs() < 1e-14);
        }
    }
}
