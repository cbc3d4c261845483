//! Dense complex linear-algebra kernels.
//!
//! Matrices are `nalgebra` dense matrices of `Complex<f64>`; storage is
//! column-major, which fixes the meaning of [`vec`] and [`unvec`] as column
//! stacking throughout the crate.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default relative cut-off for singular values in [`pinv`] and [`lstsq`].
pub const PINV_RTOL: f64 = 1e-12;

/// Kronecker product, `(ra·rb) × (ca·cb)`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Kronecker product of two column vectors.
pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        let off = i * b.len();
        for (j, bj) in b.iter().enumerate() {
            out[off + j] = ai * bj;
        }
    }
    out
}

/// Column-wise Kronecker product: column `i` is `kron(a_i, b_i)`.
pub fn khatri_rao(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::dims(
            "khatri_rao",
            format!("{} vs {} columns", a.ncols(), b.ncols()),
        ));
    }
    let (ra, rb) = (a.nrows(), b.nrows());
    let mut out = CMatrix::zeros(ra * rb, a.ncols());
    for c in 0..a.ncols() {
        for i in 0..ra {
            let ai = a[(i, c)];
            for j in 0..rb {
                out[(i * rb + j, c)] = ai * b[(j, c)];
            }
        }
    }
    Ok(out)
}

/// Element-wise product.
pub fn hadamard(a: &CVector, b: &CVector) -> Result<CVector> {
    if a.len() != b.len() {
        return Err(Error::dims(
            "hadamard",
            format!("lengths {} and {}", a.len(), b.len()),
        ));
    }
    Ok(a.component_mul(b))
}

/// Stacks the columns of `a` on top of each other.
pub fn vec(a: &CMatrix) -> CVector {
    CVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &CVector, rows: usize, cols: usize) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(Error::dims(
            "unvec",
            format!("length {} cannot fill {rows}x{cols}", v.len()),
        ));
    }
    Ok(CMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Thin SVD `a = U·diag(s)·V^H` with `s` descending.
struct Svd {
    u: CMatrix,
    s: Vec<f64>,
    v: CMatrix,
}

// nalgebra's complex SVD returns wrong factors for some exactly
// rank-deficient inputs (e.g. 8x16 outer products), which is the common
// case here, so the factorisation goes through faer.
fn svd(a: &CMatrix) -> Svd {
    let (m, n) = a.shape();
    let fa = faer::Mat::<C64>::from_fn(m, n, |i, j| a[(i, j)]);
    let dec = fa.thin_svd().expect("SVD of a finite matrix converges");
    let k = m.min(n);
    let (fu, fs, fv) = (dec.U(), dec.S().column_vector(), dec.V());
    Svd {
        u: CMatrix::from_fn(m, k, |i, j| fu[(i, j)]),
        s: (0..k).map(|i| fs[i].re).collect(),
        v: CMatrix::from_fn(n, k, |i, j| fv[(i, j)]),
    }
}

/// Singular values in descending order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    svd(a).s
}

/// Number of singular values above `rtol` times the largest one.
pub fn numerical_rank(a: &CMatrix, rtol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > rtol * smax).count(),
        _ => 0,
    }
}

/// Left singular vectors of the `k` largest singular values, as columns in
/// descending order, together with all singular values (descending).
pub fn dominant_left_subspace(a: &CMatrix, k: usize) -> Result<(CMatrix, Vec<f64>)> {
    if k > a.nrows().min(a.ncols()) {
        return Err(Error::RankDeficient {
            rank: a.nrows().min(a.ncols()),
            needed: k,
        });
    }
    let dec = svd(a);
    Ok((dec.u.columns(0, k).into_owned(), dec.s))
}

/// Moore-Penrose pseudo-inverse through the SVD. Singular values at or
/// below `tol` times the largest one are treated as zero.
pub fn pinv(a: &CMatrix, tol: f64) -> CMatrix {
    let (m, n) = a.shape();
    if a.is_empty() || a.iter().all(|z| z.norm_sqr() == 0.0) {
        return CMatrix::zeros(n, m);
    }
    let dec = svd(a);
    let cut = tol * dec.s[0];
    let keep = dec.s.iter().take_while(|&&s| s > cut).count();
    let inv = CVector::from_iterator(keep, dec.s[..keep].iter().map(|&s| C64::new(1.0 / s, 0.0)));
    let v = dec.v.columns(0, keep);
    let u = dec.u.columns(0, keep);
    v * CMatrix::from_diagonal(&inv) * u.adjoint()
}

/// Minimum-norm least-squares solution `pinv(a)·b`.
pub fn lstsq(a: &CMatrix, b: &CVector) -> Result<CVector> {
    if a.nrows() != b.len() {
        return Err(Error::dims(
            "lstsq",
            format!("{} rows vs rhs length {}", a.nrows(), b.len()),
        ));
    }
    Ok(pinv(a, PINV_RTOL) * b)
}

/// Multi right-hand-side form of [`lstsq`].
pub fn lstsq_mat(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::dims(
            "lstsq",
            format!("{} rows vs rhs with {} rows", a.nrows(), b.nrows()),
        ));
    }
    Ok(pinv(a, PINV_RTOL) * b)
}

/// Dominant singular triplet `a ≈ s·u·v^H`.
#[derive(Debug, Clone)]
pub struct Rank1 {
    pub u: CVector,
    pub s: f64,
    pub v: CVector,
}

pub fn rank1_approx(a: &CMatrix) -> Rank1 {
    let (m, n) = a.shape();
    if a.is_empty() || a.iter().all(|z| z.norm_sqr() == 0.0) {
        let unit = |len: usize| CVector::from_fn(len, |i, _| C64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0));
        return Rank1 {
            u: unit(m),
            s: 0.0,
            v: unit(n),
        };
    }
    let dec = svd(a);
    Rank1 {
        u: dec.u.column(0).into_owned(),
        s: dec.s[0],
        v: dec.v.column(0).into_owned(),
    }
}

/// Complex Schur form `a = Z·T·Z^H` with `T` upper triangular.
pub fn schur(a: &CMatrix) -> (CMatrix, CMatrix) {
    Schur::new(a.clone()).unpack()
}

/// Squared Frobenius norm.
pub fn fro2(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    pub fn random_vector(rng: &mut impl Rng, len: usize) -> CVector {
        CVector::from_fn(len, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        assert_eq!(a.shape(), b.shape());
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }
}
