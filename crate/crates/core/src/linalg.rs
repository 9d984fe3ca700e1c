//! Small dense complex linear-algebra helpers shared by the propagators and
//! the Green-function assembly.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{AtmError, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The 2N×2N antisymmetric unit `[[0, -I], [I, 0]]`.
pub fn j_matrix(n: usize) -> CMat {
    let mut j = CMat::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(k, n + k)] = -C64::ONE;
        j[(n + k, k)] = C64::ONE;
    }
    j
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Copy of the N×N block at block position (`row`, `col`) of a 2N×2N matrix.
pub fn block(m: &CMat, n: usize, row: usize, col: usize) -> CMat {
    m.view((row * n, col * n), (n, n)).into_owned()
}

pub fn from_blocks(aa: &CMat, ad: &CMat, da: &CMat, dd: &CMat) -> CMat {
    let n = aa.nrows();
    let mut m = CMat::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(aa);
    m.view_mut((0, n), (n, n)).copy_from(ad);
    m.view_mut((n, 0), (n, n)).copy_from(da);
    m.view_mut((n, n), (n, n)).copy_from(dd);
    m
}

pub fn inverse(m: &CMat, what: &str) -> Result<CMat> {
    let scale = frobenius(m).max(f64::MIN_POSITIVE);
    let lu = m.clone().lu();
    let inv = lu.try_inverse().ok_or_else(|| AtmError::Singular(what.to_string()))?;
    if !inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) || frobenius(&inv) * scale > 1e15 {
        return Err(AtmError::Singular(what.to_string()));
    }
    Ok(inv)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// 2-norm condition number via SVD; `inf` for singular input.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = singular_values(m);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Orthonormal basis for the column space of a full-column-rank matrix.
pub fn orthonormalize(m: &CMat) -> CMat {
    m.clone().qr().q()
}

/// Orthonormal basis of the numerical null space of `m`: right singular
/// vectors whose singular value is below `threshold`.
pub fn null_space(m: &CMat, threshold: f64) -> CMat {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let cols: Vec<CVec> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < threshold)
        .map(|(k, _)| v_t.row(k).adjoint().into_owned())
        .collect();
    // thin SVD of a square matrix has n singular values
    debug_assert_eq!(svd.singular_values.len(), n);
    if cols.is_empty() {
        CMat::zeros(n, 0)
    } else {
        CMat::from_columns(&cols)
    }
}

/// Degree-13 Padé numerator/denominator coefficients for exp (Higham 2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a [13/13] Padé approximant.
pub fn expm(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(AtmError::Contract("expm requires a square matrix".into()));
    }
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(AtmError::Contract("expm input is not finite".into()));
    }
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * C64::from(2f64.powi(-squarings));

    let id = CMat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| C64::from(PADE13[k]);

    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &id * b(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &id * b(0);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| AtmError::Singular("Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if !is_finite(&r) {
        return Err(AtmError::Contract("matrix exponential overflowed".into()));
    }
    Ok(r)
}
