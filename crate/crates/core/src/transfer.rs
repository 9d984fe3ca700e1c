//! Associated transfer matrix `T(z, z0)` of the continuous pair `Ψ = (F, A)`:
//! per-layer propagation, chain composition and the symplectic identity suite.
//!
//! Block layout is fixed: rows and columns are ordered `(F, A)`, and the four
//! N×N blocks are named `T_AA` (top left), `T_AD` (top right), `T_DA`
//! (bottom left) and `T_DD` (bottom right).

use serde::{Deserialize, Serialize};

use crate::error::{AtmError, Result};
use crate::linalg::{self, frobenius, j_matrix, CMat, C64};
use crate::ode;
use crate::sl_system::{companion_matrix, CoefficientSet, SpectralPoint, StateVector};

/// Block index of a 2N×2N matrix: `A` is the primary-field half, `D` the
/// secondary-field half.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    A,
    D,
}

impl Block {
    fn index(self) -> usize {
        match self {
            Block::A => 0,
            Block::D => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TransferOptions {
    /// Local tolerance of the adaptive integrator.
    pub tol: f64,
    /// Condition number above which a propagated layer is rejected.
    pub max_condition: f64,
}

impl Default for TransferOptions {
    fn default() -> Self {
        TransferOptions { tol: 1e-10, max_condition: 1e14 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    m: CMat,
    z_from: f64,
    z_to: f64,
    sp: SpectralPoint,
}

impl TransferMatrix {
    pub fn new(m: CMat, z_from: f64, z_to: f64, sp: SpectralPoint) -> Result<Self> {
        if m.nrows() != m.ncols() || !m.nrows().is_multiple_of(2) || m.nrows() == 0 {
            return Err(AtmError::Contract(format!("transfer matrix must be 2N×2N, got {}×{}", m.nrows(), m.ncols())));
        }
        Ok(TransferMatrix { m, z_from, z_to, sp })
    }

    pub fn identity(dim: usize, z: f64, sp: SpectralPoint) -> Self {
        TransferMatrix { m: CMat::identity(2 * dim, 2 * dim), z_from: z, z_to: z, sp }
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows() / 2
    }

    pub fn z_from(&self) -> f64 {
        self.z_from
    }

    pub fn z_to(&self) -> f64 {
        self.z_to
    }

    pub fn sp(&self) -> &SpectralPoint {
        &self.sp
    }

    pub fn block(&self, row: Block, col: Block) -> CMat {
        linalg::block(&self.m, self.dim(), row.index(), col.index())
    }

    pub fn t_aa(&self) -> CMat {
        self.block(Block::A, Block::A)
    }

    pub fn t_ad(&self) -> CMat {
        self.block(Block::A, Block::D)
    }

    pub fn t_da(&self) -> CMat {
        self.block(Block::D, Block::A)
    }

    pub fn t_dd(&self) -> CMat {
        self.block(Block::D, Block::D)
    }

    pub fn condition_number(&self) -> f64 {
        linalg::condition_number(&self.m)
    }

    /// `T(z_from, z_to)`.
    pub fn inverse(&self) -> Result<TransferMatrix> {
        let inv = linalg::inverse(&self.m, "transfer matrix")?;
        Ok(TransferMatrix { m: inv, z_from: self.z_to, z_to: self.z_from, sp: self.sp })
    }

    fn check_condition(self, opts: &TransferOptions) -> Result<Self> {
        let cond = if linalg::is_finite(&self.m) { self.condition_number() } else { f64::INFINITY };
        if !(cond <= opts.max_condition) {
            return Err(AtmError::IllConditioned { z_from: self.z_from, z_to: self.z_to, cond });
        }
        Ok(self)
    }
}

/// Transconjugate `T^c` of a transfer matrix, held as the transfer matrix
/// evaluated at the reflected spectral point.
#[derive(Debug, Clone, PartialEq)]
pub struct Transconjugated {
    reflected: TransferMatrix,
}

impl Transconjugated {
    /// Wrap a transfer matrix computed at `sp.reflected()`.
    pub fn from_reflected(reflected: TransferMatrix) -> Self {
        Transconjugated { reflected }
    }

    /// Transconjugate of a real-axis transfer matrix (plain conjugate transpose).
    pub fn from_real_axis(t: &TransferMatrix) -> Result<Self> {
        if !t.sp.is_real_axis() {
            return Err(AtmError::TransconjugateOffAxis(t.sp.eta()));
        }
        Ok(Transconjugated { reflected: t.clone() })
    }

    /// `(T_{row,col})^c`, the transconjugate of a single block.
    pub fn of_block(&self, row: Block, col: Block) -> CMat {
        self.reflected.block(row, col).adjoint()
    }

    /// The full matrix `T^c`.
    pub fn matrix(&self) -> CMat {
        self.reflected.m.adjoint()
    }

    pub fn reflected(&self) -> &TransferMatrix {
        &self.reflected
    }

    pub fn z_from(&self) -> f64 {
        self.reflected.z_from
    }

    pub fn z_to(&self) -> f64 {
        self.reflected.z_to
    }
}

/// `m^c` for a matrix already evaluated on the real axis.
pub fn transconjugate(m: &CMat, sp: &SpectralPoint) -> Result<CMat> {
    if !sp.is_real_axis() {
        return Err(AtmError::TransconjugateOffAxis(sp.eta()));
    }
    Ok(m.adjoint())
}

/// `m^c(Ω) = [m(conj Ω)]†` for a matrix-valued function that can be
/// re-evaluated at the reflected spectral point.
pub fn transconjugate_with<F>(sp: &SpectralPoint, eval: F) -> Result<CMat>
where
    F: FnOnce(&SpectralPoint) -> Result<CMat>,
{
    Ok(eval(&sp.reflected())?.adjoint())
}

/// `exp(D·(z1 − z0))` for a layer with constant coefficients.
pub fn propagate_constant_layer(
    c: &CoefficientSet,
    z0: f64,
    z1: f64,
    sp: &SpectralPoint,
    opts: &TransferOptions,
) -> Result<TransferMatrix> {
    raw_constant_layer(c, z0, z1, sp)?.check_condition(opts)
}

pub(crate) fn raw_constant_layer(c: &CoefficientSet, z0: f64, z1: f64, sp: &SpectralPoint) -> Result<TransferMatrix> {
    if !c.is_constant() {
        return Err(AtmError::Contract("propagate_constant_layer needs constant coefficients".into()));
    }
    if z0 == z1 {
        return Ok(TransferMatrix::identity(c.dim(), z0, *sp));
    }
    let d = companion_matrix(c, 0.5 * (z0 + z1), sp)?;
    let m = linalg::expm(&(d * C64::from(z1 - z0))).map_err(|_| AtmError::IllConditioned {
        z_from: z0,
        z_to: z1,
        cond: f64::INFINITY,
    })?;
    Ok(TransferMatrix { m, z_from: z0, z_to: z1, sp: *sp })
}

/// Integrate `dT/dz = D(z)·T`, `T(z0, z0) = I` with adaptive steps.
pub fn propagate_graded_layer(
    c: &CoefficientSet,
    z0: f64,
    z1: f64,
    sp: &SpectralPoint,
    opts: &TransferOptions,
) -> Result<TransferMatrix> {
    let mut out = propagate_graded_sampled(c, z0, z1, sp, opts.tol, &[])?;
    out.pop().expect("final point").check_condition(opts)
}

/// Like [`propagate_graded_layer`] but also returns `T(zs, z0)` at each of the
/// ordered sample points, followed by `T(z1, z0)`.
pub fn propagate_graded_sampled(
    c: &CoefficientSet,
    z0: f64,
    z1: f64,
    sp: &SpectralPoint,
    tol: f64,
    samples: &[f64],
) -> Result<Vec<TransferMatrix>> {
    let n = c.dim();
    let (ys, _) = ode::integrate_linear(|z| companion_matrix(c, z, sp), &CMat::identity(2 * n, 2 * n), z0, z1, tol, samples)?;
    let ends = samples.iter().copied().chain(std::iter::once(z1));
    Ok(ys.into_iter().zip(ends).map(|(m, z)| TransferMatrix { m, z_from: z0, z_to: z, sp: *sp }).collect())
}

/// Constant layers use the matrix exponential, graded layers the integrator.
pub fn propagate_layer(
    c: &CoefficientSet,
    z0: f64,
    z1: f64,
    sp: &SpectralPoint,
    opts: &TransferOptions,
) -> Result<TransferMatrix> {
    if c.is_constant() {
        propagate_constant_layer(c, z0, z1, sp, opts)
    } else {
        propagate_graded_layer(c, z0, z1, sp, opts)
    }
}

fn same_point(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// `T(z2, z0) = T(z2, z1)·T(z1, z0)`.
pub fn compose(t2: &TransferMatrix, t1: &TransferMatrix) -> Result<TransferMatrix> {
    if t1.dim() != t2.dim() {
        return Err(AtmError::DimensionMismatch { expected: t1.dim(), found: t2.dim() });
    }
    if !same_point(t1.z_to, t2.z_from) {
        return Err(AtmError::Contract(format!(
            "cannot compose: first matrix ends at z = {}, second starts at z = {}",
            t1.z_to, t2.z_from
        )));
    }
    if t1.sp != t2.sp {
        return Err(AtmError::Contract("cannot compose transfer matrices at different spectral points".into()));
    }
    Ok(TransferMatrix { m: &t2.m * &t1.m, z_from: t1.z_from, z_to: t2.z_to, sp: t1.sp })
}

/// `Ψ(z) = T(z, z0)·Ψ(z0)`.
pub fn transfer_state(t: &TransferMatrix, s: &StateVector) -> Result<StateVector> {
    if s.dim() != t.dim() {
        return Err(AtmError::DimensionMismatch { expected: t.dim(), found: s.dim() });
    }
    StateVector::from_psi(&(&t.m * s.to_psi()))
}

/// Residuals of the symplectic identities, all in the Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymplecticReport {
    /// `‖T^c J T − J‖`
    pub residual_full: f64,
    /// `| |det T|² − 1 |`
    pub det_defect: f64,
    /// `‖T_AA^c T_DA − T_DA^c T_AA‖`
    pub residual_60: f64,
    /// `‖T_DD^c T_AD − T_AD^c T_DD‖`
    pub residual_61: f64,
    /// `‖T_AA^c T_DD − T_DA^c T_AD − I‖`
    pub residual_62: f64,
    pub at_real_axis: bool,
}

impl SymplecticReport {
    pub fn max_residual(&self) -> f64 {
        self.residual_full
            .max(self.det_defect)
            .max(self.residual_60)
            .max(self.residual_61)
            .max(self.residual_62)
    }

    pub fn within(&self, threshold: f64) -> bool {
        self.max_residual() < threshold
    }
}

pub fn symplectic_report(t: &TransferMatrix, t_c: &Transconjugated) -> Result<SymplecticReport> {
    let n = t.dim();
    if t_c.reflected.dim() != n {
        return Err(AtmError::DimensionMismatch { expected: n, found: t_c.reflected.dim() });
    }
    if t_c.reflected.sp != t.sp.reflected() && !(t.sp.is_real_axis() && t_c.reflected.sp == t.sp) {
        return Err(AtmError::Contract("transconjugate computed at a different spectral point".into()));
    }
    let j = j_matrix(n);
    let residual_full = frobenius(&(t_c.matrix() * &j * &t.m - &j));
    let det = t.m.clone().determinant();
    let det_defect = (det.norm_sqr() - 1.0).abs();

    use Block::{A, D};
    let aa_c = t_c.of_block(A, A);
    let ad_c = t_c.of_block(A, D);
    let da_c = t_c.of_block(D, A);
    let dd_c = t_c.of_block(D, D);
    let (aa, ad, da, dd) = (t.t_aa(), t.t_ad(), t.t_da(), t.t_dd());
    let residual_60 = frobenius(&(&aa_c * &da - &da_c * &aa));
    let residual_61 = frobenius(&(&dd_c * &ad - &ad_c * &dd));
    let residual_62 = frobenius(&(&aa_c * &dd - &da_c * &ad - CMat::identity(n, n)));
    Ok(SymplecticReport {
        residual_full,
        det_defect,
        residual_60,
        residual_61,
        residual_62,
        at_real_axis: t.sp.is_real_axis(),
    })
}
