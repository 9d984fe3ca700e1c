//! Matrix Sturm–Liouville problem for a single medium.
//!
//! The operator acts on an N-vector `F(z)` as
//!
//! ```text
//! L·F = (B·F' + P·F)' + Y·F' + W·F
//! ```
//!
//! and the secondary field is `A = B·F' + P·F`. Together `Ψ = (F, A)` obeys the
//! first-order system `Ψ' = D·Ψ` with the companion matrix
//!
//! ```text
//! D = [[ -B⁻¹P,        B⁻¹   ],
//!      [ Y·B⁻¹·P − W,  −Y·B⁻¹ ]]
//! ```

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AtmError, Result};
use crate::linalg::{frobenius, j_matrix, CMat, CVec, C64, I};
use crate::quadrature;

/// Complex eigenvalue parameter `Ω`, causal broadening `η ≥ 0` and in-plane
/// wavevector `κ`. Coefficients see `Ω + iη` through [`SpectralPoint::regularized`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    omega: C64,
    eta: f64,
    kappa: [f64; 2],
}

impl SpectralPoint {
    pub fn new(omega: C64, eta: f64, kappa: [f64; 2]) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(AtmError::NegativeEta(eta));
        }
        Ok(SpectralPoint { omega, eta, kappa })
    }

    /// A point on the real axis with `κ = 0`.
    pub fn real(omega: f64) -> Self {
        SpectralPoint { omega: C64::new(omega, 0.0), eta: 0.0, kappa: [0.0; 2] }
    }

    pub fn causal(omega: f64, eta: f64) -> Result<Self> {
        Self::new(C64::new(omega, 0.0), eta, [0.0; 2])
    }

    pub fn with_eta(self, eta: f64) -> Result<Self> {
        Self::new(self.omega, eta, self.kappa)
    }

    pub fn with_kappa(self, kappa: [f64; 2]) -> Self {
        SpectralPoint { kappa, ..self }
    }

    pub fn omega(&self) -> C64 {
        self.omega
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn kappa(&self) -> [f64; 2] {
        self.kappa
    }

    pub fn kappa_sq(&self) -> f64 {
        self.kappa[0] * self.kappa[0] + self.kappa[1] * self.kappa[1]
    }

    /// `Ω + iη`, the value every coefficient callback must use.
    pub fn regularized(&self) -> C64 {
        self.omega + C64::new(0.0, self.eta)
    }

    pub fn is_real_axis(&self) -> bool {
        self.eta == 0.0 && self.omega.im == 0.0
    }

    /// The point `conj(Ω + iη)` at which matrices are re-evaluated to form
    /// transconjugates.
    pub fn reflected(&self) -> SpectralPoint {
        SpectralPoint { omega: self.regularized().conj(), eta: 0.0, kappa: self.kappa }
    }
}

/// Coefficient matrices of one medium evaluated at a single `(z, Ω, κ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub b: CMat,
    pub p: CMat,
    pub y: CMat,
    pub w: CMat,
}

impl Coefficients {
    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    fn check(&self, dim: usize, z: f64) -> Result<()> {
        for (name, m) in [("B", &self.b), ("P", &self.p), ("Y", &self.y), ("W", &self.w)] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(AtmError::Coefficient {
                    z,
                    reason: format!("{name} is {}x{}, expected {dim}x{dim}", m.nrows(), m.ncols()),
                });
            }
            if !crate::linalg::is_finite(m) {
                return Err(AtmError::Coefficient { z, reason: format!("{name} is not finite") });
            }
        }
        Ok(())
    }

    fn dagger(&self) -> Coefficients {
        Coefficients { b: self.b.adjoint(), p: self.p.adjoint(), y: self.y.adjoint(), w: self.w.adjoint() }
    }
}

pub type CoefficientFn = dyn Fn(f64, &SpectralPoint) -> Coefficients + Send + Sync;

/// A medium: coefficient callbacks that are pure functions of `(z, sp)`.
#[derive(Clone)]
pub struct CoefficientSet {
    dim: usize,
    is_constant: bool,
    hermitean: bool,
    eval: Arc<CoefficientFn>,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dim", &self.dim)
            .field("is_constant", &self.is_constant)
            .field("hermitean", &self.hermitean)
            .finish_non_exhaustive()
    }
}

/// Sampling plan for the hermitean-class validation.
#[derive(Debug, Clone, Copy)]
pub struct HermiticityCheck {
    pub samples: usize,
    pub rel_tol: f64,
}

impl Default for HermiticityCheck {
    fn default() -> Self {
        HermiticityCheck { samples: 16, rel_tol: 1e-10 }
    }
}

const PROBE_OMEGAS: [f64; 3] = [-1.7, 0.3, 2.9];
const PROBE_KAPPAS: [[f64; 2]; 2] = [[0.0, 0.0], [0.4, -0.3]];

impl CoefficientSet {
    pub fn new<F>(dim: usize, is_constant: bool, f: F) -> Result<Self>
    where
        F: Fn(f64, &SpectralPoint) -> Coefficients + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(AtmError::invalid("dim", "must be at least 1"));
        }
        Ok(CoefficientSet { dim, is_constant, hermitean: false, eval: Arc::new(f) })
    }

    /// Constant `B`, `P`, `Y` with a spectral-point dependent `W`.
    pub fn constant<W>(b: CMat, p: CMat, y: CMat, w: W) -> Result<Self>
    where
        W: Fn(&SpectralPoint) -> CMat + Send + Sync + 'static,
    {
        let dim = b.nrows();
        let set = Self::new(dim, true, move |_, sp| Coefficients {
            b: b.clone(),
            p: p.clone(),
            y: y.clone(),
            w: w(sp),
        })?;
        set.evaluate(0.0, &SpectralPoint::real(0.0))?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_constant(&self) -> bool {
        self.is_constant
    }

    pub fn is_hermitean(&self) -> bool {
        self.hermitean
    }

    pub fn evaluate(&self, z: f64, sp: &SpectralPoint) -> Result<Coefficients> {
        let c = (self.eval)(z, sp);
        c.check(self.dim, z)?;
        Ok(c)
    }

    /// `max(‖B−B†‖/‖B‖, ‖P+Y†‖/‖P‖, ‖W−W†‖/‖W‖)` with norms floored at 1.
    pub fn hermiticity_defect(&self, z: f64, sp: &SpectralPoint) -> Result<f64> {
        let c = self.evaluate(z, sp)?;
        let rel = |d: CMat, m: &CMat| frobenius(&d) / frobenius(m).max(1.0);
        Ok(rel(&c.b - c.b.adjoint(), &c.b)
            .max(rel(&c.p + c.y.adjoint(), &c.p))
            .max(rel(&c.w - c.w.adjoint(), &c.w)))
    }

    /// Validate `B = B†`, `P = −Y†`, `W = W†` on `check.samples` points of
    /// `z_range` at a few real `Ω` and mark the set as hermitean-class.
    pub fn declare_hermitean_with(mut self, z_range: (f64, f64), check: HermiticityCheck) -> Result<Self> {
        let n = check.samples.max(1);
        for k in 0..n {
            let t = if n == 1 { 0.5 } else { k as f64 / (n - 1) as f64 };
            let z = z_range.0 + t * (z_range.1 - z_range.0);
            for &om in &PROBE_OMEGAS {
                for &kappa in &PROBE_KAPPAS {
                    let sp = SpectralPoint::real(om).with_kappa(kappa);
                    let defect = self.hermiticity_defect(z, &sp)?;
                    if defect > check.rel_tol {
                        return Err(AtmError::NotHermitean(format!(
                            "relative defect {defect:e} at z = {z}, Ω = {om}"
                        )));
                    }
                }
            }
        }
        self.hermitean = true;
        Ok(self)
    }

    pub fn declare_hermitean(self, z_range: (f64, f64)) -> Result<Self> {
        self.declare_hermitean_with(z_range, HermiticityCheck::default())
    }

    /// Constant set whose matrices are the averages of `self` over `samples`
    /// evenly spaced points of `window`.
    pub fn flattened(&self, window: (f64, f64), samples: usize) -> Result<CoefficientSet> {
        if self.is_constant {
            return Ok(self.clone());
        }
        let samples = samples.max(1);
        let src = self.clone();
        let dim = self.dim;
        let mut flat = CoefficientSet::new(dim, true, move |_, sp| {
            let mut acc = Coefficients {
                b: CMat::zeros(dim, dim),
                p: CMat::zeros(dim, dim),
                y: CMat::zeros(dim, dim),
                w: CMat::zeros(dim, dim),
            };
            for k in 0..samples {
                let z = window.0 + (k as f64 + 0.5) / samples as f64 * (window.1 - window.0);
                let c = (src.eval)(z, sp);
                acc.b += c.b;
                acc.p += c.p;
                acc.y += c.y;
                acc.w += c.w;
            }
            let s = C64::from(1.0 / samples as f64);
            Coefficients { b: acc.b * s, p: acc.p * s, y: acc.y * s, w: acc.w * s }
        })?;
        flat.hermitean = self.hermitean;
        Ok(flat)
    }

    fn derivative(&self, z: f64, sp: &SpectralPoint) -> Result<Coefficients> {
        let n = self.dim;
        if self.is_constant {
            let zero = CMat::zeros(n, n);
            return Ok(Coefficients { b: zero.clone(), p: zero.clone(), y: zero.clone(), w: zero });
        }
        let h = first_difference_step(z);
        let hi = self.evaluate(z + h, sp)?;
        let lo = self.evaluate(z - h, sp)?;
        let s = C64::from(0.5 / h);
        Ok(Coefficients {
            b: (hi.b - lo.b) * s,
            p: (hi.p - lo.p) * s,
            y: (hi.y - lo.y) * s,
            w: (hi.w - lo.w) * s,
        })
    }
}

/// Continuous pair `Ψ = (F, A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub f: CVec,
    pub a: CVec,
}

impl StateVector {
    pub fn new(f: CVec, a: CVec) -> Result<Self> {
        if f.len() != a.len() {
            return Err(AtmError::DimensionMismatch { expected: f.len(), found: a.len() });
        }
        Ok(StateVector { f, a })
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn to_psi(&self) -> CVec {
        let n = self.dim();
        CVec::from_fn(2 * n, |i, _| if i < n { self.f[i] } else { self.a[i - n] })
    }

    pub fn from_psi(psi: &CVec) -> Result<Self> {
        if !psi.len().is_multiple_of(2) {
            return Err(AtmError::Contract("state vector must have even length".into()));
        }
        let n = psi.len() / 2;
        Ok(StateVector { f: psi.rows(0, n).into_owned(), a: psi.rows(n, n).into_owned() })
    }
}

/// Primary field and its derivative at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub z: f64,
    pub f: CVec,
    pub df: CVec,
}

/// A twice-differentiable N-vector function. Derivatives that are not
/// supplied fall back to central differences.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn value(&self, z: f64) -> CVec;
    fn derivative(&self, _z: f64) -> Option<CVec> {
        None
    }
    fn second_derivative(&self, _z: f64) -> Option<CVec> {
        None
    }
}

/// Closure-backed [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
    df: Option<Box<dyn Fn(f64) -> CVec + Sync>>,
    d2f: Option<Box<dyn Fn(f64) -> CVec + Sync>>,
}

impl<F: Fn(f64) -> CVec + Sync> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f, df: None, d2f: None }
    }

    pub fn with_derivatives(
        mut self,
        df: impl Fn(f64) -> CVec + Sync + 'static,
        d2f: impl Fn(f64) -> CVec + Sync + 'static,
    ) -> Self {
        self.df = Some(Box::new(df));
        self.d2f = Some(Box::new(d2f));
        self
    }
}

impl<F: Fn(f64) -> CVec + Sync> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, z: f64) -> CVec {
        (self.f)(z)
    }
    fn derivative(&self, z: f64) -> Option<CVec> {
        self.df.as_ref().map(|d| d(z))
    }
    fn second_derivative(&self, z: f64) -> Option<CVec> {
        self.d2f.as_ref().map(|d| d(z))
    }
}

fn first_difference_step(z: f64) -> f64 {
    f64::EPSILON.cbrt() * z.abs().max(1.0)
}

fn second_difference_step(z: f64) -> f64 {
    f64::EPSILON.powf(0.25) * z.abs().max(1.0)
}

/// Value, first and second derivative of `field` at `z`.
pub fn field_jet(field: &dyn VectorField, z: f64) -> (CVec, CVec, CVec) {
    let v = field.value(z);
    let d1 = field.derivative(z).unwrap_or_else(|| {
        let h = first_difference_step(z);
        (field.value(z + h) - field.value(z - h)) * C64::from(0.5 / h)
    });
    let d2 = field.second_derivative(z).unwrap_or_else(|| {
        let h = second_difference_step(z);
        (field.value(z + h) - &v * C64::from(2.0) + field.value(z - h)) * C64::from(1.0 / (h * h))
    });
    (v, d1, d2)
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(AtmError::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// `A = B·F' + P·F`.
pub fn secondary_field(c: &CoefficientSet, s: &FieldSample, sp: &SpectralPoint) -> Result<CVec> {
    check_dim(c.dim(), s.f.len())?;
    check_dim(c.dim(), s.df.len())?;
    let k = c.evaluate(s.z, sp)?;
    Ok(&k.b * &s.df + &k.p * &s.f)
}

fn invert_b(b: &CMat, z: f64) -> Result<CMat> {
    crate::linalg::inverse(b, "B").map_err(|_| AtmError::SingularB { z })
}

/// Companion matrix `D(z)` of the first-order system `Ψ' = D·Ψ`.
pub fn companion_matrix(c: &CoefficientSet, z: f64, sp: &SpectralPoint) -> Result<CMat> {
    let k = c.evaluate(z, sp)?;
    companion_from(&k, z)
}

pub(crate) fn companion_from(k: &Coefficients, z: f64) -> Result<CMat> {
    let b_inv = invert_b(&k.b, z)?;
    let b_inv_p = &b_inv * &k.p;
    let y_b_inv = &k.y * &b_inv;
    Ok(crate::linalg::from_blocks(&(-&b_inv_p), &b_inv, &(&k.y * &b_inv_p - &k.w), &(-y_b_inv)))
}

/// `‖D^c·J + J·D‖_F` where `D^c` is the transconjugate of the companion matrix.
pub fn companion_symplectic_defect(c: &CoefficientSet, z: f64, sp: &SpectralPoint) -> Result<f64> {
    let d = companion_matrix(c, z, sp)?;
    let d_c = crate::transfer::transconjugate_with(sp, |p| companion_matrix(c, z, p))?;
    let j = j_matrix(c.dim());
    Ok(frobenius(&(d_c * &j + &j * &d)))
}

/// Flux density `j = i(F†·A − A†·F) = −i Ψ†·J·Ψ`.
pub fn flux(s: &StateVector) -> C64 {
    I * (s.f.dotc(&s.a) - s.a.dotc(&s.f))
}

/// `L(z)·F(z)`, expanding `(B F' + P F)'` with coefficient derivatives.
pub fn apply_operator(c: &CoefficientSet, f: &dyn VectorField, z: f64, sp: &SpectralPoint) -> Result<CVec> {
    check_dim(c.dim(), f.dim())?;
    let k = c.evaluate(z, sp)?;
    let dk = c.derivative(z, sp)?;
    let (v, d1, d2) = field_jet(f, z);
    Ok(&k.b * &d2 + &dk.b * &d1 + &k.p * &d1 + &dk.p * &v + &k.y * &d1 + &k.w * &v)
}

/// Adjoint rule `L₂·F₂ = (B†F₂' − Y†F₂)' − P†F₂' + W†F₂`.
pub fn apply_adjoint_operator(c: &CoefficientSet, f2: &dyn VectorField, z: f64, sp: &SpectralPoint) -> Result<CVec> {
    check_dim(c.dim(), f2.dim())?;
    let k = c.evaluate(z, sp)?.dagger();
    let dk = c.derivative(z, sp)?.dagger();
    let (v, d1, d2) = field_jet(f2, z);
    Ok(&k.b * &d2 + &dk.b * &d1 - &dk.y * &v - &k.y * &d1 - &k.p * &d1 + &k.w * &v)
}

/// Residual `R(z) = F₂†·A − A₂†·F` for hermitean-class coefficients.
pub fn residual(c: &CoefficientSet, z1: f64, s1: &StateVector, z2: f64, s2: &StateVector) -> Result<C64> {
    if z1 != z2 {
        return Err(AtmError::Contract(format!("residual samples at different z ({z1} vs {z2})")));
    }
    if !c.is_hermitean() {
        return Err(AtmError::NotHermitean("residual requires a hermitean-class coefficient set".into()));
    }
    check_dim(c.dim(), s1.dim())?;
    check_dim(c.dim(), s2.dim())?;
    Ok(s2.f.dotc(&s1.a) - s2.a.dotc(&s1.f))
}

/// General bilinear concomitant, valid without hermiticity:
/// `R = F₂†(B F' + P F) − F₂'† B F + F₂† Y F`.
fn concomitant(c: &CoefficientSet, z: f64, f: &dyn VectorField, f2: &dyn VectorField, sp: &SpectralPoint) -> Result<C64> {
    let k = c.evaluate(z, sp)?;
    let (v, d1, _) = field_jet(f, z);
    let (v2, d21, _) = field_jet(f2, z);
    let a = &k.b * &d1 + &k.p * &v;
    Ok(v2.dotc(&a) - d21.dotc(&(&k.b * &v)) + v2.dotc(&(&k.y * &v)))
}

/// `⟨F₂|L F⟩ − ⟨F|L₂ F₂⟩† − [R(b) − R(a)]` by adaptive quadrature.
pub fn green_identity_defect(
    c: &CoefficientSet,
    f: &dyn VectorField,
    f2: &dyn VectorField,
    a: f64,
    b: f64,
    sp: &SpectralPoint,
    quadrature_tol: f64,
) -> Result<C64> {
    check_dim(c.dim(), f.dim())?;
    check_dim(c.dim(), f2.dim())?;
    let mut failure = None;
    let mut lhs_integrand = |z: f64| match apply_operator(c, f, z, sp) {
        Ok(lf) => f2.value(z).dotc(&lf),
        Err(e) => {
            failure.get_or_insert(e);
            C64::new(0.0, 0.0)
        }
    };
    let lhs = quadrature::integrate(&mut lhs_integrand, a, b, quadrature_tol, 0.0, 4000)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let mut rhs_integrand = |z: f64| match apply_adjoint_operator(c, f2, z, sp) {
        Ok(lf2) => f.value(z).dotc(&lf2),
        Err(e) => {
            failure.get_or_insert(e);
            C64::new(0.0, 0.0)
        }
    };
    let rhs = quadrature::integrate(&mut rhs_integrand, a, b, quadrature_tol, 0.0, 4000)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let boundary = concomitant(c, b, f, f2, sp)? - concomitant(c, a, f, f2, sp)?;
    Ok(lhs.value - rhs.value.conj() - boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn free(omega_scale: f64) -> CoefficientSet {
        CoefficientSet::constant(
            CMat::identity(1, 1) * C64::from(omega_scale),
            CMat::zeros(1, 1),
            CMat::zeros(1, 1),
            |sp| CMat::from_element(1, 1, sp.regularized()),
        )
        .unwrap()
    }

    fn v1(x: C64) -> CVec {
        CVec::from_element(1, x)
    }

    #[test]
    fn negative_eta_rejected() {
        assert_eq!(SpectralPoint::causal(1.0, -1e-3), Err(AtmError::NegativeEta(-1e-3)));
    }

    #[test]
    fn reflected_point_conjugates_regularized_omega() {
        let sp = SpectralPoint::new(c(1.0, 0.2), 0.1, [0.0; 2]).unwrap();
        assert!((sp.reflected().regularized() - c(1.0, -0.3)).norm() < 1e-15);
        assert!(SpectralPoint::real(2.0).is_real_axis());
        assert!(!sp.is_real_axis());
    }

    #[test]
    fn secondary_field_plane_wave() {
        let k = 1.3;
        let s = FieldSample { z: 0.0, f: v1(c(1.0, 0.0)), df: v1(c(0.0, k)) };
        let a = secondary_field(&free(1.0), &s, &SpectralPoint::real(k * k)).unwrap();
        assert!((a[0] - c(0.0, k)).norm() < 1e-15);
        let zero = FieldSample { z: 0.0, f: v1(c(0.0, 0.0)), df: v1(c(0.0, 0.0)) };
        assert_eq!(secondary_field(&free(1.0), &zero, &SpectralPoint::real(1.0)).unwrap()[0], c(0.0, 0.0));
    }

    #[test]
    fn secondary_field_two_component() {
        let p = CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        let set = CoefficientSet::constant(CMat::identity(2, 2), p, CMat::zeros(2, 2), |_| CMat::zeros(2, 2)).unwrap();
        let sp = SpectralPoint::real(0.0);
        let zero = CVec::zeros(2);
        let a1 = secondary_field(&set, &FieldSample { z: 0.0, f: CVec::from_vec(vec![c(1., 0.), c(0., 0.)]), df: zero.clone() }, &sp).unwrap();
        assert_eq!(a1, CVec::zeros(2));
        let a2 = secondary_field(&set, &FieldSample { z: 0.0, f: CVec::from_vec(vec![c(0., 0.), c(1., 0.)]), df: zero }, &sp).unwrap();
        assert_eq!(a2, CVec::from_vec(vec![c(1., 0.), c(0., 0.)]));
    }

    #[test]
    fn secondary_field_dimension_mismatch() {
        let s = FieldSample { z: 0.0, f: CVec::zeros(2), df: CVec::zeros(2) };
        assert!(matches!(
            secondary_field(&free(1.0), &s, &SpectralPoint::real(1.0)),
            Err(AtmError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn companion_free_particle() {
        let d = companion_matrix(&free(1.0), 0.3, &SpectralPoint::real(2.5)).unwrap();
        let expected = CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(-2.5, 0.), c(0., 0.)]);
        assert_eq!(d, expected);
        let d0 = companion_matrix(&free(1.0), 0.0, &SpectralPoint::real(0.0)).unwrap();
        assert_eq!(d0, CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]));
    }

    #[test]
    fn companion_generates_second_order_equation() {
        // Ψ = (F, F') with F = e^{ikz}; D Ψ must equal (F', F'') = (F', -Ω F)
        let om: f64 = 1.7;
        let k = om.sqrt();
        let d = companion_matrix(&free(1.0), 0.0, &SpectralPoint::real(om)).unwrap();
        let z: f64 = 0.4;
        let f = C64::new(0.0, k * z).exp();
        let psi = CVec::from_vec(vec![f, I * k * f]);
        let dpsi = &d * &psi;
        assert!((dpsi[0] - I * k * f).norm() < 1e-14);
        assert!((dpsi[1] + f * om).norm() < 1e-14);
    }

    #[test]
    fn singular_b_is_reported_with_location() {
        let set = CoefficientSet::constant(CMat::zeros(1, 1), CMat::zeros(1, 1), CMat::zeros(1, 1), |_| CMat::identity(1, 1)).unwrap();
        assert_eq!(companion_matrix(&set, 1.5, &SpectralPoint::real(1.0)), Err(AtmError::SingularB { z: 1.5 }));
    }

    #[test]
    fn flux_of_plane_wave() {
        let k = 0.8;
        let z: f64 = 1.1;
        let f = C64::new(0.0, k * z).exp();
        let s = StateVector::new(v1(f), v1(I * k * f)).unwrap();
        assert!((flux(&s) - c(-2.0 * k, 0.0)).norm() < 1e-14);
        assert_eq!(flux(&StateVector::new(v1(c(0., 0.)), v1(c(0., 0.))).unwrap()), c(0.0, 0.0));
    }

    #[test]
    fn operator_annihilates_exact_solution() {
        let k: f64 = 1.2;
        let wave = move |z: f64| C64::new(0.0, k * z).exp();
        let field = FnField::new(1, move |z| v1(wave(z)))
            .with_derivatives(move |z| v1(I * k * wave(z)), move |z| v1(-k * k * wave(z)));
        let lf = apply_operator(&free(1.0), &field, 0.7, &SpectralPoint::real(k * k)).unwrap();
        assert!(lf.norm() < 1e-12, "{}", lf.norm());

        let stencil = FnField::new(1, move |z| v1(wave(z)));
        let lf = apply_operator(&free(1.0), &stencil, 0.7, &SpectralPoint::real(k * k)).unwrap();
        assert!(lf.norm() < 1e-6, "{}", lf.norm());
    }

    #[test]
    fn operator_on_constant_field() {
        let field = FnField::new(1, |_| v1(c(2.0, -1.0)));
        let lf = apply_operator(&free(1.0), &field, 0.0, &SpectralPoint::real(3.0)).unwrap();
        assert!((lf[0] - c(6.0, -3.0)).norm() < 1e-9);
    }

    #[test]
    fn adjoint_zero_field() {
        let field = FnField::new(1, |_| CVec::zeros(1));
        let lf = apply_adjoint_operator(&free(1.0), &field, 0.0, &SpectralPoint::real(3.0)).unwrap();
        assert_eq!(lf, CVec::zeros(1));
    }

    #[test]
    fn residual_cases() {
        let set = free(1.0).declare_hermitean((0.0, 1.0)).unwrap();
        let s1 = StateVector::new(v1(c(1., 0.)), v1(c(0., 0.))).unwrap();
        let s2 = StateVector::new(v1(c(0., 0.)), v1(c(1., 0.))).unwrap();
        assert_eq!(residual(&set, 0.0, &s1, 0.0, &s2).unwrap(), c(-1.0, 0.0));
        let real = StateVector::new(v1(c(0.3, 0.)), v1(c(-1.2, 0.))).unwrap();
        assert_eq!(residual(&set, 0.0, &real, 0.0, &real).unwrap(), c(0.0, 0.0));
        assert!(matches!(residual(&set, 0.0, &s1, 0.5, &s2), Err(AtmError::Contract(_))));
        assert!(matches!(residual(&free(1.0), 0.0, &s1, 0.0, &s2), Err(AtmError::NotHermitean(_))));
    }

    #[test]
    fn hermitean_declaration_rejects_bad_sets() {
        let bad = CoefficientSet::constant(
            CMat::identity(1, 1),
            CMat::from_element(1, 1, c(1.0, 0.0)),
            CMat::from_element(1, 1, c(1.0, 0.0)),
            |sp| CMat::from_element(1, 1, sp.regularized()),
        )
        .unwrap();
        assert!(matches!(bad.declare_hermitean((0.0, 1.0)), Err(AtmError::NotHermitean(_))));
    }

    #[test]
    fn state_vector_round_trip() {
        let s = StateVector::new(CVec::from_vec(vec![c(1., 2.), c(3., 4.)]), CVec::from_vec(vec![c(5., 6.), c(7., 8.)])).unwrap();
        assert_eq!(StateVector::from_psi(&s.to_psi()).unwrap(), s);
        assert!(StateVector::new(CVec::zeros(2), CVec::zeros(3)).is_err());
    }

    #[test]
    fn flattening_averages_graded_medium() {
        let graded = CoefficientSet::new(1, false, |z, sp| Coefficients {
            b: CMat::identity(1, 1),
            p: CMat::zeros(1, 1),
            y: CMat::zeros(1, 1),
            w: CMat::from_element(1, 1, sp.regularized() - C64::from(z)),
        })
        .unwrap();
        let flat = graded.flattened((2.0, 4.0), 64).unwrap();
        assert!(flat.is_constant());
        let w = flat.evaluate(100.0, &SpectralPoint::real(1.0)).unwrap().w[(0, 0)];
        assert!((w - c(-2.0, 0.0)).norm() < 1e-12);
    }
}
