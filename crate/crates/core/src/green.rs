//! Green function of a regular medium built from the associated transfer
//! matrix: bulk modes, regular limits `T±`/`Θ±`, coefficient assembly,
//! evaluation of `G`, `A` and `Z`, and the jump and composition identities.

use nalgebra::Schur;

use crate::error::{AtmError, Result};
use crate::linalg::{self, frobenius, CMat, C64};
use crate::sl_system::{companion_matrix, CoefficientSet, SpectralPoint};
use crate::stack::LayerStack;
use crate::transfer::{Block, TransferMatrix, TransferOptions, Transconjugated};

/// Tuning of the causal regularization and of the exterior treatment.
#[derive(Debug, Clone, Copy)]
pub struct GreenOptions {
    /// Eta used when a real-axis point has to be regularized.
    pub default_eta: f64,
    /// Relative size below which `Re λ` counts as a classification tie.
    pub tie_tol: f64,
    /// Number of eta increases attempted after a tie.
    pub max_retries: usize,
    pub transfer: TransferOptions,
    /// Length over which graded exterior media are averaged.
    pub exterior_window: f64,
    pub exterior_samples: usize,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions {
            default_eta: 1e-6,
            tie_tol: 1e-14,
            max_retries: 3,
            transfer: TransferOptions::default(),
            exterior_window: 1.0,
            exterior_samples: 64,
        }
    }
}

/// Eigen-decomposition of a constant companion matrix, split into the modes
/// decaying towards `+∞` (`Re λ < 0`) and towards `−∞` (`Re λ > 0`).
#[derive(Debug, Clone)]
pub struct BulkModes {
    pub eigenvalues: Vec<C64>,
    /// Columns are the 2N-component mode vectors `(F, A)`.
    pub vectors: CMat,
    pub right_decaying: Vec<usize>,
    pub left_decaying: Vec<usize>,
    /// Spectral point actually used, with eta possibly raised to break a tie.
    pub sp: SpectralPoint,
    dim: usize,
}

impl BulkModes {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn columns(&self, idx: &[usize]) -> CMat {
        CMat::from_columns(&idx.iter().map(|&j| self.vectors.column(j).into_owned()).collect::<Vec<_>>())
    }

    /// 2N×N basis of the modes regular at `+∞`.
    pub fn right_basis(&self) -> CMat {
        self.columns(&self.right_decaying)
    }

    /// 2N×N basis of the modes regular at `−∞`.
    pub fn left_basis(&self) -> CMat {
        self.columns(&self.left_decaying)
    }

    pub fn f_block(&self, idx: &[usize]) -> CMat {
        self.columns(idx).rows(0, self.dim).into_owned()
    }

    pub fn a_block(&self, idx: &[usize]) -> CMat {
        self.columns(idx).rows(self.dim, self.dim).into_owned()
    }
}

enum Classified {
    Modes(BulkModes),
    Tie,
}

fn eigenvalues(d: &CMat) -> Vec<C64> {
    let schur = Schur::try_new(d.clone(), f64::EPSILON, 100_000).unwrap_or_else(|| Schur::new(d.clone()));
    let (_, t) = schur.unpack();
    t.diagonal().iter().copied().collect()
}

/// Eigenpairs of `d` from its eigenvalues: clusters of nearly equal values
/// share an SVD null space, and a nearly singular eigenvector matrix is
/// reported as defective.
fn decompose(d: &CMat, lambdas: &[C64], scale: f64) -> Result<(Vec<C64>, CMat)> {
    let n2 = d.nrows();
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[a].re.total_cmp(&lambdas[b].re).then(lambdas[a].im.total_cmp(&lambdas[b].im)));
    let cluster_tol = 1e-9 * scale;
    let null_tol = 1e-7 * scale;
    let mut eigs = Vec::with_capacity(n2);
    let mut cols = Vec::with_capacity(n2);
    let mut used = vec![false; lambdas.len()];
    for &i in &order {
        if used[i] {
            continue;
        }
        let cluster: Vec<usize> =
            order.iter().copied().filter(|&j| !used[j] && (lambdas[j] - lambdas[i]).norm() < cluster_tol).collect();
        for &j in &cluster {
            used[j] = true;
        }
        let mean: C64 = cluster.iter().map(|&j| lambdas[j]).sum::<C64>() / C64::from(cluster.len() as f64);
        let shifted = d - CMat::identity(n2, n2) * mean;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let mut by_size: Vec<usize> = (0..svd.singular_values.len()).collect();
        by_size.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let kept = &by_size[..cluster.len()];
        if kept.iter().any(|&k| svd.singular_values[k] > null_tol) {
            return Err(AtmError::Defective { cond: f64::INFINITY });
        }
        for &k in kept {
            eigs.push(mean);
            cols.push(v_t.row(k).adjoint().into_owned());
        }
    }
    let vectors = CMat::from_columns(&cols);
    let cond = linalg::condition_number(&vectors);
    if !(cond <= 1e10) {
        return Err(AtmError::Defective { cond });
    }
    Ok((eigs, vectors))
}

/// Eigenvalues `λ` and mode vectors `(F, A)` (columns) of the companion
/// matrix, without any causal classification.
pub fn eigen_modes(c: &CoefficientSet, z: f64, sp: &SpectralPoint) -> Result<(Vec<C64>, CMat)> {
    let d = companion_matrix(c, z, sp)?;
    let scale = frobenius(&d).max(1.0);
    decompose(&d, &eigenvalues(&d), scale)
}

fn classify(c: &CoefficientSet, z: f64, sp: &SpectralPoint, tie_tol: f64) -> Result<Classified> {
    let n = c.dim();
    let d = companion_matrix(c, z, sp)?;
    let scale = frobenius(&d).max(1.0);
    let lambdas = eigenvalues(&d);
    if lambdas.iter().any(|l| l.re.abs() < tie_tol * scale) {
        return Ok(Classified::Tie);
    }

    let (eigs, vectors) = decompose(&d, &lambdas, scale)?;
    let right: Vec<usize> = (0..eigs.len()).filter(|&j| eigs[j].re < 0.0).collect();
    let left: Vec<usize> = (0..eigs.len()).filter(|&j| eigs[j].re > 0.0).collect();
    if right.len() != n || left.len() != n {
        return Err(AtmError::NotRegular { right: right.len(), left: left.len() });
    }
    Ok(Classified::Modes(BulkModes {
        eigenvalues: eigs,
        vectors,
        right_decaying: right,
        left_decaying: left,
        sp: *sp,
        dim: n,
    }))
}

/// Modes of the constant medium `c` at `sp`. A point where some `Re λ`
/// vanishes is regularized: eta becomes `default_eta` if it was zero and is
/// multiplied by ten otherwise, up to `max_retries` times.
pub fn bulk_modes(c: &CoefficientSet, z: f64, sp: &SpectralPoint, opts: &GreenOptions) -> Result<BulkModes> {
    if !c.is_constant() {
        return Err(AtmError::Contract("bulk modes need a constant medium; flatten graded media first".into()));
    }
    let mut point = *sp;
    for attempt in 0..=opts.max_retries {
        match classify(c, z, &point, opts.tie_tol)? {
            Classified::Modes(m) => return Ok(m),
            Classified::Tie if attempt < opts.max_retries => {
                let eta = if point.eta() == 0.0 { opts.default_eta } else { 10.0 * point.eta() };
                point = point.with_eta(eta)?;
            }
            Classified::Tie => {}
        }
    }
    Err(AtmError::NotRegular { right: 0, left: 0 })
}

/// Modes at exactly `sp`, with a tie reported as an irregular point.
fn modes_without_retry(c: &CoefficientSet, z: f64, sp: &SpectralPoint, opts: &GreenOptions) -> Result<BulkModes> {
    match classify(c, z, sp, opts.tie_tol)? {
        Classified::Modes(m) => Ok(m),
        Classified::Tie => Err(AtmError::NotRegular { right: 0, left: 0 }),
    }
}

/// `−A·F⁻¹` of a 2N×N basis.
pub fn limit_from_basis(basis: &CMat, n: usize) -> Result<CMat> {
    let f = basis.rows(0, n).into_owned();
    let a = basis.rows(n, n).into_owned();
    let f_inv = linalg::inverse(&f, "mode F-block").map_err(|_| AtmError::IrregularMedium)?;
    Ok(-(a * f_inv))
}

/// Regular limits at the anchor `z`: `T₊` from the subspace regular at `+∞`,
/// `T₋` from the one regular at `−∞`, and their transconjugate partners.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularLimits {
    pub t_minus: CMat,
    pub t_plus: CMat,
    pub theta_minus: CMat,
    pub theta_plus: CMat,
    pub z: f64,
    pub sp: SpectralPoint,
}

/// Regular limits of a single constant medium from its modes at `sp` and at
/// the reflected point `sp.reflected()`.
pub fn regular_limits(modes: &BulkModes, reflected: &BulkModes, z: f64) -> Result<RegularLimits> {
    if reflected.sp != modes.sp.reflected() {
        return Err(AtmError::Contract("reflected modes must be computed at the reflected spectral point".into()));
    }
    let n = modes.dim();
    Ok(RegularLimits {
        t_minus: limit_from_basis(&modes.left_basis(), n)?,
        t_plus: limit_from_basis(&modes.right_basis(), n)?,
        theta_minus: limit_from_basis(&reflected.left_basis(), n)?.adjoint(),
        theta_plus: limit_from_basis(&reflected.right_basis(), n)?.adjoint(),
        z,
        sp: modes.sp,
    })
}

/// Regular limits of a homogeneous constant medium.
pub fn medium_limits(c: &CoefficientSet, z: f64, sp: &SpectralPoint, opts: &GreenOptions) -> Result<RegularLimits> {
    let modes = bulk_modes(c, z, sp, opts)?;
    let reflected = modes_without_retry(c, z, &modes.sp.reflected(), opts)?;
    regular_limits(&modes, &reflected, z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreenCoefficients {
    pub c_aa: CMat,
    pub c_da_lt: CMat,
    pub c_da_gt: CMat,
    pub c_ad_lt: CMat,
    pub c_ad_gt: CMat,
    pub c_dd_lt: CMat,
    pub c_dd_gt: CMat,
    pub limits: RegularLimits,
}

/// Residuals of the relations the assembled coefficients must satisfy.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct CoefficientReport {
    /// `‖C_DA^< − C_DA^> + I‖`
    pub da_jump: f64,
    /// `‖C_AD^> − C_AD^< + I‖`
    pub ad_jump: f64,
    /// `‖C_DD^< − C_DA^<·C_AA⁻¹·C_AD^<‖`
    pub dd_lt: f64,
    /// `‖C_DD^> − C_DA^>·C_AA⁻¹·C_AD^>‖`
    pub dd_gt: f64,
}

impl CoefficientReport {
    pub fn max_residual(&self) -> f64 {
        self.da_jump.max(self.ad_jump).max(self.dd_lt).max(self.dd_gt)
    }
}

impl GreenCoefficients {
    pub fn dim(&self) -> usize {
        self.c_aa.nrows()
    }

    pub fn report(&self) -> CoefficientReport {
        let n = self.dim();
        let id = CMat::identity(n, n);
        let c_aa_inv = linalg::inverse(&self.c_aa, "C_AA").ok();
        let factor = |da: &CMat, ad: &CMat, dd: &CMat| match &c_aa_inv {
            Some(inv) => frobenius(&(dd - da * inv * ad)),
            None => f64::INFINITY,
        };
        CoefficientReport {
            da_jump: frobenius(&(&self.c_da_lt - &self.c_da_gt + &id)),
            ad_jump: frobenius(&(&self.c_ad_gt - &self.c_ad_lt + &id)),
            dd_lt: factor(&self.c_da_lt, &self.c_ad_lt, &self.c_dd_lt),
            dd_gt: factor(&self.c_da_gt, &self.c_ad_gt, &self.c_dd_gt),
        }
    }

    fn branch(&self, side: Side) -> CMat {
        match side {
            Side::Less => linalg::from_blocks(&self.c_aa, &self.c_ad_lt, &self.c_da_lt, &self.c_dd_lt),
            Side::Greater => linalg::from_blocks(&self.c_aa, &self.c_ad_gt, &self.c_da_gt, &self.c_dd_gt),
        }
    }
}

/// Green coefficients from the regular limits. The `z ≤ z′` block
/// `C_DD^<` is taken as `T₋·C_AA·Θ₊`, the product form that keeps it equal
/// to `C_DA^<·C_AA⁻¹·C_AD^<`.
pub fn assemble_green_coefficients(limits: &RegularLimits) -> Result<GreenCoefficients> {
    let diff = &limits.t_minus - &limits.t_plus;
    let c_aa = linalg::inverse(&diff, "T₋ − T₊").map_err(|_| AtmError::DegenerateLimits)?;
    Ok(GreenCoefficients {
        c_da_lt: -(&limits.t_minus * &c_aa),
        c_da_gt: -(&limits.t_plus * &c_aa),
        c_ad_lt: -(&c_aa * &limits.theta_plus),
        c_ad_gt: -(&c_aa * &limits.theta_minus),
        c_dd_lt: &limits.t_minus * &c_aa * &limits.theta_plus,
        c_dd_gt: &limits.t_plus * &c_aa * &limits.theta_minus,
        c_aa,
        limits: limits.clone(),
    })
}

/// Which branch of the piecewise Green function is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `z ≤ z′`
    Less,
    /// `z ≥ z′`
    Greater,
}

impl Side {
    /// Branch for the ordered pair; `z = z′` picks [`Side::Less`].
    pub fn for_points(z: f64, zp: f64) -> Side {
        if z <= zp {
            Side::Less
        } else {
            Side::Greater
        }
    }

    fn admits(self, z: f64, zp: f64) -> bool {
        match self {
            Side::Less => z <= zp,
            Side::Greater => z >= zp,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreenSample {
    /// `G(z, z′)`
    pub g: CMat,
    /// Secondary Green field `A(z, z′) = B(z)·∂G/∂z + P(z)·G`.
    pub a: CMat,
    pub z: f64,
    pub zp: f64,
}

fn check_pair(gc: &GreenCoefficients, t_z: &TransferMatrix, t_zp_c: &Transconjugated, side: Side) -> Result<()> {
    let z0 = t_z.z_from();
    if (t_zp_c.z_from() - z0).abs() > 1e-12 * z0.abs().max(1.0) {
        return Err(AtmError::Contract(format!(
            "transfer matrices start at different anchors ({z0} vs {})",
            t_zp_c.z_from()
        )));
    }
    if t_zp_c.reflected().sp() != &t_z.sp().reflected() {
        return Err(AtmError::Contract("transconjugate factor belongs to a different spectral point".into()));
    }
    if t_z.dim() != gc.dim() || t_zp_c.reflected().dim() != gc.dim() {
        return Err(AtmError::DimensionMismatch { expected: gc.dim(), found: t_z.dim() });
    }
    if !side.admits(t_z.z_to(), t_zp_c.z_to()) {
        return Err(AtmError::Contract(format!(
            "branch {side:?} does not apply to z = {}, z' = {}",
            t_z.z_to(),
            t_zp_c.z_to()
        )));
    }
    Ok(())
}

fn stacked(top: CMat, bottom: CMat) -> CMat {
    let n = top.ncols();
    let mut out = CMat::zeros(top.nrows() + bottom.nrows(), n);
    out.rows_mut(0, top.nrows()).copy_from(&top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(&bottom);
    out
}

/// `G(z, z′)` and `A(z, z′)` from `T(z, z0)` and the transconjugate of
/// `T(z′, z0)`.
pub fn green_eval(gc: &GreenCoefficients, t_z: &TransferMatrix, t_zp_c: &Transconjugated, side: Side) -> Result<GreenSample> {
    check_pair(gc, t_z, t_zp_c, side)?;
    let n = gc.dim();
    let right = stacked(t_zp_c.of_block(Block::A, Block::A), t_zp_c.of_block(Block::A, Block::D));
    let core = gc.branch(side) * right;
    let m = t_z.matrix();
    Ok(GreenSample {
        g: m.rows(0, n) * &core,
        a: m.rows(n, n) * &core,
        z: t_z.z_to(),
        zp: t_zp_c.z_to(),
    })
}

/// `Z(z, z′) = ∂G/∂z′·B^c(z′) + G·P^c(z′)`, from the D-row blocks of the
/// primed-side transconjugate.
pub fn z_field_eval(gc: &GreenCoefficients, t_z: &TransferMatrix, t_zp_c: &Transconjugated, side: Side) -> Result<CMat> {
    check_pair(gc, t_z, t_zp_c, side)?;
    let n = gc.dim();
    let right = stacked(t_zp_c.of_block(Block::D, Block::A), t_zp_c.of_block(Block::D, Block::D));
    Ok(t_z.matrix().rows(0, n) * gc.branch(side) * right)
}

/// Residuals of the jump identities at a set of points.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct JumpReport {
    /// `max ‖A(z, z⁺) − A(z, z⁻) + I‖`: jump of the secondary Green field.
    pub a_jump: f64,
    /// `max ‖Z(z⁺, z) − Z(z⁻, z) + I‖`.
    pub z_jump: f64,
    /// `max ‖G^<(z, z) − G^>(z, z)‖`: continuity of the diagonal.
    pub continuity: f64,
    pub coefficients: CoefficientReport,
    pub threshold: f64,
    pub flagged: bool,
}

impl JumpReport {
    pub fn max_residual(&self) -> f64 {
        self.a_jump.max(self.z_jump).max(self.continuity).max(self.coefficients.max_residual())
    }
}

/// Evaluate every jump identity at the given points, each supplied as
/// `T(z, z0)` with the transconjugate of the same matrix.
pub fn jump_checks(gc: &GreenCoefficients, samples: &[(TransferMatrix, Transconjugated)], threshold: f64) -> Result<JumpReport> {
    let n = gc.dim();
    let id = CMat::identity(n, n);
    let mut report = JumpReport { coefficients: gc.report(), threshold, ..Default::default() };
    for (t, t_c) in samples {
        if t.z_to() != t_c.z_to() {
            return Err(AtmError::Contract("jump samples must pair matrices at the same z".into()));
        }
        let lt = green_eval(gc, t, t_c, Side::Less)?;
        let gt = green_eval(gc, t, t_c, Side::Greater)?;
        let z_lt = z_field_eval(gc, t, t_c, Side::Less)?;
        let z_gt = z_field_eval(gc, t, t_c, Side::Greater)?;
        report.a_jump = report.a_jump.max(frobenius(&(&lt.a - &gt.a + &id)));
        report.z_jump = report.z_jump.max(frobenius(&(&z_gt - &z_lt + &id)));
        report.continuity = report.continuity.max(frobenius(&(&lt.g - &gt.g)));
    }
    report.flagged = !(report.max_residual() < threshold);
    Ok(report)
}

/// Residual of the interface composition rule
/// `G(z, z′) = G(z, z0)·𝒢(z0)⁻¹·G(z0, z′)` for `z ≤ z0 ≤ z′`.
pub fn interface_composition_check(
    g_z_zp: &GreenSample,
    g_z_z0: &GreenSample,
    g_z0_z0: &GreenSample,
    g_z0_zp: &GreenSample,
) -> Result<f64> {
    let (z, zp, z0) = (g_z_zp.z, g_z_zp.zp, g_z0_z0.z);
    let consistent = g_z0_z0.zp == z0
        && g_z_z0.z == z
        && g_z_z0.zp == z0
        && g_z0_zp.z == z0
        && g_z0_zp.zp == zp
        && z <= z0
        && z0 <= zp;
    if !consistent {
        return Err(AtmError::Contract("composition needs samples at (z, z′), (z, z0), (z0, z0), (z0, z′) with z ≤ z0 ≤ z′".into()));
    }
    let inv = linalg::inverse(&g_z0_z0.g, "G(z0, z0)")?;
    Ok(frobenius(&(&g_z_zp.g - &g_z_z0.g * inv * &g_z0_zp.g)))
}

/// Local density of states `−Im tr 𝒢(z) / π` for each diagonal block.
pub fn local_dos(g_diag: &[CMat], sp: &SpectralPoint) -> Result<Vec<f64>> {
    if sp.regularized().im == 0.0 {
        return Err(AtmError::NeedsRegularization);
    }
    Ok(g_diag.iter().map(|g| -g.trace().im / std::f64::consts::PI).collect())
}

/// How the primed-side factor of the Green function is conjugated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Conjugation {
    /// Transconjugate: conjugate transpose of the factor evaluated at the
    /// reflected point, keeping `Ω` itself unconjugated.
    #[default]
    Transconjugate,
    /// Plain conjugate transpose with `Ω` conjugated as well. The whole
    /// construction then lives at `conj(Ω + iη)` and yields the advanced
    /// Green function. Kept only as a negative control.
    ConjugateTranspose,
}

/// Green function of a layered stack with regular exteriors.
#[derive(Debug, Clone)]
pub struct StackGreen {
    stack: LayerStack,
    sp: SpectralPoint,
    anchor: f64,
    coefficients: GreenCoefficients,
    right: CMat,
    left: CMat,
    right_reflected: CMat,
    left_reflected: CMat,
    opts: GreenOptions,
}

fn flatten(c: &CoefficientSet, window: (f64, f64), opts: &GreenOptions) -> Result<CoefficientSet> {
    if c.is_constant() {
        Ok(c.clone())
    } else {
        c.flattened(window, opts.exterior_samples)
    }
}

impl StackGreen {
    pub fn new(stack: &LayerStack, sp: &SpectralPoint, anchor: f64, opts: &GreenOptions) -> Result<Self> {
        Self::with_conjugation(stack, sp, anchor, opts, Conjugation::Transconjugate)
    }

    pub fn with_conjugation(
        stack: &LayerStack,
        sp: &SpectralPoint,
        anchor: f64,
        opts: &GreenOptions,
        conjugation: Conjugation,
    ) -> Result<Self> {
        let (zl, zr) = (stack.left_edge(), stack.right_edge());
        let w = opts.exterior_window;
        let left = flatten(stack.left(), (zl - w, zl), opts)?;
        let right = flatten(stack.right(), (zr, zr + w), opts)?;
        let prepared = LayerStack::new(left.clone(), right.clone(), stack.layers().to_vec(), stack.origin())?;

        let mut point = *sp;
        if conjugation == Conjugation::ConjugateTranspose {
            if sp.regularized().im == 0.0 {
                return Err(AtmError::NeedsRegularization);
            }
            point = sp.reflected();
        }
        let (modes_r, modes_l) = loop {
            let r = bulk_modes(&right, zr, &point, opts)?;
            let l = bulk_modes(&left, zl, &r.sp, opts)?;
            if l.sp == r.sp {
                break (r, l);
            }
            point = l.sp;
        };
        let point = modes_r.sp;
        let reflected = point.reflected();
        let refl_r = modes_without_retry(&right, zr, &reflected, opts)?;
        let refl_l = modes_without_retry(&left, zl, &reflected, opts)?;

        let t = &opts.transfer;
        let right_b = prepared.transport_subspace(&modes_r.right_basis(), zr, anchor, &point, t)?;
        let left_b = prepared.transport_subspace(&modes_l.left_basis(), zl, anchor, &point, t)?;
        let right_rb = prepared.transport_subspace(&refl_r.right_basis(), zr, anchor, &reflected, t)?;
        let left_rb = prepared.transport_subspace(&refl_l.left_basis(), zl, anchor, &reflected, t)?;
        let coefficients = Self::coefficients_from(&right_b, &left_b, &right_rb, &left_rb, anchor, point)?;
        Ok(StackGreen {
            stack: prepared,
            sp: point,
            anchor,
            coefficients,
            right: right_b,
            left: left_b,
            right_reflected: right_rb,
            left_reflected: left_rb,
            opts: *opts,
        })
    }

    fn coefficients_from(
        right: &CMat,
        left: &CMat,
        right_reflected: &CMat,
        left_reflected: &CMat,
        z: f64,
        sp: SpectralPoint,
    ) -> Result<GreenCoefficients> {
        let n = right.ncols();
        let limits = RegularLimits {
            t_minus: limit_from_basis(left, n)?,
            t_plus: limit_from_basis(right, n)?,
            theta_minus: limit_from_basis(left_reflected, n)?.adjoint(),
            theta_plus: limit_from_basis(right_reflected, n)?.adjoint(),
            z,
            sp,
        };
        assemble_green_coefficients(&limits)
    }

    /// Spectral point in use (eta may exceed the requested one after a tie).
    pub fn sp(&self) -> &SpectralPoint {
        &self.sp
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn stack(&self) -> &LayerStack {
        &self.stack
    }

    pub fn dim(&self) -> usize {
        self.stack.dim()
    }

    pub fn coefficients(&self) -> &GreenCoefficients {
        &self.coefficients
    }

    pub fn limits(&self) -> &RegularLimits {
        &self.coefficients.limits
    }

    /// `T(z, anchor)`.
    pub fn transfer_to(&self, z: f64) -> Result<TransferMatrix> {
        self.stack.transfer(self.anchor, z, &self.sp, &self.opts.transfer)
    }

    /// Transconjugate of `T(z, anchor)`.
    pub fn transconjugate_to(&self, z: f64) -> Result<Transconjugated> {
        let reflected = self.stack.transfer(self.anchor, z, &self.sp.reflected(), &self.opts.transfer)?;
        Ok(Transconjugated::from_reflected(reflected))
    }

    pub fn green(&self, z: f64, zp: f64) -> Result<GreenSample> {
        green_eval(&self.coefficients, &self.transfer_to(z)?, &self.transconjugate_to(zp)?, Side::for_points(z, zp))
    }

    pub fn z_field(&self, z: f64, zp: f64) -> Result<CMat> {
        z_field_eval(&self.coefficients, &self.transfer_to(z)?, &self.transconjugate_to(zp)?, Side::for_points(z, zp))
    }

    /// Same Green function with the limits carried to a new anchor.
    pub fn reanchored(&self, anchor: f64) -> Result<StackGreen> {
        let t = &self.opts.transfer;
        let refl = self.sp.reflected();
        let right = self.stack.transport_subspace(&self.right, self.anchor, anchor, &self.sp, t)?;
        let left = self.stack.transport_subspace(&self.left, self.anchor, anchor, &self.sp, t)?;
        let right_reflected = self.stack.transport_subspace(&self.right_reflected, self.anchor, anchor, &refl, t)?;
        let left_reflected = self.stack.transport_subspace(&self.left_reflected, self.anchor, anchor, &refl, t)?;
        let coefficients = Self::coefficients_from(&right, &left, &right_reflected, &left_reflected, anchor, self.sp)?;
        Ok(StackGreen { stack: self.stack.clone(), sp: self.sp, anchor, coefficients, right, left, right_reflected, left_reflected, opts: self.opts })
    }

    /// Diagonal `𝒢(z) = G(z, z)`, computed as `C_AA` of the limits carried
    /// to `z` so that no growing transfer factor enters.
    pub fn diagonal(&self, z: f64) -> Result<CMat> {
        if z == self.anchor {
            return Ok(self.coefficients.c_aa.clone());
        }
        let n = self.dim();
        let t = &self.opts.transfer;
        let right = self.stack.transport_subspace(&self.right, self.anchor, z, &self.sp, t)?;
        let left = self.stack.transport_subspace(&self.left, self.anchor, z, &self.sp, t)?;
        let diff = limit_from_basis(&left, n)? - limit_from_basis(&right, n)?;
        linalg::inverse(&diff, "T₋ − T₊").map_err(|_| AtmError::DegenerateLimits)
    }

    /// Local density of states on a grid of positions.
    pub fn local_dos(&self, zs: &[f64]) -> Result<Vec<f64>> {
        let diag = zs.iter().map(|&z| self.diagonal(z)).collect::<Result<Vec<_>>>()?;
        local_dos(&diag, &self.sp)
    }
}
