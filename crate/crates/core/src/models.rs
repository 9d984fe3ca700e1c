//! Concrete media with closed-form or brute-force reference answers.
//!
//! Units follow `ħ²/2m₀ = 1`: energies are measured in `ħ²/(2m₀L²)` for the
//! chosen length unit `L`, so a free electron has `k = √Ω`.

use crate::error::{AtmError, Result};
use crate::green::{medium_limits, GreenOptions};
use crate::linalg::{self, c, CMat, C64, I};
use crate::sl_system::{CoefficientSet, Coefficients, SpectralPoint};
use crate::stack::{Layer, LayerStack};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(AtmError::invalid(name, format!("must be positive, got {v}")))
    }
}

fn scalar(v: C64) -> CMat {
    CMat::from_element(1, 1, v)
}

/// Named model family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelPreset {
    FreeParticle { mass_scale: f64 },
    BenDanielDuke { mass: f64, potential: f64 },
    TwoBandToy { gap: f64, coupling: f64 },
}

impl ModelPreset {
    pub fn name(&self) -> &'static str {
        match self {
            ModelPreset::FreeParticle { .. } => "free-particle",
            ModelPreset::BenDanielDuke { .. } => "bendaniel-duke",
            ModelPreset::TwoBandToy { .. } => "two-band",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelPreset::TwoBandToy { .. } => 2,
            _ => 1,
        }
    }

    pub fn build(&self) -> Result<CoefficientSet> {
        match *self {
            ModelPreset::FreeParticle { mass_scale } => free_particle(mass_scale),
            ModelPreset::BenDanielDuke { mass, potential } => bendaniel_duke(mass, potential),
            ModelPreset::TwoBandToy { gap, coupling } => two_band_toy(gap, coupling),
        }
    }
}

/// `B = mass_scale`, `P = Y = 0`, `W = Ω − mass_scale·|κ|²`; plane waves
/// `e^{±ikz}` with `k = √(Ω/mass_scale)` at `κ = 0`.
pub fn free_particle(mass_scale: f64) -> Result<CoefficientSet> {
    positive("mass_scale", mass_scale)?;
    CoefficientSet::constant(scalar(c(mass_scale, 0.0)), CMat::zeros(1, 1), CMat::zeros(1, 1), move |sp| {
        scalar(sp.regularized() - mass_scale * sp.kappa_sq())
    })?
    .declare_hermitean((0.0, 1.0))
}

/// Effective-mass medium `((1/m)·F')' + (Ω − V − |κ|²/m)·F = 0`.
pub fn bendaniel_duke(mass: f64, potential: f64) -> Result<CoefficientSet> {
    positive("mass", mass)?;
    if !potential.is_finite() {
        return Err(AtmError::invalid("potential", "must be finite"));
    }
    CoefficientSet::constant(scalar(c(1.0 / mass, 0.0)), CMat::zeros(1, 1), CMat::zeros(1, 1), move |sp| {
        scalar(sp.regularized() - potential - sp.kappa_sq() / mass)
    })?
    .declare_hermitean((0.0, 1.0))
}

/// Square well of the given width centred on `z = 0`: zero potential and
/// mass `mass_in` inside, barrier `depth` and mass `mass_out` outside.
pub fn bendaniel_duke_well(width: f64, depth: f64, mass_in: f64, mass_out: f64) -> Result<LayerStack> {
    positive("width", width)?;
    positive("depth", depth)?;
    let barrier = bendaniel_duke(mass_out, depth)?;
    let well = bendaniel_duke(mass_in, 0.0)?;
    LayerStack::new(barrier.clone(), barrier, vec![Layer::new(well, width, "well")], -0.5 * width)
}

/// Two coupled channels with `B = I`, `P = Y = i·coupling·σₓ`,
/// `W = diag(Ω − gap/2, Ω + gap/2) − |κ|²·I`.
///
/// `P` is antihermitean, so `Y = −P† = P` and the first-derivative coupling
/// `2P·F'` survives in the second-order equation.
pub fn two_band_toy(gap: f64, coupling: f64) -> Result<CoefficientSet> {
    if !(gap >= 0.0) || !gap.is_finite() {
        return Err(AtmError::invalid("gap", format!("must be non-negative, got {gap}")));
    }
    if !coupling.is_finite() {
        return Err(AtmError::invalid("coupling", "must be finite"));
    }
    let zero = C64::new(0.0, 0.0);
    let p = CMat::from_row_slice(2, 2, &[zero, I * coupling, I * coupling, zero]);
    let set = CoefficientSet::new(2, true, move |_, sp| {
        let om = sp.regularized() - sp.kappa_sq();
        Coefficients {
            b: CMat::identity(2, 2),
            p: p.clone(),
            y: p.clone(),
            w: CMat::from_row_slice(2, 2, &[om - 0.5 * gap, zero, zero, om + 0.5 * gap]),
        }
    })?;
    set.declare_hermitean((0.0, 1.0))
}

/// `e^{ik|z−z′|}/(2ik)`, the free-particle Green function regular at `±∞`.
pub fn analytic_free_green(k: C64, z: f64, zp: f64) -> Result<C64> {
    if k == C64::new(0.0, 0.0) {
        return Err(AtmError::invalid("k", "must be nonzero"));
    }
    if k.im < 0.0 {
        return Err(AtmError::invalid("k", "needs a non-negative imaginary part"));
    }
    Ok((I * k * (z - zp).abs()).exp() / (I * k * 2.0))
}

/// Lowest `count` levels `(nπ/L)²/m` of an infinite square well.
pub fn infinite_well_levels(width: f64, mass: f64, count: usize) -> Result<Vec<f64>> {
    positive("width", width)?;
    positive("mass", mass)?;
    Ok((1..=count).map(|n| (n as f64 * std::f64::consts::PI / width).powi(2) / mass).collect())
}

/// Uniform grid of the finite-difference Green solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdGrid {
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
}

impl FdGrid {
    pub fn new(z_min: f64, z_max: f64, points: usize) -> Result<Self> {
        if points < 3 {
            return Err(AtmError::invalid("points", "need at least 3 grid points"));
        }
        if !(z_max > z_min) {
            return Err(AtmError::invalid("z_max", "must exceed z_min"));
        }
        Ok(FdGrid { z_min, z_max, points })
    }

    pub fn spacing(&self) -> f64 {
        (self.z_max - self.z_min) / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.z_min + i as f64 * self.spacing()
    }
}

/// Discrete Green function of a stack: a conservative second-order scheme
/// with outgoing-wave (Robin) closures built from the exterior limits,
/// factored once by block elimination.
#[derive(Debug, Clone)]
pub struct FdGreen {
    grid: FdGrid,
    dim: usize,
    lower: Vec<CMat>,
    diag: Vec<CMat>,
    upper: Vec<CMat>,
    pivot_inv: Vec<CMat>,
    elim: Vec<CMat>,
}

/// Build the discrete operator on `grid` and factor it. Every interface of
/// the stack must coincide with a grid node.
pub fn fd_green_oracle(stack: &LayerStack, grid: &FdGrid, sp: &SpectralPoint) -> Result<FdGreen> {
    if sp.regularized().im == 0.0 {
        return Err(AtmError::NeedsRegularization);
    }
    let h = grid.spacing();
    if grid.z_min > stack.left_edge() || grid.z_max < stack.right_edge() {
        return Err(AtmError::invalid("grid", "must cover every layer of the stack"));
    }
    for &zi in stack.interfaces() {
        let s = (zi - grid.z_min) / h;
        if (s - s.round()).abs() > 1e-8 {
            return Err(AtmError::invalid("grid", format!("interface at {zi} does not fall on a grid node")));
        }
    }
    let n = stack.dim();
    let m = grid.points - 1;
    let opts = GreenOptions { default_eta: 0.0, max_retries: 0, ..GreenOptions::default() };
    let t_minus = medium_limits(&stack.left().flattened((grid.z_min - 1.0, grid.z_min), 64)?, grid.z_min, sp, &opts)?.t_minus;
    let t_plus = medium_limits(&stack.right().flattened((grid.z_max, grid.z_max + 1.0), 64)?, grid.z_max, sp, &opts)?.t_plus;

    let at_mid = |i: usize| {
        let z = grid.node(i) + 0.5 * h;
        stack.medium_at(z).evaluate(z, sp)
    };
    // node coefficients averaged over the media on both sides
    let at_node = |i: usize| -> Result<Coefficients> {
        let z = grid.node(i);
        let l = stack.medium_at(z - 0.5 * h).evaluate(z, sp)?;
        let r = stack.medium_at(z + 0.5 * h).evaluate(z, sp)?;
        let half = C64::from(0.5);
        Ok(Coefficients { b: (l.b + r.b) * half, p: (l.p + r.p) * half, y: (l.y + r.y) * half, w: (l.w + r.w) * half })
    };

    let inv_h = C64::from(1.0 / h);
    let half = C64::from(0.5);
    let zero = CMat::zeros(n, n);
    let mut lower = vec![zero.clone(); m + 1];
    let mut diag = vec![zero.clone(); m + 1];
    let mut upper = vec![zero.clone(); m + 1];
    let mids: Vec<Coefficients> = (0..m).map(at_mid).collect::<Result<_>>()?;

    for i in 0..=m {
        let node = at_node(i)?;
        let y_over_2h = &node.y * (half * inv_h);
        if i == 0 || i == m {
            // half cell closed by A = −T·F with T the exterior limit
            let t = if i == 0 { &t_minus } else { &t_plus };
            let b_inv = linalg::inverse(&node.b, "B")?;
            let y_slope = &node.y * &b_inv * (-t - &node.p);
            let two_over_h = C64::from(2.0 / h);
            if i == 0 {
                let mp = &mids[0];
                upper[0] = (&mp.b * inv_h + &mp.p * half) * two_over_h;
                diag[0] = (-&mp.b * inv_h + &mp.p * half + t) * two_over_h + y_slope + &node.w;
            } else {
                let mm = &mids[m - 1];
                lower[m] = (&mm.b * inv_h - &mm.p * half) * two_over_h;
                diag[m] = (-t - &mm.b * inv_h - &mm.p * half) * two_over_h + y_slope + &node.w;
            }
        } else {
            let (mm, mp) = (&mids[i - 1], &mids[i]);
            upper[i] = (&mp.b * inv_h + &mp.p * half) * inv_h + &y_over_2h;
            lower[i] = (&mm.b * inv_h - &mm.p * half) * inv_h - &y_over_2h;
            diag[i] = (-&mp.b * inv_h + &mp.p * half - &mm.b * inv_h - &mm.p * half) * inv_h + &node.w;
        }
    }

    let mut pivot_inv = Vec::with_capacity(m + 1);
    let mut elim: Vec<CMat> = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let pivot = if i == 0 { diag[0].clone() } else { &diag[i] - &lower[i] * &elim[i - 1] };
        let inv = linalg::inverse(&pivot, "discrete operator pivot")
            .map_err(|_| AtmError::Singular("discrete Green operator (eta too small?)".into()))?;
        elim.push(&inv * &upper[i]);
        pivot_inv.push(inv);
    }
    Ok(FdGreen { grid: *grid, dim: n, lower, diag, upper, pivot_inv, elim })
}

impl FdGreen {
    pub fn grid(&self) -> &FdGrid {
        &self.grid
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.grid.points).map(|i| self.grid.node(i)).collect()
    }

    /// Index of the node at `z`, if `z` is one.
    pub fn index_of(&self, z: f64) -> Option<usize> {
        let s = (z - self.grid.z_min) / self.grid.spacing();
        let i = s.round();
        ((s - i).abs() < 1e-8 && i >= 0.0 && (i as usize) < self.grid.points).then_some(i as usize)
    }

    /// Solve `L_h·X = R` for block right-hand sides.
    pub fn solve(&self, rhs: &[CMat]) -> Result<Vec<CMat>> {
        let m = self.grid.points;
        if rhs.len() != m {
            return Err(AtmError::DimensionMismatch { expected: m, found: rhs.len() });
        }
        let mut y: Vec<CMat> = Vec::with_capacity(m);
        for i in 0..m {
            let r = if i == 0 { rhs[0].clone() } else { &rhs[i] - &self.lower[i] * &y[i - 1] };
            y.push(&self.pivot_inv[i] * r);
        }
        for i in (0..m - 1).rev() {
            let next = y[i + 1].clone();
            y[i] -= &self.elim[i] * next;
        }
        Ok(y)
    }

    /// Column `G_h(z_i, z_j)` over all nodes `i`: the response to a unit
    /// source at node `j`.
    pub fn column(&self, j: usize) -> Result<Vec<CMat>> {
        let m = self.grid.points;
        if j >= m {
            return Err(AtmError::invalid("j", format!("node index {j} outside the grid of {m} points")));
        }
        let h = self.grid.spacing();
        let weight = if j == 0 || j == m - 1 { 2.0 / h } else { 1.0 / h };
        let mut rhs = vec![CMat::zeros(self.dim, self.dim); m];
        rhs[j] = CMat::identity(self.dim, self.dim) * C64::from(weight);
        self.solve(&rhs)
    }

    /// `G_h(z_i, z_j)`.
    pub fn value(&self, i: usize, j: usize) -> Result<CMat> {
        let col = self.column(j)?;
        col.get(i).cloned().ok_or_else(|| AtmError::invalid("i", "node index outside the grid"))
    }

    /// Apply the discrete operator to block values at the nodes.
    pub fn apply(&self, f: &[CMat]) -> Result<Vec<CMat>> {
        let m = self.grid.points;
        if f.len() != m {
            return Err(AtmError::DimensionMismatch { expected: m, found: f.len() });
        }
        Ok((0..m)
            .map(|i| {
                let mut out = &self.diag[i] * &f[i];
                if i > 0 {
                    out += &self.lower[i] * &f[i - 1];
                }
                if i + 1 < m {
                    out += &self.upper[i] * &f[i + 1];
                }
                out
            })
            .collect())
    }
}
