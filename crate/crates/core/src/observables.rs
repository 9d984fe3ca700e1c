//! Scattering and bound-state observables of a layered stack.

use crate::error::{AtmError, Result};
use crate::green::{eigen_modes, medium_limits, GreenOptions};
use crate::linalg::{CMat, CVec, C64};
use crate::par::{self, Execution};
use crate::sl_system::{flux, SpectralPoint, StateVector};
use crate::stack::LayerStack;
use crate::transfer::TransferOptions;

/// Mode of a one-channel exterior medium.
#[derive(Debug, Clone)]
struct Channel {
    psi: CVec,
    flux: f64,
    propagating: bool,
}

/// The two modes of a one-channel medium, ordered as (right-going, left-going).
/// Propagating modes are told apart by their flux: a right-going wave
/// carries negative flux under the sign convention of [`flux`]. Evanescent
/// modes count as right-going when they decay towards `+∞`.
fn split_channels(c: &crate::sl_system::CoefficientSet, z: f64, sp: &SpectralPoint) -> Result<(Channel, Channel)> {
    if c.dim() != 1 {
        return Err(AtmError::invalid("stack", "transmission is defined for one-channel exterior media only"));
    }
    let (lambdas, vecs) = eigen_modes(c, z, sp)?;
    let chans: Vec<(Channel, bool)> = (0..2)
        .map(|j| {
            let psi = vecs.column(j).into_owned();
            let s = StateVector::from_psi(&psi).expect("even length");
            let j_flux = flux(&s).re;
            let l = lambdas[j];
            let propagating = l.re.abs() <= 1e-7 * l.norm().max(1e-300);
            let right_going = if propagating { j_flux < 0.0 } else { l.re < 0.0 };
            (Channel { psi, flux: j_flux, propagating }, right_going)
        })
        .collect();
    let mut it = chans.into_iter();
    let (a, a_right) = it.next().unwrap();
    let (b, b_right) = it.next().unwrap();
    if a_right == b_right {
        return Err(AtmError::NotRegular { right: usize::from(a_right) * 2, left: usize::from(!a_right) * 2 });
    }
    Ok(if a_right { (a, b) } else { (b, a) })
}

/// Flux transmission probability for a wave incident from the left, or
/// `None` when the left exterior has no propagating channel.
pub fn transmission(stack: &LayerStack, sp: &SpectralPoint, opts: &TransferOptions) -> Result<Option<f64>> {
    let (zl, zr) = (stack.left_edge(), stack.right_edge());
    let (incoming, reflected) = split_channels(stack.left(), zl, sp)?;
    let (transmitted, _) = split_channels(stack.right(), zr, sp)?;
    if !incoming.propagating {
        return Ok(None);
    }
    if !transmitted.propagating {
        return Ok(Some(0.0));
    }
    let t_s = stack.transfer(zl, zr, sp, opts)?.into_matrix();
    // t·v_tr − r·T·v_ref = T·v_in
    let lhs = CMat::from_columns(&[transmitted.psi.clone(), -(&t_s * &reflected.psi)]);
    let rhs = &t_s * &incoming.psi;
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| AtmError::Singular("scattering matching system".into()))?;
    let t = x[0];
    Ok(Some(t.norm_sqr() * transmitted.flux.abs() / incoming.flux.abs()))
}

/// Settings of the bound-state search.
#[derive(Debug, Clone, Copy)]
pub struct BoundStateOptions {
    /// Number of sign-scan intervals over the bracket.
    pub scan_points: usize,
    pub kappa: [f64; 2],
    pub transfer: TransferOptions,
    pub execution: Execution,
}

impl Default for BoundStateOptions {
    fn default() -> Self {
        BoundStateOptions { scan_points: 400, kappa: [0.0; 2], transfer: TransferOptions::default(), execution: Execution::Parallel }
    }
}

/// Real part of the matching determinant `det(A_R + T₋·F_R)` at the left
/// interface, where `(F_R, A_R)` is the solution regular at `+∞` carried back
/// through the stack. Vanishes exactly at bound states; `None` when either
/// exterior is not evanescent at `omega`.
pub fn matching_determinant(stack: &LayerStack, omega: f64, kappa: [f64; 2], opts: &TransferOptions) -> Result<Option<f64>> {
    let sp = SpectralPoint::real(omega).with_kappa(kappa);
    let strict = GreenOptions { max_retries: 0, transfer: *opts, ..GreenOptions::default() };
    let (zl, zr) = (stack.left_edge(), stack.right_edge());
    let t_minus = match medium_limits(stack.left(), zl, &sp, &strict) {
        Ok(l) => l.t_minus,
        Err(AtmError::NotRegular { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let t_plus = match medium_limits(stack.right(), zr, &sp, &strict) {
        Ok(l) => l.t_plus,
        Err(AtmError::NotRegular { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let n = stack.dim();
    let mut right = CMat::zeros(2 * n, n);
    right.rows_mut(0, n).copy_from(&CMat::identity(n, n));
    right.rows_mut(n, n).copy_from(&(-t_plus));
    let back = stack.transfer(zr, zl, &sp, opts)?.into_matrix() * right;
    let f_r = back.rows(0, n).into_owned();
    let a_r = back.rows(n, n).into_owned();
    let det: C64 = (a_r + t_minus * f_r).determinant();
    Ok(Some(det.re))
}

/// Bound-state energies in `bracket`, located by a sign scan of the matching
/// determinant followed by bisection down to `tol`. Roots of even
/// multiplicity produce no sign change and are not reported.
pub fn find_bound_states(stack: &LayerStack, bracket: (f64, f64), tol: f64, opts: &BoundStateOptions) -> Result<Vec<f64>> {
    let (lo, hi) = bracket;
    if !(hi > lo) {
        return Err(AtmError::invalid("bracket", "upper end must exceed the lower end"));
    }
    if !(tol > 0.0) {
        return Err(AtmError::invalid("tol", "must be positive"));
    }
    let n = opts.scan_points.max(2);
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let f = |om: f64| matching_determinant(stack, om, opts.kappa, &opts.transfer);
    let values = par::map(opts.execution, &grid, |&om| f(om)).into_iter().collect::<Result<Vec<_>>>()?;

    let mut roots = Vec::new();
    for i in 0..n {
        let (Some(fa), Some(fb)) = (values[i], values[i + 1]) else { continue };
        if fa == 0.0 {
            roots.push(grid[i]);
            continue;
        }
        if fa.signum() == fb.signum() || fb == 0.0 {
            continue;
        }
        let (mut a, mut b, mut fa) = (grid[i], grid[i + 1], fa);
        while b - a > tol {
            let mid = 0.5 * (a + b);
            let Some(fm) = f(mid)? else { break };
            if fm == 0.0 {
                a = mid;
                b = mid;
                break;
            }
            if fm.signum() == fa.signum() {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        roots.push(0.5 * (a + b));
    }
    if let Some(Some(last)) = values.last() {
        if *last == 0.0 {
            roots.push(hi);
        }
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{bendaniel_duke, bendaniel_duke_well, free_particle};
    use crate::stack::Layer;

    #[test]
    fn empty_stack_transmits_everything() {
        let stack = LayerStack::homogeneous(free_particle(1.0).unwrap());
        let t = transmission(&stack, &SpectralPoint::real(0.7), &TransferOptions::default()).unwrap().unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        assert_eq!(transmission(&stack, &SpectralPoint::real(-0.7), &TransferOptions::default()).unwrap(), None);
    }

    #[test]
    fn rectangular_barrier_closed_form() {
        let (v0, a, e) = (2.0_f64, 1.3_f64, 0.8_f64);
        let outside = bendaniel_duke(1.0, 0.0).unwrap();
        let barrier = bendaniel_duke(1.0, v0).unwrap();
        let stack = LayerStack::new(outside.clone(), outside, vec![Layer::new(barrier, a, "b")], 0.0).unwrap();
        let t = transmission(&stack, &SpectralPoint::real(e), &TransferOptions::default()).unwrap().unwrap();
        let q = (v0 - e).sqrt();
        let want = 1.0 / (1.0 + v0 * v0 * (q * a).sinh().powi(2) / (4.0 * e * (v0 - e)));
        assert!((t - want).abs() < 1e-10, "{t} vs {want}");
    }

    #[test]
    fn finite_well_ground_state() {
        let (width, depth) = (2.0, 3.0);
        let stack = bendaniel_duke_well(width, depth, 1.0, 1.0).unwrap();
        let roots = find_bound_states(&stack, (1e-3, depth - 1e-3), 1e-12, &BoundStateOptions::default()).unwrap();
        assert!(!roots.is_empty());
        let e = roots[0];
        let k = e.sqrt();
        let kappa = (depth - e).sqrt();
        assert!((k * (k * width / 2.0).tan() - kappa).abs() < 1e-8);
    }

    #[test]
    fn homogeneous_medium_has_no_bound_states() {
        let stack = LayerStack::homogeneous(bendaniel_duke(1.0, 1.0).unwrap());
        let roots = find_bound_states(&stack, (0.0, 0.99), 1e-10, &BoundStateOptions::default()).unwrap();
        assert!(roots.is_empty());
    }
}
