//! Embedded Dormand–Prince 5(4) integrator for the linear matrix flow
//! `dY/dz = D(z)·Y`.

use crate::error::{AtmError, Result};
use crate::linalg::{CMat, C64};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th minus embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, Default)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
}

fn s(x: f64) -> C64 {
    C64::from(x)
}

/// Integrate `dY/dz = D(z)·Y` from `z0` to `z1` starting from `y0`.
///
/// The local error of each step is held below `tol·|h|/|z1 - z0|` in a mixed
/// absolute/relative max-norm, so the per-step budget sums to `tol` over the
/// whole interval. The solution is returned at every point of `stops` (which
/// must lie between `z0` and `z1`, in order of travel) followed by `z1`.
pub fn integrate_linear<F>(
    mut d: F,
    y0: &CMat,
    z0: f64,
    z1: f64,
    tol: f64,
    stops: &[f64],
) -> Result<(Vec<CMat>, IntegrationStats)>
where
    F: FnMut(f64) -> Result<CMat>,
{
    if !(tol > 0.0) {
        return Err(AtmError::invalid("tol", "must be positive"));
    }
    let span = z1 - z0;
    let dir = span.signum();
    for w in stops.windows(2) {
        if (w[1] - w[0]) * dir < 0.0 {
            return Err(AtmError::Contract("integration stops must be ordered along the direction of travel".into()));
        }
    }
    if stops.iter().any(|&zs| (zs - z0) * dir < 0.0 || (z1 - zs) * dir < 0.0) {
        return Err(AtmError::Contract("integration stop outside the integration interval".into()));
    }

    let mut out = Vec::with_capacity(stops.len() + 1);
    let mut stats = IntegrationStats::default();
    if span == 0.0 {
        out.extend(std::iter::repeat_n(y0.clone(), stops.len() + 1));
        return Ok((out, stats));
    }

    let mut targets: Vec<f64> = stops.to_vec();
    targets.push(z1);

    let mut z = z0;
    let mut y = y0.clone();
    let mut k1 = &d(z)? * &y;
    let d_norm = d(z0)?.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-12);
    let mut h = (0.1 * tol.powf(0.2) / d_norm).min(span.abs()) * dir;

    for &target in &targets {
        while (target - z) * dir > 0.0 {
            if stats.accepted + stats.rejected > MAX_STEPS {
                return Err(AtmError::StepUnderflow { z, step: h.abs() });
            }
            let remaining = target - z;
            let hit = h.abs() >= remaining.abs();
            let step = if hit { remaining } else { h };
            if step.abs() < 1e-14 * z.abs().max(1.0) && !hit {
                return Err(AtmError::StepUnderflow { z, step: step.abs() });
            }
            let hs = s(step);
            let y2 = &y + &k1 * (hs * A21);
            let k2 = &d(z + C2 * step)? * &y2;
            let y3 = &y + (&k1 * s(A31) + &k2 * s(A32)) * hs;
            let k3 = &d(z + C3 * step)? * &y3;
            let y4 = &y + (&k1 * s(A41) + &k2 * s(A42) + &k3 * s(A43)) * hs;
            let k4 = &d(z + C4 * step)? * &y4;
            let y5 = &y + (&k1 * s(A51) + &k2 * s(A52) + &k3 * s(A53) + &k4 * s(A54)) * hs;
            let k5 = &d(z + C5 * step)? * &y5;
            let y6 = &y + (&k1 * s(A61) + &k2 * s(A62) + &k3 * s(A63) + &k4 * s(A64) + &k5 * s(A65)) * hs;
            let k6 = &d(z + step)? * &y6;
            let y_new = &y + (&k1 * s(B1) + &k3 * s(B3) + &k4 * s(B4) + &k5 * s(B5) + &k6 * s(B6)) * hs;
            let k7 = &d(z + step)? * &y_new;
            let err_mat = (&k1 * s(E1) + &k3 * s(E3) + &k4 * s(E4) + &k5 * s(E5) + &k6 * s(E6) + &k7 * s(E7)) * hs;

            let budget = tol * (step.abs() / span.abs());
            let err = err_mat
                .iter()
                .zip(y.iter().zip(y_new.iter()))
                .map(|(e, (a, b))| e.norm() / (budget * (1.0 + a.norm().max(b.norm()))))
                .fold(0.0, f64::max);
            if !err.is_finite() {
                return Err(AtmError::StepUnderflow { z, step: step.abs() });
            }

            if err <= 1.0 {
                stats.accepted += 1;
                z = if hit { target } else { z + step };
                y = y_new;
                k1 = k7;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !hit || grow < 1.0 {
                    h = step * grow;
                }
            } else {
                stats.rejected += 1;
                h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, expm, frobenius};

    #[test]
    fn harmonic_flow_matches_rotation() {
        let d = CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(-1., 0.), c(0., 0.)]);
        let (ys, _) = integrate_linear(|_| Ok(d.clone()), &CMat::identity(2, 2), 0.0, 3.0, 1e-10, &[1.0]).unwrap();
        let exact1 = expm(&(&d * C64::from(1.0))).unwrap();
        let exact3 = expm(&(&d * C64::from(3.0))).unwrap();
        assert!(frobenius(&(&ys[0] - exact1)) < 1e-9);
        assert!(frobenius(&(&ys[1] - exact3)) < 1e-9);
    }

    #[test]
    fn backwards_integration() {
        let d = CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0.5, 0.), c(0., 0.)]);
        let (ys, _) = integrate_linear(|_| Ok(d.clone()), &CMat::identity(2, 2), 1.0, -1.0, 1e-11, &[]).unwrap();
        let exact = expm(&(&d * C64::from(-2.0))).unwrap();
        assert!(frobenius(&(&ys[0] - exact)) < 1e-10);
    }

    #[test]
    fn zero_length_is_identity() {
        let (ys, st) = integrate_linear(|_| Ok(CMat::identity(2, 2)), &CMat::identity(2, 2), 2.0, 2.0, 1e-10, &[]).unwrap();
        assert_eq!(ys[0], CMat::identity(2, 2));
        assert_eq!(st.accepted, 0);
    }

    #[test]
    fn rejects_bad_stops() {
        let r = integrate_linear(|_| Ok(CMat::identity(1, 1)), &CMat::identity(1, 1), 0.0, 1.0, 1e-8, &[0.5, 0.2]);
        assert!(matches!(r, Err(AtmError::Contract(_))));
    }
}
