//! Adaptive Gauss–Kronrod (7/15) quadrature for complex-valued integrands.

// Nodes and weights are kept exactly as tabulated.
#![allow(clippy::excessive_precision)]

use crate::error::{AtmError, Result};
use crate::linalg::C64;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    pub value: C64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

fn gk15<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> (C64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += sum * WGK[j];
        if j % 2 == 1 {
            gauss += sum * WG[j / 2];
        }
    }
    ((kronrod * half), ((kronrod - gauss) * half).norm())
}

/// Integrate `f` over `[a, b]` until the summed error estimate falls below
/// `max(abs_tol, rel_tol·|I|)`, bisecting the worst interval each round.
pub fn integrate<F: FnMut(f64) -> C64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<QuadratureResult> {
    if a == b {
        return Ok(QuadratureResult { value: C64::new(0.0, 0.0), error_estimate: 0.0, evaluations: 0 });
    }
    let mut intervals = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    let mut evaluations = 15;
    loop {
        let total: C64 = intervals.iter().map(|iv| iv.2).sum();
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        let target = abs_tol.max(rel_tol * total.norm());
        if err <= target {
            return Ok(QuadratureResult { value: total, error_estimate: err, evaluations });
        }
        if intervals.len() >= max_intervals {
            return Err(AtmError::Quadrature { estimate: err, tolerance: target });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        evaluations += 30;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| C64::new(x.powi(5) - 2.0 * x, x * x), 0.0, 2.0, 1e-13, 1e-13, 10).unwrap();
        assert!((r.value - C64::new(64.0 / 6.0 - 4.0, 8.0 / 3.0)).norm() < 1e-12);
    }

    #[test]
    fn oscillatory_integrand() {
        let k = 25.0;
        let r = integrate(|x| C64::new(0.0, k * x).exp(), 0.0, 3.0, 1e-12, 1e-12, 500).unwrap();
        let exact = (C64::new(0.0, 3.0 * k).exp() - 1.0) / C64::new(0.0, k);
        assert!((r.value - exact).norm() < 1e-11);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x| C64::new(1.0 / x.abs().sqrt().max(1e-300), 0.0), -1.0, 1.0, 1e-14, 0.0, 4);
        assert!(matches!(r, Err(AtmError::Quadrature { .. })));
    }
}
