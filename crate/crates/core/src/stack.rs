//! Layered heterostructures: finite layers between two semi-infinite media.

use crate::error::{AtmError, Result};
use crate::linalg::{self, frobenius, CMat};
use crate::ode;
use crate::sl_system::{companion_matrix, CoefficientSet, SpectralPoint};
use crate::transfer::{self, compose, TransferMatrix, TransferOptions};

#[derive(Debug, Clone)]
pub struct Layer {
    pub medium: CoefficientSet,
    pub thickness: f64,
    pub label: String,
}

impl Layer {
    pub fn new(medium: CoefficientSet, thickness: f64, label: impl Into<String>) -> Self {
        Layer { medium, thickness, label: label.into() }
    }
}

/// Ordered layers starting at `origin`, with `left` filling `z < origin` and
/// `right` filling everything beyond the last interface.
#[derive(Debug, Clone)]
pub struct LayerStack {
    left: CoefficientSet,
    right: CoefficientSet,
    layers: Vec<Layer>,
    origin: f64,
    interfaces: Vec<f64>,
}

impl LayerStack {
    pub fn new(left: CoefficientSet, right: CoefficientSet, layers: Vec<Layer>, origin: f64) -> Result<Self> {
        let n = left.dim();
        if right.dim() != n {
            return Err(AtmError::DimensionMismatch { expected: n, found: right.dim() });
        }
        let mut interfaces = Vec::with_capacity(layers.len() + 1);
        interfaces.push(origin);
        let mut z = origin;
        for (k, layer) in layers.iter().enumerate() {
            if layer.medium.dim() != n {
                return Err(AtmError::DimensionMismatch { expected: n, found: layer.medium.dim() });
            }
            if !(layer.thickness > 0.0) || !layer.thickness.is_finite() {
                return Err(AtmError::invalid(
                    &format!("layers[{k}].thickness"),
                    format!("must be positive, got {}", layer.thickness),
                ));
            }
            z += layer.thickness;
            interfaces.push(z);
        }
        Ok(LayerStack { left, right, layers, origin, interfaces })
    }

    /// A single infinite medium (both exteriors, no layers).
    pub fn homogeneous(medium: CoefficientSet) -> Self {
        LayerStack::new(medium.clone(), medium, Vec::new(), 0.0).expect("homogeneous stack is always valid")
    }

    pub fn dim(&self) -> usize {
        self.left.dim()
    }

    pub fn left(&self) -> &CoefficientSet {
        &self.left
    }

    pub fn right(&self) -> &CoefficientSet {
        &self.right
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Interface positions, `layers().len() + 1` values.
    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    pub fn left_edge(&self) -> f64 {
        self.origin
    }

    pub fn right_edge(&self) -> f64 {
        *self.interfaces.last().unwrap()
    }

    pub fn total_thickness(&self) -> f64 {
        self.right_edge() - self.left_edge()
    }

    /// Medium occupying `z`; an interface belongs to the region on its right.
    pub fn medium_at(&self, z: f64) -> &CoefficientSet {
        if z < self.origin {
            return &self.left;
        }
        match self.interfaces.partition_point(|&x| x <= z) {
            k if k > self.layers.len() => &self.right,
            k => &self.layers[k - 1].medium,
        }
    }

    /// Homogeneous pieces `(medium, start, end)` traversed going from `za` to `zb`.
    pub fn pieces(&self, za: f64, zb: f64) -> Vec<(&CoefficientSet, f64, f64)> {
        let (lo, hi) = if za <= zb { (za, zb) } else { (zb, za) };
        let mut cuts = vec![lo];
        cuts.extend(self.interfaces.iter().copied().filter(|&x| x > lo && x < hi));
        cuts.push(hi);
        let mut pieces: Vec<_> = cuts
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| (self.medium_at(0.5 * (w[0] + w[1])), w[0], w[1]))
            .collect();
        if za > zb {
            pieces.reverse();
            for p in &mut pieces {
                std::mem::swap(&mut p.1, &mut p.2);
            }
        }
        pieces
    }

    /// `T(zb, za)` chained across every interface in between.
    pub fn transfer(&self, za: f64, zb: f64, sp: &SpectralPoint, opts: &TransferOptions) -> Result<TransferMatrix> {
        let mut t = TransferMatrix::identity(self.dim(), za, *sp);
        for (medium, z0, z1) in self.pieces(za, zb) {
            let layer = transfer::propagate_layer(medium, z0, z1, sp, opts)?;
            t = compose(&layer, &t)?;
        }
        Ok(t)
    }

    /// Carry the column space of `basis` (2N×k) from `za` to `zb`,
    /// re-orthonormalizing after every bounded-growth chunk.
    pub fn transport_subspace(
        &self,
        basis: &CMat,
        za: f64,
        zb: f64,
        sp: &SpectralPoint,
        opts: &TransferOptions,
    ) -> Result<CMat> {
        let mut q = linalg::orthonormalize(basis);
        for (medium, z0, z1) in self.pieces(za, zb) {
            let d_mid = companion_matrix(medium, 0.5 * (z0 + z1), sp)?;
            let chunks = (frobenius(&d_mid) * (z1 - z0).abs() / 4.0).ceil().max(1.0) as usize;
            let step = (z1 - z0) / chunks as f64;
            for k in 0..chunks {
                let a = z0 + k as f64 * step;
                let b = if k + 1 == chunks { z1 } else { a + step };
                let moved = if medium.is_constant() {
                    transfer::raw_constant_layer(medium, a, b, sp)?.into_matrix() * &q
                } else {
                    let (ys, _) = ode::integrate_linear(|z| companion_matrix(medium, z, sp), &q, a, b, opts.tol, &[])?;
                    ys.into_iter().next().expect("end point")
                };
                if !linalg::is_finite(&moved) {
                    return Err(AtmError::IllConditioned { z_from: a, z_to: b, cond: f64::INFINITY });
                }
                q = linalg::orthonormalize(&moved);
            }
        }
        Ok(q)
    }

    /// Copy of the stack whose graded exteriors are replaced by their averages
    /// over `window` lengths adjacent to the outer interfaces.
    pub fn flattened_exteriors(&self, window: f64, samples: usize) -> Result<(CoefficientSet, CoefficientSet)> {
        let left = self.left.flattened((self.left_edge() - window, self.left_edge()), samples)?;
        let right = self.right.flattened((self.right_edge(), self.right_edge() + window), samples)?;
        Ok((left, right))
    }
}

/// Letters of the Fibonacci word: `S₁ = A`, `S₂ = AB`, `Sₙ = Sₙ₋₁Sₙ₋₂`.
/// `true` marks an `A`.
pub fn fibonacci_word(generation: usize) -> Result<Vec<bool>> {
    if generation == 0 {
        return Err(AtmError::invalid("generation", "must be at least 1"));
    }
    let mut prev = vec![true];
    if generation == 1 {
        return Ok(prev);
    }
    let mut cur = vec![true, false];
    for _ in 2..generation {
        let mut next = cur.clone();
        next.extend_from_slice(&prev);
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(cur)
}

/// Quasiregular stack following the Fibonacci word, embedded between the
/// given exterior media.
pub fn fibonacci_stack(
    generation: usize,
    layer_a: &Layer,
    layer_b: &Layer,
    left: CoefficientSet,
    right: CoefficientSet,
) -> Result<LayerStack> {
    let layers = fibonacci_word(generation)?
        .into_iter()
        .map(|is_a| if is_a { layer_a.clone() } else { layer_b.clone() })
        .collect();
    LayerStack::new(left, right, layers, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, C64};

    fn medium(v: f64) -> CoefficientSet {
        CoefficientSet::constant(CMat::identity(1, 1), CMat::zeros(1, 1), CMat::zeros(1, 1), move |sp| {
            CMat::from_element(1, 1, sp.regularized() - C64::from(v))
        })
        .unwrap()
    }

    #[test]
    fn fibonacci_words() {
        let letters = |g| -> String {
            fibonacci_word(g).unwrap().into_iter().map(|a| if a { 'A' } else { 'B' }).collect()
        };
        assert_eq!(letters(1), "A");
        assert_eq!(letters(2), "AB");
        assert_eq!(letters(5), "ABAABABA");
        assert!(fibonacci_word(0).is_err());
    }

    #[test]
    fn negative_thickness_rejected() {
        let err = LayerStack::new(medium(0.0), medium(0.0), vec![Layer::new(medium(1.0), -1.0, "x")], 0.0);
        assert!(matches!(err, Err(AtmError::InvalidParameter { .. })));
    }

    #[test]
    fn pieces_follow_direction() {
        let s = LayerStack::new(
            medium(0.0),
            medium(0.0),
            vec![Layer::new(medium(1.0), 1.0, "a"), Layer::new(medium(2.0), 2.0, "b")],
            0.0,
        )
        .unwrap();
        let fwd: Vec<(f64, f64)> = s.pieces(-1.0, 4.0).into_iter().map(|p| (p.1, p.2)).collect();
        assert_eq!(fwd, vec![(-1.0, 0.0), (0.0, 1.0), (1.0, 3.0), (3.0, 4.0)]);
        let back: Vec<(f64, f64)> = s.pieces(2.0, -0.5).into_iter().map(|p| (p.1, p.2)).collect();
        assert_eq!(back, vec![(2.0, 1.0), (1.0, 0.0), (0.0, -0.5)]);
        let sp = SpectralPoint::real(0.5);
        let w = s.medium_at(2.0).evaluate(0.0, &sp).unwrap().w[(0, 0)];
        assert_eq!(w, c(-1.5, 0.0));
    }

    #[test]
    fn stack_transfer_inverts_when_reversed() {
        let s = LayerStack::new(medium(0.0), medium(0.3), vec![Layer::new(medium(1.0), 0.7, "a")], 0.0).unwrap();
        let sp = SpectralPoint::real(0.8);
        let opts = TransferOptions::default();
        let fwd = s.transfer(-0.5, 1.5, &sp, &opts).unwrap();
        let back = s.transfer(1.5, -0.5, &sp, &opts).unwrap();
        let prod = compose(&back, &fwd).unwrap();
        assert!(frobenius(&(prod.matrix() - CMat::identity(2, 2))) < 1e-12);
    }
}
