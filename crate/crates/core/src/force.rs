//! The force-field abstraction shared by the integrators and studies.

/// A time-independent force `F: R^d -> R^d`, optionally deriving from a
/// potential (`F = -grad phi`).
pub trait ForceField: Sync {
    fn dim(&self) -> usize;

    /// Writes `F(x)` into `out`; both slices have length `dim()`.
    fn force_into(&self, x: &[f64], out: &mut [f64]);

    /// `phi(x)`, or `None` when the field carries no potential.
    fn potential(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// A certified upper bound for `sup |F|`, when one is known.
    fn sup_bound(&self) -> Option<f64> {
        None
    }

    fn force(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.force_into(x, &mut out);
        out
    }
}

impl<T: ForceField + ?Sized> ForceField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn force_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).force_into(x, out)
    }
    fn potential(&self, x: &[f64]) -> Option<f64> {
        (**self).potential(x)
    }
    fn sup_bound(&self) -> Option<f64> {
        (**self).sup_bound()
    }
}

/// `F ≡ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroField {
    pub dim: usize,
}

impl ForceField for ZeroField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn force_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn potential(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }
    fn sup_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Linear restoring force `F(x) = -stiffness * x` with `phi = stiffness |x|^2 / 2`.
/// Unbounded, so it reports no sup bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicField {
    pub dim: usize,
    pub stiffness: f64,
}

impl HarmonicField {
    pub fn unit(dim: usize) -> Self {
        Self { dim, stiffness: 1.0 }
    }
}

impl ForceField for HarmonicField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn force_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -self.stiffness * xi;
        }
    }
    fn potential(&self, x: &[f64]) -> Option<f64> {
        Some(0.5 * self.stiffness * x.iter().map(|v| v * v).sum::<f64>())
    }
}
