//! Point sets on the unit hypercube used for ensemble quadrature.

use rand::Rng;

/// Cell midpoints of a tensor grid with `per_axis` cells along each of
/// `dims` axes, in lexicographic order (last axis fastest).
pub fn grid_midpoints(per_axis: usize, dims: usize) -> Vec<Vec<f64>> {
    let total = per_axis.pow(dims as u32);
    let mut out = Vec::with_capacity(total);
    let mut index = vec![0usize; dims];
    for _ in 0..total {
        out.push(index.iter().map(|&i| (i as f64 + 0.5) / per_axis as f64).collect());
        for axis in (0..dims).rev() {
            index[axis] += 1;
            if index[axis] < per_axis {
                break;
            }
            index[axis] = 0;
        }
    }
    out
}

/// Exact integer `dims`-th root of `count`, if there is one.
pub fn exact_root(count: usize, dims: usize) -> Option<usize> {
    let guess = (count as f64).powf(1.0 / dims as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|m| m.checked_pow(dims as u32) == Some(count))
}

/// The additive recurrence built on the generalized golden ratio: the
/// positive root of x^(dims+1) = x + 1. Coordinates are kept as 64-bit
/// fixed-point fractions so the sequence is bit-identical on every platform.
#[derive(Clone, Debug)]
pub struct KroneckerSequence {
    steps: Vec<u64>,
    offset: Vec<u64>,
}

impl KroneckerSequence {
    pub fn new(dims: usize, offset: Vec<u64>) -> Self {
        assert_eq!(offset.len(), dims);
        let mut g = 1.5f64;
        for _ in 0..64 {
            let p = (dims + 1) as i32;
            g -= (g.powi(p) - g - 1.0) / (p as f64 * g.powi(p - 1) - 1.0);
        }
        let steps = (1..=dims)
            .map(|j| {
                let frac = (1.0 / g.powi(j as i32)).fract();
                (frac * 2f64.powi(64)) as u64
            })
            .collect();
        Self { steps, offset }
    }

    pub fn point(&self, n: u64) -> Vec<f64> {
        self.steps
            .iter()
            .zip(&self.offset)
            .map(|(&step, &off)| {
                let word = off.wrapping_add(step.wrapping_mul(n + 1));
                // Top 53 bits, centred in the dyadic cell.
                ((word >> 11) as f64 + 0.5) * 2f64.powi(-53)
            })
            .collect()
    }
}

pub fn kronecker_points<R: Rng>(count: usize, dims: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let offset = (0..dims).map(|_| rng.random::<u64>()).collect();
    let seq = KroneckerSequence::new(dims, offset);
    (0..count as u64).map(|n| seq.point(n)).collect()
}

pub fn uniform_points<R: Rng>(count: usize, dims: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
        .collect()
}
