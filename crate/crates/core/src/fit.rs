//! Ordinary least-squares line fits used by the scaling studies.

use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
    pub points: usize,
}

/// Fits `y = slope * x + intercept`. Needs at least two points with distinct `x`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData {
            usable: n,
            required: 2,
            excluded: 0,
        });
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::param("x", "all abscissae coincide"));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual_norm = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    Ok(LinearFit {
        slope,
        intercept,
        residual_norm,
        points: n,
    })
}
