//! Geometric-mean equilibration of the constraint matrix.
//!
//! Scale factors are rounded to powers of two so that scaling and unscaling
//! introduce no rounding error.

const PASSES: usize = 6;

#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

fn pow2(x: f64) -> f64 {
    if !x.is_finite() || x <= 0.0 {
        return 1.0;
    }
    2f64.powi(x.log2().round().clamp(-60.0, 60.0) as i32)
}

impl Scaling {
    /// `entries` are `(row, col, value)` triples of the structural matrix.
    pub fn compute(m: usize, n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut row = vec![1.0; m];
        let mut col = vec![1.0; n];
        for _ in 0..PASSES {
            let mut lo = vec![f64::INFINITY; m];
            let mut hi = vec![0.0f64; m];
            for &(i, j, a) in entries {
                let v = (a * col[j]).abs();
                if v > 0.0 {
                    lo[i] = lo[i].min(v);
                    hi[i] = hi[i].max(v);
                }
            }
            for i in 0..m {
                if hi[i] > 0.0 {
                    row[i] = pow2(1.0 / (lo[i] * hi[i]).sqrt());
                }
            }
            let mut lo = vec![f64::INFINITY; n];
            let mut hi = vec![0.0f64; n];
            for &(i, j, a) in entries {
                let v = (a * row[i]).abs();
                if v > 0.0 {
                    lo[j] = lo[j].min(v);
                    hi[j] = hi[j].max(v);
                }
            }
            for j in 0..n {
                if hi[j] > 0.0 {
                    col[j] = pow2(1.0 / (lo[j] * hi[j]).sqrt());
                }
            }
        }
        Scaling { row, col }
    }
}
