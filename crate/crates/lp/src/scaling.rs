//! Row/column equilibration with power-of-two factors.
//!
//! Factors are rounded to powers of two so scaling and unscaling are exact in
//! floating point.

/// Scale factors such that `scaled a_ij = row[i] * a_ij * col[j]`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

const GEOMETRIC_PASSES: usize = 6;

fn pow2(x: f64) -> f64 {
    if !x.is_finite() || x <= 0.0 {
        return 1.0;
    }
    2f64.powi(x.log2().round() as i32)
}

impl Scaling {
    pub fn identity(m: usize, n: usize) -> Self {
        Self {
            row: vec![1.0; m],
            col: vec![1.0; n],
        }
    }

    /// Geometric-mean passes followed by a max-norm equilibration of the
    /// columns. `entries` is `(row, col, value)` triplets.
    pub fn compute(m: usize, n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut s = Self::identity(m, n);
        if entries.is_empty() {
            return s;
        }
        let mut lo = vec![f64::INFINITY; m.max(n)];
        let mut hi = vec![0.0f64; m.max(n)];
        for _ in 0..GEOMETRIC_PASSES {
            lo[..m].fill(f64::INFINITY);
            hi[..m].fill(0.0);
            for &(i, j, a) in entries {
                let v = (a * s.col[j]).abs();
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
            for i in 0..m {
                if hi[i] > 0.0 {
                    s.row[i] = pow2(1.0 / (lo[i] * hi[i]).sqrt());
                }
            }
            lo[..n].fill(f64::INFINITY);
            hi[..n].fill(0.0);
            for &(i, j, a) in entries {
                let v = (a * s.row[i]).abs();
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
            for j in 0..n {
                if hi[j] > 0.0 {
                    s.col[j] = pow2(1.0 / (lo[j] * hi[j]).sqrt());
                }
            }
        }
        hi[..n].fill(0.0);
        for &(i, j, a) in entries {
            hi[j] = hi[j].max((a * s.row[i] * s.col[j]).abs());
        }
        for j in 0..n {
            if hi[j] > 0.0 {
                s.col[j] *= pow2(1.0 / hi[j]);
            }
        }
        s
    }
}
