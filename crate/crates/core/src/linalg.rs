//! Small dense symmetric positive-definite algebra for Newton steps.

/// Lower Cholesky factor of a row-major symmetric matrix.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factorises `a`. On failure returns the index of the first column whose
    /// pivot is not clearly positive, which names the offending regressor.
    pub(crate) fn new(a: &[f64], n: usize) -> Result<Self, usize> {
        debug_assert_eq!(a.len(), n * n);
        let scale = (0..n).map(|k| a[k * n + k].abs()).fold(0.0, f64::max);
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > tol) || !d.is_finite() {
                return Err(j);
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }

    pub(crate) fn inverse_diagonal(&self) -> Vec<f64> {
        let n = self.n;
        let mut e = vec![0.0; n];
        (0..n)
            .map(|k| {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[k] = 1.0;
                self.solve(&e)[k]
            })
            .collect()
    }
}
