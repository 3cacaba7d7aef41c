//! Dense row-major helpers for the small symmetric systems IRLS needs.

/// Square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: SquareMatrix,
}

impl Cholesky {
    /// Fails (returning the offending pivot index) unless `a` is
    /// numerically positive definite.
    pub fn new(a: &SquareMatrix) -> Result<Self, usize> {
        let n = a.dim();
        let mut l = SquareMatrix::zeros(n);
        let scale = a
            .diagonal()
            .iter()
            .fold(0.0_f64, |m, d| m.max(d.abs()))
            .max(f64::MIN_POSITIVE);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > scale * 1e-14) {
                return Err(j);
            }
            let d = d.sqrt();
            l.set(j, j, d);
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / d);
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    pub fn inverse(&self) -> SquareMatrix {
        let n = self.l.dim();
        let mut inv = SquareMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        inv
    }
}

/// Columns that are (numerically) linear combinations of earlier ones,
/// found by modified Gram–Schmidt. Each entry is the dependent column and
/// the earlier columns it loads on.
pub fn dependent_columns(
    rows: usize,
    cols: usize,
    at: impl Fn(usize, usize) -> f64,
) -> Vec<(usize, Vec<usize>)> {
    let mut basis: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut out = Vec::new();
    for j in 0..cols {
        let mut v: Vec<f64> = (0..rows).map(|i| at(i, j)).collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut loads = Vec::new();
        for (k, q) in &basis {
            let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            if proj.abs() > 1e-9 * norm0.max(1.0) {
                loads.push(*k);
            }
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            out.push((j, loads));
        } else {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push((j, v));
        }
    }
    out
}
