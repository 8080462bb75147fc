//! Compressed sparse column matrices, just enough for the solver:
//! construction from triplets, matrix-vector products, transpose.

/// Sparse m-by-n matrix in CSC form. Within each column, row indices are
/// strictly increasing; `colptr` has length `n + 1` with `colptr[0] == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMat {
    pub m: usize,
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMat {
    pub fn zeros(m: usize, n: usize) -> Self {
        CscMat { m, n, colptr: vec![0; n + 1], rowind: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        CscMat {
            m: n,
            n,
            colptr: (0..=n).collect(),
            rowind: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from (row, col, value) triplets. Duplicates are summed,
    /// exact zeros produced by summing are kept (pattern stability matters
    /// more here than minimal storage).
    pub fn from_triplets(m: usize, n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        for &(i, j, _) in triplets {
            assert!(i < m && j < n, "triplet ({i},{j}) out of bounds for {m}x{n}");
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_unstable_by_key(|&k| (triplets[k].1, triplets[k].0));

        let mut colptr = vec![0usize; n + 1];
        let mut rowind = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for &k in &order {
            let (i, j, v) = triplets[k];
            if let (Some(&last_i), true) = (rowind.last(), colptr[j + 1] > 0) {
                if last_i == i && rowind.len() > colptr[j] && colptr[j + 1] == rowind.len() {
                    // same column, same row as previous entry: merge
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rowind.push(i);
            values.push(v);
            colptr[j + 1] = rowind.len();
        }
        // forward-fill column pointers for empty columns
        for j in 0..n {
            if colptr[j + 1] < colptr[j] {
                colptr[j + 1] = colptr[j];
            }
        }
        for j in 0..n {
            debug_assert!(colptr[j] <= colptr[j + 1]);
        }
        CscMat { m, n, colptr, rowind, values }
    }

    pub fn nnz(&self) -> usize {
        self.rowind.len()
    }

    /// y += alpha * A * x
    pub fn axpy(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.m);
        for j in 0..self.n {
            let xj = alpha * x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.colptr[j]..self.colptr[j + 1] {
                y[self.rowind[p]] += self.values[p] * xj;
            }
        }
    }

    /// y += alpha * A' * x
    pub fn axpy_transpose(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.m);
        debug_assert_eq!(y.len(), self.n);
        for j in 0..self.n {
            let mut acc = 0.0;
            for p in self.colptr[j]..self.colptr[j + 1] {
                acc += self.values[p] * x[self.rowind[p]];
            }
            y[j] += alpha * acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        self.axpy(1.0, x, &mut y);
        y
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.axpy_transpose(1.0, x, &mut y);
        y
    }

    pub fn transpose(&self) -> CscMat {
        let mut triplets = Vec::with_capacity(self.nnz());
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                triplets.push((j, self.rowind[p], self.values[p]));
            }
        }
        CscMat::from_triplets(self.n, self.m, &triplets)
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                t.push((self.rowind[p], j, self.values[p]));
            }
        }
        t
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.m];
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                d[self.rowind[p]][j] += self.values[p];
            }
        }
        d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.colptr[j];
        let hi = self.colptr[j + 1];
        match self.rowind[lo..hi].binary_search(&i) {
            Ok(p) => self.values[lo + p],
            Err(_) => 0.0,
        }
    }

    /// Scales row i by r[i] and column j by c[j] in place.
    pub fn scale(&mut self, row: &[f64], col: &[f64]) {
        debug_assert_eq!(row.len(), self.m);
        debug_assert_eq!(col.len(), self.n);
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                self.values[p] *= row[self.rowind[p]] * col[j];
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    /// Gram matrix A'A, built column by column with a scatter workspace.
    pub fn gram(&self) -> CscMat {
        let at = self.transpose();
        let mut acc = vec![0.0; self.n];
        let mut mark = vec![false; self.n];
        let mut touched: Vec<usize> = Vec::new();
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let i = self.rowind[p];
                let v = self.values[p];
                for q in at.colptr[i]..at.colptr[i + 1] {
                    let k = at.rowind[q];
                    if !mark[k] {
                        mark[k] = true;
                        touched.push(k);
                    }
                    acc[k] += v * at.values[q];
                }
            }
            for &k in &touched {
                triplets.push((k, j, acc[k]));
                acc[k] = 0.0;
                mark[k] = false;
            }
            touched.clear();
        }
        CscMat::from_triplets(self.n, self.n, &triplets)
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a: f64, &x| a.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
