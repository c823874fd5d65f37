//! Normal-equation solvers for block-sparse symmetric systems.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix6};

/// Upper block triangle of a symmetric matrix made of 6×6 blocks.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub n_blocks: usize,
    /// Keyed by `(i, j)` with `i <= j`.
    pub blocks: BTreeMap<(usize, usize), Matrix6<f64>>,
    pub rhs: DVector<f64>,
}

impl BlockSystem {
    pub fn new(n_blocks: usize) -> Self {
        Self {
            n_blocks,
            blocks: BTreeMap::new(),
            rhs: DVector::zeros(6 * n_blocks),
        }
    }

    pub fn dim(&self) -> usize {
        6 * self.n_blocks
    }

    /// Adds `m` at block `(i, j)`; for `i > j` the transpose is stored.
    pub fn add(&mut self, i: usize, j: usize, m: &Matrix6<f64>) {
        let (key, val) = if i <= j { ((i, j), *m) } else { ((j, i), m.transpose()) };
        *self.blocks.entry(key).or_insert_with(Matrix6::zeros) += val;
    }

    pub fn add_rhs(&mut self, i: usize, v: &nalgebra::Vector6<f64>) {
        let mut seg = self.rhs.rows_mut(6 * i, 6);
        seg += v;
    }

    /// Value at scalar `(r, c)` with the diagonal multiplied by `diag_scale`.
    fn entry(&self, r: usize, c: usize, diag_scale: f64) -> f64 {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        let v = self.blocks.get(&(r / 6, c / 6)).map_or(0.0, |b| b[(r % 6, c % 6)]);
        if r == c {
            v * diag_scale
        } else {
            v
        }
    }

    pub fn to_dense(&self, diag_scale: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for (&(bi, bj), b) in &self.blocks {
            for r in 0..6 {
                for c in 0..6 {
                    a[(6 * bi + r, 6 * bj + c)] = b[(r, c)];
                    a[(6 * bj + c, 6 * bi + r)] = b[(r, c)];
                }
            }
        }
        for i in 0..n {
            a[(i, i)] *= diag_scale;
        }
        a
    }

    /// Solve `A·x = rhs` with dense Cholesky for up to `dense_max_blocks`
    /// blocks and skyline Cholesky above. `None` if `A` is not positive-definite.
    pub fn solve(&self, diag_scale: f64, dense_max_blocks: usize) -> Option<DVector<f64>> {
        if self.n_blocks == 0 {
            return Some(DVector::zeros(0));
        }
        if self.n_blocks <= dense_max_blocks {
            let chol = self.to_dense(diag_scale).cholesky()?;
            Some(chol.solve(&self.rhs))
        } else {
            let mut sky = SkylineMatrix::from_blocks(self, diag_scale);
            sky.factor()?;
            Some(sky.solve(&self.rhs))
        }
    }
}

/// Lower-triangular envelope storage: row `i` holds columns `first[i]..=i`.
#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl SkylineMatrix {
    pub fn from_blocks(sys: &BlockSystem, diag_scale: f64) -> Self {
        let n = sys.dim();
        let mut first_block: Vec<usize> = (0..sys.n_blocks).collect();
        for &(bi, bj) in sys.blocks.keys() {
            first_block[bj] = first_block[bj].min(bi);
        }
        let first: Vec<usize> = (0..n).map(|r| 6 * first_block[r / 6]).collect();
        let rows = (0..n)
            .map(|r| (first[r]..=r).map(|c| sys.entry(r, c, diag_scale)).collect())
            .collect();
        Self { first, rows }
    }

    /// Dense symmetric input, envelope taken from nonzeros of the lower triangle.
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let first: Vec<usize> = (0..n).map(|r| (0..=r).find(|&c| a[(r, c)] != 0.0).unwrap_or(r)).collect();
        let rows = (0..n).map(|r| (first[r]..=r).map(|c| a[(r, c)]).collect()).collect();
        Self { first, rows }
    }

    pub fn stored_entries(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        if c < self.first[r] {
            0.0
        } else {
            self.rows[r][c - self.first[r]]
        }
    }

    /// In-place `A = L·Lᵀ`; fill stays inside the envelope.
    pub fn factor(&mut self) -> Option<()> {
        let n = self.rows.len();
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..=i {
                let fj = self.first[j];
                let mut s = self.rows[i][j - fi];
                for k in fi.max(fj)..j {
                    s -= self.rows[i][k - fi] * self.rows[j][k - fj];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    self.rows[i][j - fi] = s.sqrt();
                } else {
                    self.rows[i][j - fi] = s / self.rows[j][j - fj];
                }
            }
        }
        Some(())
    }

    /// Solve with the factor computed by [`SkylineMatrix::factor`].
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.rows.len();
        let mut y = b.clone();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.rows[i][k - fi] * y[k];
            }
            y[i] = s / self.rows[i][i - fi];
        }
        for i in (0..n).rev() {
            y[i] /= self.get(i, i);
            let fi = self.first[i];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.rows[i][k - fi] * yi;
            }
        }
        y
    }
}
