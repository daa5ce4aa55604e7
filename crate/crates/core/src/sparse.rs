//! Compressed sparse row matrices assembled from triplets.

use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;

#[derive(Clone, Debug, Default)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed in the
/// order they were pushed, which keeps assembly deterministic.
#[derive(Clone, Debug)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    pub fn build(mut self) -> Csr {
        // stable sort keeps the summation order of duplicates fixed
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last = None;
        for &(i, j, v) in &self.entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        Csr { nrows: self.nrows, ncols: self.ncols, indptr, indices, values }
    }
}

const PAR_THRESHOLD: usize = 20_000;

impl Csr {
    pub fn diagonal_matrix(d: &[f64]) -> Csr {
        let n = d.len();
        Csr { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: d.to_vec() }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        match idx.binary_search(&j) {
            Ok(k) => val[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`. Rows are independent, so the parallel path gives the same
    /// bits as the serial one.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        let row = |i: usize| {
            let (idx, val) = self.row(i);
            idx.iter().zip(val).map(|(&j, &a)| a * x[j]).sum::<f64>()
        };
        if self.nrows >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row(i);
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = A^T x`
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (idx, val) = self.row(i);
            for (&j, &a) in idx.iter().zip(val) {
                y[j] += a * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (&j, &a) in idx.iter().zip(val) {
                b.push(j, i, a);
            }
        }
        b.build()
    }

    /// `self + s * other` for matrices of the same shape.
    pub fn add_scaled(&self, s: f64, other: &Csr) -> Csr {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        for (m, f) in [(self, 1.0), (other, s)] {
            for i in 0..m.nrows {
                let (idx, val) = m.row(i);
                for (&j, &a) in idx.iter().zip(val) {
                    b.push(i, j, f * a);
                }
            }
        }
        b.build()
    }

    /// Keep only rows `rows` and columns `cols` (given as old -> new maps).
    pub fn submatrix(&self, row_map: &[Option<usize>], col_map: &[Option<usize>], nrows: usize, ncols: usize) -> Csr {
        let mut b = TripletBuilder::new(nrows, ncols);
        for i in 0..self.nrows {
            let Some(ni) = row_map[i] else { continue };
            let (idx, val) = self.row(i);
            for (&j, &a) in idx.iter().zip(val) {
                if let Some(nj) = col_map[j] {
                    b.push(ni, nj, a);
                }
            }
        }
        b.build()
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let mut trips = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (&j, &a) in idx.iter().zip(val) {
                trips.push(Triplet::new(i, j, a));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips).expect("valid sparse structure")
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().sum()).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
