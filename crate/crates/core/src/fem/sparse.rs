//! Compressed sparse row storage with a pattern fixed at construction.

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
    /// Set when the assembled values satisfy `‖A − Aᵀ‖_max ≤ 1e-12`.
    pub symmetric: bool,
}

impl CsrMatrix {
    /// Zero matrix whose pattern couples every pair of vertices that share a triangle.
    pub fn from_triangles(n: usize, triangles: &[[usize; 3]]) -> Self {
        let mut rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for t in triangles {
            for &a in t {
                for &b in t {
                    rows[a].insert(b);
                }
            }
        }
        for (i, r) in rows.iter_mut().enumerate() {
            r.insert(i);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows {
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix { n_rows: n, n_cols: n, row_ptr, col_idx, values: vec![0.0; nnz], symmetric: true }
    }

    /// Sums duplicate entries.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values, symmetric: false };
        m.update_symmetry();
        m
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        cols.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Value positions of the 3×3 element block of every triangle, row-major.
    pub fn element_positions(&self, triangles: &[[usize; 3]]) -> Vec<[usize; 9]> {
        triangles
            .iter()
            .map(|t| {
                let mut p = [0usize; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        p[3 * a + b] = self.position(t[a], t[b]).expect("pattern covers the triangle");
                    }
                }
                p
            })
            .collect()
    }

    pub fn zeroed(&self) -> Self {
        CsrMatrix { values: vec![0.0; self.nnz()], symmetric: true, ..self.clone() }
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n_rows {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            y[i] = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n_rows {
            let mut r = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                r += self.values[p] * y[self.col_idx[p]];
            }
            s += x[i] * r;
        }
        s
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                t.push((self.col_idx[p], i, self.values[p]));
            }
        }
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, t)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n_rows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                m = m.max((self.values[p] - self.get(j, i)).abs());
            }
        }
        m
    }

    pub fn update_symmetry(&mut self) {
        self.symmetric = self.n_rows == self.n_cols && self.max_asymmetry() <= 1e-12;
    }

    /// `self += alpha · other`; both must share the pattern.
    pub fn add_scaled(&mut self, other: &CsrMatrix, alpha: f64) {
        assert_eq!(self.col_idx, other.col_idx, "patterns differ");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        self.symmetric = self.symmetric && other.symmetric;
    }

    /// Coordinate-format text dump, one `i j value` per line.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n_rows, self.n_cols, self.nnz());
        for i in 0..self.n_rows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s.push_str(&format!("{} {} {}\n", i, self.col_idx[p], self.values[p]));
            }
        }
        s
    }
}
