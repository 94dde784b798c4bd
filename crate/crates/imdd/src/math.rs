//! Small dense linear algebra used by the recurrent networks and the
//! weight optimizer. Row-major matrices over `f64`, no BLAS.

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape does not match data length");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// out = A·x
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// out = A·[x1; x2] + b, avoiding the concatenation.
    pub fn matvec_concat(&self, x1: &[f64], x2: &[f64], b: &[f64], out: &mut [f64]) {
        assert_eq!(x1.len() + x2.len(), self.cols);
        assert_eq!(b.len(), self.rows);
        assert_eq!(out.len(), self.rows);
        let split = x1.len();
        for ((o, row), bi) in out.iter_mut().zip(self.data.chunks_exact(self.cols)).zip(b) {
            *o = dot(&row[..split], x1) + dot(&row[split..], x2) + bi;
        }
    }

    /// out = A·[e_hot; x2] + b where e_hot is the one-hot unit vector of
    /// dimension `hot_dim` with a one at `hot`.
    pub fn matvec_onehot_concat(
        &self,
        hot: usize,
        hot_dim: usize,
        x2: &[f64],
        b: &[f64],
        out: &mut [f64],
    ) {
        assert!(hot < hot_dim);
        assert_eq!(hot_dim + x2.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for ((o, row), bi) in out.iter_mut().zip(self.data.chunks_exact(self.cols)).zip(b) {
            *o = row[hot] + dot(&row[hot_dim..], x2) + bi;
        }
    }

    /// out += Aᵀ·y restricted to columns `[col_lo, col_hi)`:
    /// out[j - col_lo] += Σ_i A[i][j]·y[i].
    pub fn add_tr_matvec_cols(&self, y: &[f64], col_lo: usize, col_hi: usize, out: &mut [f64]) {
        assert_eq!(y.len(), self.rows);
        assert_eq!(out.len(), col_hi - col_lo);
        for (yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if *yi != 0.0 {
                axpy(*yi, &row[col_lo..col_hi], out);
            }
        }
    }

    /// Rank-one accumulation A += y·[x1; x2]ᵀ.
    pub fn add_outer_concat(&mut self, y: &[f64], x1: &[f64], x2: &[f64]) {
        assert_eq!(y.len(), self.rows);
        assert_eq!(x1.len() + x2.len(), self.cols);
        let split = x1.len();
        for (yi, row) in y.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if *yi != 0.0 {
                axpy(*yi, x1, &mut row[..split]);
                axpy(*yi, x2, &mut row[split..]);
            }
        }
    }

    /// Rank-one accumulation with a one-hot first block:
    /// A += y·[e_hot; x2]ᵀ.
    pub fn add_outer_onehot_concat(&mut self, y: &[f64], hot: usize, hot_dim: usize, x2: &[f64]) {
        assert_eq!(y.len(), self.rows);
        assert_eq!(hot_dim + x2.len(), self.cols);
        for (yi, row) in y.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if *yi != 0.0 {
                row[hot] += *yi;
                axpy(*yi, x2, &mut row[hot_dim..]);
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// y += alpha·x
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Index of the largest element; ties broken toward the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    assert!(!v.is_empty());
    let mut best = 0;
    let mut best_v = v[0];
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > best_v {
            best_v = x;
            best = i;
        }
    }
    best
}

/// Euclidean projection of `v` onto the probability simplex
/// { a : a_i >= 0, Σ a_i = 1 }.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    assert!(n > 0);
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cssv = 0.0;
    let mut rho = 0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cssv += uj;
        let t = (cssv - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            rho = j + 1;
            theta = t;
        }
    }
    debug_assert!(rho > 0);
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Relative error ||a − b|| / max(||b||, floor), used by gradient checks.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matvec_identity() {
        let m = Mat::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let mut out = [0.0; 2];
        m.matvec(&[3.0, -4.0], &mut out);
        assert_eq!(out, [3.0, -4.0]);
    }

    #[test]
    fn matvec_concat_matches_plain() {
        let m = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = [0.5, -0.5];
        let mut out = [0.0; 2];
        m.matvec_concat(&[1.0], &[2.0, 3.0], &b, &mut out);
        // row0: 1*1 + 2*2 + 3*3 + 0.5 = 14.5; row1: 4 + 10 + 18 - 0.5 = 31.5
        assert_eq!(out, [14.5, 31.5]);
    }

    #[test]
    fn onehot_concat_matches_dense() {
        let m = Mat::from_vec(2, 4, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let b = [0.0, 1.0];
        let mut fast = [0.0; 2];
        m.matvec_onehot_concat(1, 2, &[0.5, 0.25], &b, &mut fast);
        let mut dense = [0.0; 2];
        m.matvec_concat(&[0.0, 1.0], &[0.5, 0.25], &b, &mut dense);
        assert_eq!(fast, dense);
    }

    #[test]
    fn transpose_matvec_cols() {
        let m = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut out = vec![0.0; 2];
        m.add_tr_matvec_cols(&[1.0, 1.0], 1, 3, &mut out);
        assert_eq!(out, vec![7.0, 9.0]);
    }

    #[test]
    fn outer_accumulation() {
        let mut m = Mat::zeros(2, 3);
        m.add_outer_concat(&[1.0, 2.0], &[3.0], &[4.0, 5.0]);
        assert_eq!(m.as_slice(), &[3.0, 4.0, 5.0, 6.0, 8.0, 10.0]);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[5.0, 5.0]), 0);
    }

    #[test]
    fn simplex_projection_known_cases() {
        // Already on the simplex -> unchanged.
        let p = project_simplex(&[0.2, 0.3, 0.5]);
        for (a, b) in p.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        // Large single coordinate -> vertex.
        let p = project_simplex(&[10.0, 0.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] == 0.0 && p[2] == 0.0);
        // Symmetric input -> uniform.
        let p = project_simplex(&[-3.0, -3.0]);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn simplex_projection_is_feasible(v in proptest::collection::vec(-10.0f64..10.0, 1..8)) {
            let p = project_simplex(&v);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn simplex_projection_is_closest_point(
            v in proptest::collection::vec(-3.0f64..3.0, 2..5),
            q in proptest::collection::vec(0.01f64..1.0, 2..5),
        ) {
            // Any feasible point is no closer to v than the projection.
            prop_assume!(v.len() == q.len());
            let p = project_simplex(&v);
            let qs: f64 = q.iter().sum();
            let q: Vec<f64> = q.iter().map(|x| x / qs).collect();
            let d = |a: &[f64]| -> f64 {
                a.iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum()
            };
            prop_assert!(d(&p) <= d(&q) + 1e-9);
        }
    }
}
