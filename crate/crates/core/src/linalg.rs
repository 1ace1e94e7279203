//! Small dense/sparse linear algebra helpers shared by the solver stack.

/// Column-major sparse matrix. Rows and columns are 0-indexed; entries within
/// a column are sorted by row and deduplicated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    nrows: usize,
    ncols: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            cols: vec![Vec::new(); ncols],
        }
    }

    /// Builds from dense row-major data, dropping exact zeros.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged dense matrix");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    m.cols[j].push((i, v));
                }
            }
        }
        m
    }

    pub fn from_triplets(nrows: usize, ncols: usize, trips: &[(usize, usize, f64)]) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for &(i, j, v) in trips {
            assert!(i < nrows && j < ncols, "triplet out of range");
            if v != 0.0 {
                m.cols[j].push((i, v));
            }
        }
        for col in &mut m.cols {
            col.sort_by_key(|e| e.0);
            col.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn col(&self, j: usize) -> &[(usize, f64)] {
        &self.cols[j]
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(|c| c.len()).sum()
    }

    /// A * x
    pub fn times(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut out = vec![0.0; self.nrows];
        for (j, col) in self.cols.iter().enumerate() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for &(i, v) in col {
                out[i] += v * xj;
            }
        }
        out
    }

    /// A' * y
    pub fn transpose_times(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (j, col) in self.cols.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, v) in col {
                acc += v * y[i];
            }
            out[j] = acc;
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; self.ncols]; self.nrows];
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                rows[i][j] = v;
            }
        }
        rows
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

/// Smallest nonzero singular value of a dense matrix (rows x cols), via Jacobi
/// eigenvalue iteration on the Gram matrix of the smaller dimension.
/// Singular values below `rel_tol * sigma_max` count as zero.
pub fn smallest_nonzero_singular_value(rows: &[Vec<f64>], rel_tol: f64) -> f64 {
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    if m == 0 || n == 0 {
        return 0.0;
    }
    // Gram matrix of the smaller side keeps the Jacobi sweep cheap.
    let k = m.min(n);
    let mut g = vec![vec![0.0; k]; k];
    if m <= n {
        for i in 0..k {
            for j in 0..k {
                g[i][j] = dot(&rows[i], &rows[j]);
            }
        }
    } else {
        for i in 0..k {
            for j in 0..k {
                let mut acc = 0.0;
                for r in rows {
                    acc += r[i] * r[j];
                }
                g[i][j] = acc;
            }
        }
    }
    let eigs = jacobi_eigenvalues(&mut g);
    let max = eigs.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return 0.0;
    }
    let floor = max * rel_tol * rel_tol;
    eigs.iter()
        .filter(|&&e| e > floor)
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(a: &mut [Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off <= 1e-28 * (1.0 + frobenius_sq(a)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i].max(0.0)).collect()
}

fn frobenius_sq(a: &[Vec<f64>]) -> f64 {
    a.iter().map(|r| dot(r, r)).sum()
}

/// Inverse standard normal CDF (Acklam's rational approximation, |rel err| < 1.2e-9).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let plow = 0.02425;
    if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_roundtrip_and_products() {
        let dense = vec![vec![1.0, 0.0, 2.0], vec![0.0, -3.0, 0.5]];
        let m = SparseMat::from_dense(&dense);
        assert_eq!(m.to_dense(), dense);
        assert_eq!(m.times(&[1.0, 1.0, 2.0]), vec![5.0, -2.0]);
        assert_eq!(m.transpose_times(&[2.0, 1.0]), vec![2.0, -3.0, 4.5]);
    }

    #[test]
    fn triplets_accumulate() {
        let m = SparseMat::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, -1.0)]);
        assert_eq!(m.to_dense(), vec![vec![3.0, 0.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn sigma_min_of_diagonal() {
        let rows = vec![vec![3.0, 0.0, 0.0], vec![0.0, 0.5, 0.0]];
        let s = smallest_nonzero_singular_value(&rows, 1e-12);
        assert!((s - 0.5).abs() < 1e-10);
    }

    #[test]
    fn sigma_min_skips_null_directions() {
        // rank-1 matrix: single nonzero singular value sqrt(2).
        let rows = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let s = smallest_nonzero_singular_value(&rows, 1e-9);
        assert!((s - 2.0).abs() < 1e-9, "got {s}");
    }

    #[test]
    fn quantile_matches_known_points() {
        assert!((normal_quantile(0.975) - 1.959963985).abs() < 1e-7);
        assert!(normal_quantile(0.5).abs() < 1e-9);
        assert!((normal_quantile(0.6) - 0.2533471031).abs() < 1e-8);
    }
}
