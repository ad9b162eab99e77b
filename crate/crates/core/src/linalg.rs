//! Sparse matrices and a profile (skyline) LDL^T factorization.
//!
//! Tangent matrices here are symmetric but may be indefinite past a limit
//! point, so the factorization is plain LDL^T without pivoting on a
//! bandwidth-reducing node ordering.

use crate::error::{Error, Result};

/// Square matrix in compressed sparse row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an all-zero matrix from per-row column lists.
    pub fn from_pattern(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals: vec![0.0; nnz],
        }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let rows = a
            .iter()
            .map(|r| (0..r.len()).filter(|&j| r[j] != 0.0).collect())
            .collect();
        let mut m = CsrMatrix::from_pattern(rows);
        for i in 0..m.n {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                m.vals[k] = a[i][m.cols[k]];
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        let r = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        r.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.index_of(i, j).map_or(0.0, |k| self.vals[k])
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index_of(i, j).expect("entry outside sparsity pattern");
        self.vals[k] += v;
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }
}

/// Reverse Cuthill-McKee ordering of a graph given as adjacency lists.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree = |v: usize| adj[v].len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree(v), v));

    let bfs = |start: usize, visited: &mut Vec<bool>, out: &mut Vec<usize>| {
        let begin = out.len();
        visited[start] = true;
        out.push(start);
        let mut head = begin;
        while head < out.len() {
            let v = out[head];
            head += 1;
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree(w), w));
            for w in next {
                visited[w] = true;
                out.push(w);
            }
        }
    };

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // walk to a pseudo-peripheral node: restart from the last BFS level
        let mut start = seed;
        for _ in 0..3 {
            let mut seen = visited.clone();
            let mut tmp = Vec::new();
            bfs(start, &mut seen, &mut tmp);
            let last = *tmp.last().unwrap();
            if last == start {
                break;
            }
            start = last;
        }
        bfs(start, &mut visited, &mut order);
    }
    order.reverse();
    order
}

/// Symmetric LDL^T factorization stored by rows of the lower profile.
#[derive(Debug, Clone)]
pub struct SkylineLdlt {
    n: usize,
    // perm[new] = old
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    l: Vec<f64>,
    d: Vec<f64>,
}

/// Relative pivot size below which the matrix is reported singular.
const PIVOT_TOL: f64 = 1e-14;

impl SkylineLdlt {
    /// Factors `a` (assumed symmetric; only the lower triangle is read) in
    /// the DOF order given by `perm[new] = old`.
    pub fn factor(a: &CsrMatrix, perm: &[usize]) -> Result<Self> {
        let n = a.n();
        assert_eq!(perm.len(), n);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old_i in 0..n {
            let i = inv[old_i];
            for (old_j, _) in a.row(old_i) {
                let j = inv[old_j];
                if j < i {
                    first[i] = first[i].min(j);
                } else if j > i {
                    first[j] = first[j].min(i);
                }
            }
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            row_start.push(row_start[i] + (i - first[i]));
        }
        let mut l = vec![0.0; row_start[n]];
        let mut d = vec![0.0; n];
        let mut scale = 0.0f64;
        for old_i in 0..n {
            let i = inv[old_i];
            for (old_j, v) in a.row(old_i) {
                let j = inv[old_j];
                if j < i {
                    l[row_start[i] + j - first[i]] = v;
                } else if j == i {
                    d[i] = v;
                    scale = scale.max(v.abs());
                }
            }
        }
        let scale = scale.max(f64::MIN_POSITIVE);

        for i in 0..n {
            let fi = first[i];
            let ri = row_start[i];
            // g_ij = L_ij D_j, computed in place over the row
            for j in fi..i {
                let fj = first[j];
                let rj = row_start[j];
                let k0 = fi.max(fj);
                let mut s = l[ri + j - fi];
                for k in k0..j {
                    s -= l[ri + k - fi] * l[rj + k - fj];
                }
                l[ri + j - fi] = s;
            }
            let mut di = d[i];
            for j in fi..i {
                let g = l[ri + j - fi];
                let lij = g / d[j];
                di -= g * lij;
                l[ri + j - fi] = lij;
            }
            if !(di.abs() > PIVOT_TOL * scale) {
                return Err(Error::SingularTangent {
                    dof: perm[i],
                    pivot: di,
                });
            }
            d[i] = di;
        }
        Ok(SkylineLdlt {
            n,
            perm: perm.to_vec(),
            first,
            row_start,
            l,
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of negative pivots, the inertia count of the matrix.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    pub fn profile_size(&self) -> usize {
        self.l.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            let mut s = x[i];
            for j in fi..i {
                s -= self.l[ri + j - fi] * x[j];
            }
            x[i] = s;
        }
        for i in 0..self.n {
            x[i] /= self.d[i];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let ri = self.row_start[i];
            let xi = x[i];
            for j in fi..i {
                x[j] -= self.l[ri + j - fi] * xi;
            }
        }
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    pub fn solve_many(&self, rhs: &[&[f64]]) -> Vec<Vec<f64>> {
        rhs.iter().map(|b| self.solve(b)).collect()
    }
}

/// Solves the 2x2 system `a x = b`, or `None` when it is numerically singular.
pub fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(det.abs() > 1e-13 * scale * scale) {
        return None;
    }
    Some([
        (b[0] * a[1][1] - b[1] * a[0][1]) / det,
        (a[0][0] * b[1] - a[1][0] * b[0]) / det,
    ])
}

pub fn det2(a: [[f64; 2]; 2]) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse_spd(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..i {
                if rng.random::<f64>() < 0.15 {
                    let v = rng.random_range(-1.0..1.0);
                    a[i][j] = v;
                    a[j][i] = v;
                }
            }
        }
        for i in 0..n {
            let off: f64 = a[i].iter().map(|v: &f64| v.abs()).sum();
            a[i][i] = off + 0.5;
        }
        a
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &n in &[1usize, 5, 40] {
            let a = random_sparse_spd(n, &mut rng);
            let csr = CsrMatrix::from_dense(&a);
            let adj: Vec<Vec<usize>> = (0..n)
                .map(|i| (0..n).filter(|&j| j != i && a[i][j] != 0.0).collect())
                .collect();
            let perm = reverse_cuthill_mckee(&adj);
            let f = SkylineLdlt::factor(&csr, &perm).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let x = f.solve(&b);
            let dm = DMatrix::from_fn(n, n, |i, j| a[i][j]);
            let xd = dm.lu().solve(&DVector::from_vec(b)).unwrap();
            for i in 0..n {
                assert!((x[i] - xd[i]).abs() < 1e-10, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn indefinite_matrix_factors() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let f = SkylineLdlt::factor(&CsrMatrix::from_dense(&a), &[0, 1]).unwrap();
        assert_eq!(f.negative_pivots(), 1);
        let x = f.solve(&[3.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_reported() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(
            SkylineLdlt::factor(&CsrMatrix::from_dense(&a), &[0, 1]),
            Err(Error::SingularTangent { .. })
        ));
    }

    #[test]
    fn rcm_is_permutation_and_reduces_band_on_path() {
        // path graph numbered badly: 0-5-1-4-2-3
        let edges = [(0, 5), (5, 1), (1, 4), (4, 2), (2, 3)];
        let mut adj = vec![Vec::new(); 6];
        for (a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        let mut inv = vec![0; 6];
        for (k, &v) in perm.iter().enumerate() {
            inv[v] = k;
        }
        for (a, b) in edges {
            assert_eq!((inv[a] as i64 - inv[b] as i64).abs(), 1);
        }
    }

    #[test]
    fn two_by_two() {
        assert_eq!(solve2([[2.0, 0.0], [0.0, 4.0]], [2.0, 2.0]), Some([1.0, 0.5]));
        assert_eq!(solve2([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0]), None);
    }
}
