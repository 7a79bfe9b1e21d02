//! Linear solver for periodic banded matrices.
//!
//! A cyclic band matrix has nonzeros A[i][(i+d) mod n] for |d| ≤ w. The last
//! 2w unknowns are treated as a border: the interior block is banded without
//! wrap-around and is factored by banded LU with partial pivoting, and the
//! border is closed with a small dense Schur complement.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CyclicBanded {
    n: usize,
    w: usize,
    /// diag[i][d + w] = A[i][(i + d) mod n]
    diag: Vec<Vec<f64>>,
}

impl CyclicBanded {
    pub fn zeros(n: usize, w: usize) -> Self {
        assert!(n >= 4 * w + 2, "matrix too small for half-bandwidth {w}");
        Self { n, w, diag: vec![vec![0.0; 2 * w + 1]; n] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn half_bandwidth(&self) -> usize {
        self.w
    }

    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.n as isize;
        let mut d = j as isize - i as isize;
        if d > n / 2 {
            d -= n;
        } else if d < -n / 2 {
            d += n;
        }
        (d.unsigned_abs() <= self.w).then(|| (d + self.w as isize) as usize)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.offset(i, j).map_or(0.0, |k| self.diag[i][k])
    }

    /// Add to A[i][(i + d) mod n].
    pub fn add(&mut self, i: usize, d: isize, v: f64) {
        debug_assert!(d.unsigned_abs() <= self.w);
        self.diag[i][(d + self.w as isize) as usize] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                self.diag[i]
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * x[(i + n + k - self.w) % n])
                    .sum()
            })
            .collect()
    }

    /// Solve A x = rhs.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.n);
        let (n, w) = (self.n, self.w);
        let b = 2 * w;
        let m = n - b;
        if w == 0 {
            return rhs
                .iter()
                .zip(&self.diag)
                .enumerate()
                .map(|(i, (r, d))| if d[0] != 0.0 { Ok(r / d[0]) } else { Err(Error::Singular(i)) })
                .collect();
        }

        let mut inner = BandLu::zeros(m, w, w);
        for i in 0..m {
            for j in i.saturating_sub(w)..(i + w + 1).min(m) {
                inner.set(i, j, self.get(i, j));
            }
        }
        inner.factor()?;

        // A_IB columns, one solve per border unknown.
        let mut y_cols = Vec::with_capacity(b);
        for c in 0..b {
            let col = m + c;
            let mut v: Vec<f64> = (0..m).map(|i| self.get(i, col)).collect();
            inner.solve_in_place(&mut v);
            y_cols.push(v);
        }
        let mut y = rhs[..m].to_vec();
        inner.solve_in_place(&mut y);

        // Border rows only touch interior columns within w of the wrap.
        let border_cols = |r: usize| {
            let row = m + r;
            (0..m).filter(move |&j| self.offset(row, j).is_some())
        };
        let mut s = vec![vec![0.0; b]; b];
        let mut g = vec![0.0; b];
        for r in 0..b {
            let row = m + r;
            for c in 0..b {
                s[r][c] = self.get(row, m + c);
            }
            g[r] = rhs[row];
            for j in border_cols(r) {
                let a = self.get(row, j);
                for c in 0..b {
                    s[r][c] -= a * y_cols[c][j];
                }
                g[r] -= a * y[j];
            }
        }
        let xb = dense_solve(s, g)?;
        let mut x = y;
        for (c, col) in y_cols.iter().enumerate() {
            for (xi, yi) in x.iter_mut().zip(col) {
                *xi -= yi * xb[c];
            }
        }
        x.extend_from_slice(&xb);
        Ok(x)
    }
}

/// Banded LU with partial pivoting on a non-periodic m×m band (kl below, ku above).
#[derive(Debug, Clone)]
struct BandLu {
    m: usize,
    kl: usize,
    ku: usize,
    /// rows[i][j − i + kl] for j ∈ [i − kl, i + kl + ku] (extra kl for pivot fill).
    rows: Vec<Vec<f64>>,
    pivots: Vec<usize>,
    multipliers: Vec<Vec<f64>>,
}

impl BandLu {
    fn zeros(m: usize, kl: usize, ku: usize) -> Self {
        Self {
            m,
            kl,
            ku,
            rows: vec![vec![0.0; 2 * kl + ku + 1]; m],
            pivots: vec![0; m],
            multipliers: vec![vec![0.0; kl]; m],
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        j + self.kl - i
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.rows[i][k] = v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            return 0.0;
        }
        self.rows[i][self.idx(i, j)]
    }

    fn factor(&mut self) -> Result<()> {
        let (m, kl, ku) = (self.m, self.kl, self.ku);
        for k in 0..m {
            let last = (k + kl).min(m - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular(k));
            }
            self.pivots[k] = p;
            let hi = (k + kl + ku).min(m - 1);
            if p != k {
                for j in k..=hi {
                    let a = self.get(k, j);
                    let bp = self.get(p, j);
                    self.set(k, j, bp);
                    if j <= p + kl + ku {
                        self.set(p, j, a);
                    }
                }
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last {
                let l = self.get(i, k) / pivot;
                self.multipliers[k][i - k - 1] = l;
                self.set(i, k, 0.0);
                if l != 0.0 {
                    for j in k + 1..=hi.min(i + kl + ku) {
                        let v = self.get(i, j) - l * self.get(k, j);
                        self.set(i, j, v);
                    }
                }
            }
        }
        Ok(())
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let (m, kl, ku) = (self.m, self.kl, self.ku);
        for k in 0..m {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for (i, l) in self.multipliers[k].iter().enumerate() {
                let row = k + 1 + i;
                if row < m {
                    x[row] -= l * xk;
                }
            }
        }
        for k in (0..m).rev() {
            let hi = (k + kl + ku).min(m - 1);
            let mut s = x[k];
            for j in k + 1..=hi {
                s -= self.get(k, j) * x[j];
            }
            x[k] = s / self.get(k, k);
        }
    }
}

/// Gaussian elimination with partial pivoting for the small border system.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        if a[p][k] == 0.0 {
            return Err(Error::Singular(k));
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let l = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= l * a[k][j];
            }
            b[i] -= l * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, w: usize, rng: &mut impl Rng, dominance: f64) -> CyclicBanded {
        let mut a = CyclicBanded::zeros(n, w);
        for i in 0..n {
            for d in -(w as isize)..=(w as isize) {
                a.add(i, d, rng.gen_range(-1.0..1.0));
            }
            a.add(i, 0, dominance);
        }
        a
    }

    fn dense(a: &CyclicBanded) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), a.len(), |i, j| a.get(i, j))
    }

    #[test]
    fn matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (n, w) in [(10, 1), (16, 2), (40, 2), (33, 3)] {
            // no diagonal dominance: pivoting must do the work
            let a = random_matrix(n, w, &mut rng, 0.0);
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = a.solve(&rhs).unwrap();
            let reference = dense(&a).lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
            for (u, v) in x.iter().zip(reference.iter()) {
                assert!((u - v).abs() < 1e-8 * (1.0 + v.abs()), "{u} vs {v}");
            }
            let back = a.mul_vec(&x);
            for (u, v) in back.iter().zip(&rhs) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn corner_entries_wrap() {
        let mut a = CyclicBanded::zeros(12, 2);
        a.add(0, -2, 3.0);
        a.add(11, 1, 5.0);
        assert_eq!(a.get(0, 10), 3.0);
        assert_eq!(a.get(11, 0), 5.0);
        assert_eq!(a.get(0, 5), 0.0);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CyclicBanded::zeros(12, 2);
        assert!(a.solve(&[1.0; 12]).is_err());
    }
}
