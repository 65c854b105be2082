//! Small dense linear algebra kernels used by the learner and the
//! de-correlation solver. Matrices are square, symmetric, row-major.

use serde::{Deserialize, Serialize};

/// Dense square matrix, row-major storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DMat {
    n: usize,
    a: Vec<f64>,
}

impl DMat {
    pub fn zeros(n: usize) -> Self {
        DMat {
            n,
            a: vec![0.0; n * n],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut m = DMat::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut a = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix rows must be square");
            a.extend_from_slice(r);
        }
        DMat { n, a }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[f64] {
        &self.a
    }

    /// self += w * x xᵀ, writing both triangles.
    pub fn add_outer(&mut self, x: &[f64], w: f64) {
        debug_assert_eq!(x.len(), self.n);
        let n = self.n;
        for i in 0..n {
            let wxi = w * x[i];
            let row = &mut self.a[i * n..(i + 1) * n];
            for (rj, xj) in row.iter_mut().zip(x.iter()) {
                *rj += wxi * xj;
            }
        }
    }

    /// self += w * x xᵀ, touching only the upper triangle (j >= i).
    /// Call [`DMat::mirror_upper`] before reading the full matrix.
    pub fn add_outer_upper(&mut self, x: &[f64], w: f64) {
        debug_assert_eq!(x.len(), self.n);
        let n = self.n;
        for i in 0..n {
            let wxi = w * x[i];
            let row = &mut self.a[i * n + i..(i + 1) * n];
            for (rj, xj) in row.iter_mut().zip(x[i..].iter()) {
                *rj += wxi * xj;
            }
        }
    }

    /// Copy the upper triangle onto the lower one.
    pub fn mirror_upper(&mut self) {
        let n = self.n;
        for i in 1..n {
            for j in 0..i {
                self.a[i * n + j] = self.a[j * n + i];
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.a {
            *v *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> DMat {
        let mut m = self.clone();
        m.scale(c);
        m
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        let n = self.n;
        for i in 0..n {
            let row = &self.a[i * n..(i + 1) * n];
            let mut s = 0.0;
            for (r, xv) in row.iter().zip(x.iter()) {
                s += r * xv;
            }
            out[i] = s;
        }
    }

    /// out += c * (row j of self). For a symmetric matrix this accumulates
    /// a scaled column, which is how the learner forms S·β̂ over a sparse β̂.
    pub fn add_scaled_row(&self, j: usize, c: f64, out: &mut [f64]) {
        let row = self.row(j);
        for (o, r) in out.iter_mut().zip(row.iter()) {
            *o += c * r;
        }
    }

    /// mᵀ A m restricted to the listed support of m (valid when m is zero
    /// elsewhere). Exploits symmetry-free direct indexing.
    pub fn quad_form_support(&self, support: &[usize], m: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for &j in support {
            let mj = m[j];
            let row = &self.a[j * n..(j + 1) * n];
            let mut inner = 0.0;
            for &k in support {
                inner += row[k] * m[k];
            }
            s += mj * inner;
        }
        s
    }

    pub fn max_abs_diff(&self, other: &DMat) -> f64 {
        self.a
            .iter()
            .zip(other.a.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_diff(&self, other: &DMat) -> f64 {
        self.a
            .iter()
            .zip(other.a.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.a[i * n + j] - self.a[j * n + i]).abs());
            }
        }
        worst
    }

    /// Gauss-Jordan inverse with partial pivoting. Returns `None` when the
    /// matrix is numerically singular. Used as the dense oracle against the
    /// penalized row solver; it shares no code with it.
    pub fn invert(&self) -> Option<DMat> {
        let n = self.n;
        let mut a = self.a.clone();
        let mut inv = DMat::eye(n).a;
        for col in 0..n {
            // pivot
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for r in (col + 1)..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-300 {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                    inv.swap(col * n + j, piv * n + j);
                }
            }
            let d = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= d;
                inv[col * n + j] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[r * n + j] -= f * a[col * n + j];
                    inv[r * n + j] -= f * inv[col * n + j];
                }
            }
        }
        Some(DMat { n, a: inv })
    }

    /// Solve `self · x = b` by Gaussian elimination with partial pivoting.
    /// Returns `None` when numerically singular. The matrix is copied.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut a = self.a.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for r in (col + 1)..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-300 {
                return None;
            }
            if piv != col {
                for j in col..n {
                    a.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let d = a[col * n + col];
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for j in (col + 1)..n {
                s -= a[col * n + j] * x[j];
            }
            x[col] = s / a[col * n + col];
        }
        Some(x)
    }

    /// Cholesky factorization success doubles as a positive-definiteness check.
    pub fn is_positive_definite(&self) -> bool {
        let n = self.n;
        let mut l = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return false;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        true
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        s += x * y;
    }
    s
}

/// Top eigenvalue of (1/n) Σ x xᵀ over the given rows, by power iteration on
/// the implicit product v ↦ (1/n) Σ x ⟨x, v⟩. Deterministic: fixed start
/// vector, fixed tolerance. Returns 0 when the rows carry no mass.
pub fn top_eig_gram(rows: &[Vec<f64>], max_iters: usize, tol: f64) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0f64;
    let mut av = vec![0.0f64; d];
    for _ in 0..max_iters {
        av.iter_mut().for_each(|x| *x = 0.0);
        for x in rows {
            let c = dot(x, &v) / n;
            for (a, xv) in av.iter_mut().zip(x.iter()) {
                *a += c * xv;
            }
        }
        let norm = dot(&av, &av).sqrt();
        if norm < 1e-300 {
            return 0.0;
        }
        let new_lambda = dot(&av, &v);
        for (vi, ai) in v.iter_mut().zip(av.iter()) {
            *vi = ai / norm;
        }
        if (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1.0) {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outer_updates_match_between_full_and_upper() {
        let x = vec![1.0, -2.0, 0.5];
        let mut full = DMat::zeros(3);
        full.add_outer(&x, 2.0);
        let mut upper = DMat::zeros(3);
        upper.add_outer_upper(&x, 2.0);
        upper.mirror_upper();
        assert_eq!(full, upper);
        assert_eq!(full.get(0, 1), -4.0);
        assert_eq!(full.get(1, 1), 8.0);
    }

    #[test]
    fn invert_recovers_known_2x2() {
        let a = DMat::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]);
        let inv = a.invert().unwrap();
        let expect = DMat::from_rows(&[
            vec![4.0 / 3.0, -2.0 / 3.0],
            vec![-2.0 / 3.0, 4.0 / 3.0],
        ]);
        assert!(inv.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn invert_rejects_singular() {
        let a = DMat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(a.invert().is_none());
    }

    #[test]
    fn quad_form_support_matches_dense() {
        let a = DMat::from_rows(&[
            vec![2.0, 0.3, 0.0],
            vec![0.3, 1.5, -0.2],
            vec![0.0, -0.2, 1.0],
        ]);
        let m = vec![0.5, 0.0, -1.0];
        let support = vec![0, 2];
        let mut am = vec![0.0; 3];
        a.matvec(&m, &mut am);
        let dense = dot(&m, &am);
        let sparse = a.quad_form_support(&support, &m);
        assert!((dense - sparse).abs() < 1e-14);
    }

    #[test]
    fn cholesky_detects_definiteness() {
        let pd = DMat::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        assert!(pd.is_positive_definite());
        let not_pd = DMat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(!not_pd.is_positive_definite());
    }

    #[test]
    fn power_iteration_finds_dominant_gram_eigenvalue() {
        // rows aligned with e1 of norm 2 → (1/n)Σ xxᵀ has top eigenvalue 4.
        let rows = vec![vec![2.0, 0.0], vec![2.0, 0.0], vec![-2.0, 0.0]];
        let l = top_eig_gram(&rows, 200, 1e-12);
        assert!((l - 4.0).abs() < 1e-9, "l = {l}");
    }
}
