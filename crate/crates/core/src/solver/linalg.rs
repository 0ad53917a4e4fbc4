//! Sparse storage and the linear solvers behind every exact computation.

use crate::error::{Error, Result};

/// Compressed sparse rows with `u32` column indices.
#[derive(Clone, Debug, Default)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from unsorted triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut t: Vec<(u32, u32, f64)>) -> Csr {
        t.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(u32, u32)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i as usize + 1] += 1;
            cols.push(j);
            vals.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n_rows, n_cols, row_ptr, cols, vals }
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = M x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            y[i] = c.iter().zip(v).map(|(&j, &a)| a * x[j as usize]).sum();
        }
    }

    pub fn transpose(&self) -> Csr {
        let mut count = vec![0usize; self.n_cols + 1];
        for &j in &self.cols {
            count[j as usize + 1] += 1;
        }
        for j in 0..self.n_cols {
            count[j + 1] += count[j];
        }
        let row_ptr = count.clone();
        let mut next = count;
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                let p = next[j as usize];
                cols[p] = i as u32;
                vals[p] = a;
                next[j as usize] += 1;
            }
        }
        Csr { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr, cols, vals }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let t = self.transpose();
        self.row_ptr == t.row_ptr
            && self.cols == t.cols
            && self.vals.iter().zip(&t.vals).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// `y = (I - M) x`.
pub fn apply_i_minus(m: &Csr, x: &[f64], y: &mut [f64]) {
    m.matvec(x, y);
    for i in 0..y.len() {
        y[i] = x[i] - y[i];
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate gradients for symmetric positive definite operators.
pub fn cg(
    op: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    op(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let bn = norm2(b).max(f64::MIN_POSITIVE);
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= rel_tol * bn {
            return Ok(x);
        }
        op(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= rel_tol * bn {
        return Ok(x);
    }
    Err(Error::NoConvergence(format!("cg: residual {:e} after {max_iter} iterations", rr.sqrt() / bn)))
}

/// Restarted GMRES with modified Gram-Schmidt.
pub fn gmres(
    op: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    restart: usize,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let bn = norm2(b).max(f64::MIN_POSITIVE);
    let mut w = vec![0.0; n];
    let mut total = 0;
    loop {
        op(&x, &mut w);
        let r: Vec<f64> = (0..n).map(|i| b[i] - w[i]).collect();
        let beta = norm2(&r);
        if beta <= rel_tol * bn {
            return Ok(x);
        }
        if total >= max_iter {
            return Err(Error::NoConvergence(format!("gmres: residual {:e}", beta / bn)));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|a| a / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            total += 1;
            op(&v[k], &mut w);
            for j in 0..=k {
                h[j][k] = dot(&w, &v[j]);
                for i in 0..n {
                    w[i] -= h[j][k] * v[j][i];
                }
            }
            h[k + 1][k] = norm2(&w);
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let den = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            cs[k] = h[k][k] / den;
            sn[k] = h[k + 1][k] / den;
            let hk1 = h[k + 1][k];
            h[k][k] = cs[k] * h[k][k] + sn[k] * hk1;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= rel_tol * bn || total >= max_iter || hk1 == 0.0 {
                break;
            }
            v.push(w.iter().map(|a| a / hk1).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * v[j][i];
            }
        }
    }
}

/// BiCGSTAB for general nonsingular operators.
pub fn bicgstab(
    op: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    op(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let bn = norm2(b).max(f64::MIN_POSITIVE);
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        if norm2(&r) <= rel_tol * bn {
            return Ok(x);
        }
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        op(&p, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= rel_tol * bn {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return Ok(x);
        }
        op(&s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega == 0.0 {
            break;
        }
    }
    if norm2(&r) <= rel_tol * bn {
        return Ok(x);
    }
    Err(Error::NoConvergence(format!("bicgstab: residual {:e}", norm2(&r) / bn)))
}

/// LU without pivoting in envelope storage.
///
/// The leading `c x c` blocks of `L` and `U` factor the leading block of the
/// matrix, so one factorization serves every prefix. Intended for
/// nonsingular M-matrices, where no pivoting is needed.
#[derive(Clone, Debug)]
pub struct SkylineLu {
    n: usize,
    first: Vec<usize>,
    off: Vec<usize>,
    lrow: Vec<f64>,
    ucol: Vec<f64>,
    diag: Vec<f64>,
}

impl SkylineLu {
    pub fn factor(a: &Csr) -> Result<SkylineLu> {
        let n = a.n_rows;
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            let (c, _) = a.row(i);
            for &j in c {
                let j = j as usize;
                let (lo, hi) = if j < i { (j, i) } else { (i, j) };
                first[hi] = first[hi].min(lo);
            }
        }
        let mut off = vec![0usize; n + 1];
        for i in 0..n {
            off[i + 1] = off[i] + (i - first[i]);
        }
        let mut lrow = vec![0.0; off[n]];
        let mut ucol = vec![0.0; off[n]];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let (c, v) = a.row(i);
            for (&j, &x) in c.iter().zip(v) {
                let j = j as usize;
                if j < i {
                    lrow[off[i] + j - first[i]] = x;
                } else if j > i {
                    ucol[off[j] + i - first[j]] = x;
                } else {
                    diag[i] = x;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let (lprev, lcur) = lrow.split_at_mut(off[i]);
            let (uprev, ucur) = ucol.split_at_mut(off[i]);
            let lcur = &mut lcur[..i - fi];
            let ucur = &mut ucur[..i - fi];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let lj = &lprev[off[j]..off[j] + (j - fj)];
                let uj = &uprev[off[j]..off[j] + (j - fj)];
                let s_l = dot(&lcur[k0 - fi..j - fi], &uj[k0 - fj..]);
                let s_u = dot(&lj[k0 - fj..], &ucur[k0 - fi..j - fi]);
                lcur[j - fi] = (lcur[j - fi] - s_l) / diag[j];
                ucur[j - fi] -= s_u;
            }
            diag[i] -= dot(lcur, ucur);
            if !(diag[i].abs() > 1e-300) || !diag[i].is_finite() {
                return Err(Error::Singular(format!("zero pivot at row {i}")));
            }
        }
        Ok(SkylineLu { n, first, off, lrow, ucol, diag })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn l(&self, i: usize) -> &[f64] {
        &self.lrow[self.off[i]..self.off[i + 1]]
    }

    fn u(&self, i: usize) -> &[f64] {
        &self.ucol[self.off[i]..self.off[i + 1]]
    }

    /// Solves `U^T y = b`; every prefix of `y` solves the matching prefix system.
    pub fn forward_ut(&self, b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let fi = self.first[i];
            y[i] = (b[i] - dot(self.u(i), &y[fi..i])) / self.diag[i];
        }
        y
    }

    /// Solves `L y = b` (unit lower); prefix-consistent like [`Self::forward_ut`].
    pub fn forward_l(&self, b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let fi = self.first[i];
            y[i] = b[i] - dot(self.l(i), &y[fi..i]);
        }
        y
    }

    /// Solves `L_c^T u = y[..c]` for the leading block of size `c`.
    pub fn backward_lt(&self, y: &[f64], c: usize) -> Vec<f64> {
        let mut u = y[..c].to_vec();
        for i in (0..c).rev() {
            let ui = u[i];
            if ui != 0.0 {
                let fi = self.first[i];
                for (k, l) in self.l(i).iter().enumerate() {
                    u[fi + k] -= l * ui;
                }
            }
        }
        u
    }

    /// Solves `U_c x = y[..c]` for the leading block of size `c`.
    pub fn backward_u(&self, y: &[f64], c: usize) -> Vec<f64> {
        let mut x = y[..c].to_vec();
        for i in (0..c).rev() {
            x[i] /= self.diag[i];
            let xi = x[i];
            if xi != 0.0 {
                let fi = self.first[i];
                for (k, u) in self.u(i).iter().enumerate() {
                    x[fi + k] -= u * xi;
                }
            }
        }
        x
    }

    /// Solves `A_c x = b` on the leading block.
    pub fn solve_prefix(&self, b: &[f64], c: usize) -> Vec<f64> {
        let mut y = b[..c].to_vec();
        for i in 0..c {
            let fi = self.first[i];
            y[i] -= dot(self.l(i), &y[fi..i]);
        }
        self.backward_u(&y, c)
    }

    /// Solves `A_c^T x = b` on the leading block.
    pub fn solve_transpose_prefix(&self, b: &[f64], c: usize) -> Vec<f64> {
        let mut y = b[..c].to_vec();
        for i in 0..c {
            let fi = self.first[i];
            y[i] = (y[i] - dot(self.u(i), &y[fi..i])) / self.diag[i];
        }
        self.backward_lt(&y, c)
    }
}

/// Dense LU with partial pivoting for small systems; `a` is row-major.
pub fn dense_solve(n: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap();
        if a[p * n + k] == 0.0 {
            return Err(Error::Singular(format!("dense pivot {k} is zero")));
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            b.swap(k, p);
        }
        for i in k + 1..n {
            let f = a[i * n + k] / a[k * n + k];
            if f != 0.0 {
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k * n + j] * b[j]).sum();
        b[k] = (b[k] - s) / a[k * n + k];
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_m_matrix(n: usize, seed: u64) -> Csr {
        // I - M with M substochastic and banded-random sparsity
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            let mut row = Vec::new();
            for _ in 0..4 {
                let j = (i as i64 + r.random_range(-5i64..=5)).clamp(0, n as i64 - 1) as u32;
                row.push((j, r.random::<f64>()));
            }
            let s: f64 = row.iter().map(|x| x.1).sum::<f64>() / 0.9;
            t.push((i as u32, i as u32, 1.0));
            for (j, v) in row {
                t.push((i as u32, j, -v / s));
            }
        }
        Csr::from_triplets(n, n, t)
    }

    fn dense(a: &Csr, c: usize) -> Vec<f64> {
        let mut m = vec![0.0; c * c];
        for i in 0..c {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if (j as usize) < c {
                    m[i * c + j as usize] += v;
                }
            }
        }
        m
    }

    #[test]
    fn skyline_prefixes_match_dense() {
        let a = random_m_matrix(60, 3);
        let lu = SkylineLu::factor(&a).unwrap();
        let b: Vec<f64> = (0..60).map(|i| (i as f64).sin()).collect();
        for c in [1, 7, 31, 60] {
            let x = lu.solve_prefix(&b, c);
            let oracle = dense_solve(c, dense(&a, c), b[..c].to_vec()).unwrap();
            for (p, q) in x.iter().zip(&oracle) {
                assert!((p - q).abs() < 1e-12);
            }
            let xt = lu.solve_transpose_prefix(&b, c);
            let mut at = vec![0.0; c * c];
            let d = dense(&a, c);
            for i in 0..c {
                for j in 0..c {
                    at[j * c + i] = d[i * c + j];
                }
            }
            let oracle = dense_solve(c, at, b[..c].to_vec()).unwrap();
            for (p, q) in xt.iter().zip(&oracle) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn iterative_solvers_agree() {
        let a = random_m_matrix(200, 5);
        let b: Vec<f64> = (0..200).map(|i| 1.0 + (i % 3) as f64).collect();
        let op = |x: &[f64], y: &mut [f64]| a.matvec(x, y);
        let x1 = bicgstab(op, &b, None, 1e-14, 1000).unwrap();
        let x2 = gmres(op, &b, None, 30, 1e-14, 2000).unwrap();
        let x3 = dense_solve(200, dense(&a, 200), b.clone()).unwrap();
        for i in 0..200 {
            assert!((x1[i] - x3[i]).abs() < 1e-10);
            assert!((x2[i] - x3[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_on_symmetric() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i as u32, i as u32, 2.0));
            if i + 1 < n {
                t.push((i as u32, i as u32 + 1, -1.0));
                t.push((i as u32 + 1, i as u32, -1.0));
            }
        }
        let a = Csr::from_triplets(n, n, t);
        assert!(a.is_symmetric(0.0));
        let b = vec![1.0; n];
        let x = cg(|x, y| a.matvec(x, y), &b, None, 1e-14, 500).unwrap();
        // x_i = (i+1)(n-i)/2
        for i in 0..n {
            let e = ((i + 1) * (n - i)) as f64 / 2.0;
            assert!((x[i] - e).abs() < 1e-9);
        }
    }
}
