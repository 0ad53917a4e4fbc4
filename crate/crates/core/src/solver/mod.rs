//! Green's functions, exit measures and exit-time moments on finite domains.
//!
//! Everything is phrased through `A = I - 1_V P 1_V` on the interior states
//! of a kernel's domain. Values at boundary points follow from one more
//! application of the kernel.

pub mod linalg;
pub mod perturbation;
pub mod sojourn;

use std::sync::OnceLock;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::sparse::linalg::solvers::Lu as SparseLu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::lattice::Point;
use linalg::{apply_i_minus, bicgstab, cg, dense_solve, gmres, norm_inf, Csr};

pub use perturbation::{perturbation_truncation, PerturbationReport};
pub use sojourn::{sojourn_decomposition_check, sojourn_field, SojournField};

pub const DENSE_MAX: usize = 1500;
pub const SPARSE_LU_MAX: usize = 200_000;
pub const SPARSE_LU_ROW_NNZ: usize = 16;
pub const ITER_TOL: f64 = 1e-13;
pub const RESIDUAL_TOL: f64 = 1e-10;

enum Backend {
    Dense(PartialPivLu<f64>),
    Sparse(SparseLu<usize, f64>),
    Iterative { symmetric: bool },
}

/// Factorized `(I - 1_V P)` for a kernel on a finite domain.
pub struct GreenOperator {
    kernel: Kernel,
    m: Csr,
    mt: OnceLock<Csr>,
    backend: Backend,
}

impl std::fmt::Debug for GreenOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let b = match self.backend {
            Backend::Dense(_) => "dense",
            Backend::Sparse(_) => "sparse",
            Backend::Iterative { .. } => "iterative",
        };
        write!(f, "GreenOperator {{ n: {}, backend: {b} }}", self.m.n_rows)
    }
}

/// Fails unless every interior state can leave the domain.
fn check_exit_possible(k: &Kernel, m: &Csr) -> Result<()> {
    let n = m.n_rows;
    let mt = m.transpose();
    let mut reach = vec![false; n];
    let mut stack = Vec::new();
    for i in 0..n {
        let (c, v) = k.row(i);
        let leaks = c.iter().zip(v).any(|(&j, &p)| j as usize >= n && p > 0.0)
            || m.row(i).1.iter().sum::<f64>() < 1.0 - 1e-14;
        if leaks {
            reach[i] = true;
            stack.push(i);
        }
    }
    while let Some(i) = stack.pop() {
        let (c, v) = mt.row(i);
        for (&j, &p) in c.iter().zip(v) {
            if p > 0.0 && !reach[j as usize] {
                reach[j as usize] = true;
                stack.push(j as usize);
            }
        }
    }
    match reach.iter().position(|r| !r) {
        Some(i) => Err(Error::Singular(format!("state {i} cannot exit the domain"))),
        None => Ok(()),
    }
}

/// `green(P)`: factorizes `I - 1_V P` on the kernel's domain.
pub fn green(p: &Kernel) -> Result<GreenOperator> {
    let m = p.interior_block();
    check_exit_possible(p, &m)?;
    let n = m.n_rows;
    let backend = if n <= DENSE_MAX {
        let mut a = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            let (c, v) = m.row(i);
            for (&j, &x) in c.iter().zip(v) {
                a[(i, j as usize)] -= x;
            }
        }
        Backend::Dense(a.partial_piv_lu())
    } else if n <= SPARSE_LU_MAX && m.nnz() <= SPARSE_LU_ROW_NNZ * n {
        let mut t = Vec::with_capacity(m.nnz() + n);
        for i in 0..n {
            t.push(Triplet::new(i, i, 1.0));
            let (c, v) = m.row(i);
            for (&j, &x) in c.iter().zip(v) {
                t.push(Triplet::new(i, j as usize, -x));
            }
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &t)
            .map_err(|e| Error::Singular(format!("sparse assembly: {e:?}")))?;
        Backend::Sparse(a.sp_lu().map_err(|e| Error::Singular(format!("sparse lu: {e:?}")))?)
    } else {
        Backend::Iterative { symmetric: m.is_symmetric(1e-15) }
    };
    Ok(GreenOperator { kernel: p.clone(), m, mt: OnceLock::new(), backend })
}

impl GreenOperator {
    pub fn n(&self) -> usize {
        self.m.n_rows
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn interior_block(&self) -> &Csr {
        &self.m
    }

    fn mt(&self) -> &Csr {
        self.mt.get_or_init(|| self.m.transpose())
    }

    fn direct(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let n = self.n();
        let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
        match &self.backend {
            Backend::Dense(lu) if transpose => lu.solve_transpose_in_place(rhs.as_mut()),
            Backend::Dense(lu) => lu.solve_in_place(rhs.as_mut()),
            Backend::Sparse(lu) if transpose => lu.solve_transpose_in_place(rhs.as_mut()),
            Backend::Sparse(lu) => lu.solve_in_place(rhs.as_mut()),
            Backend::Iterative { .. } => unreachable!(),
        }
        Ok(rhs.col_as_slice(0).to_vec())
    }

    fn iterative(&self, b: &[f64], transpose: bool, x0: Option<&[f64]>, symmetric: bool) -> Result<Vec<f64>> {
        let m = if transpose { self.mt() } else { &self.m };
        let op = |x: &[f64], y: &mut [f64]| apply_i_minus(m, x, y);
        let n = self.n();
        let iters = 20 * n.max(100);
        if symmetric {
            cg(op, b, x0, ITER_TOL, iters)
        } else {
            gmres(op, b, x0, 60, ITER_TOL, iters).or_else(|_| bicgstab(op, b, x0, ITER_TOL, iters))
        }
    }

    fn residual(&self, x: &[f64], b: &[f64], transpose: bool) -> (Vec<f64>, f64) {
        let m = if transpose { self.mt() } else { &self.m };
        let mut r = vec![0.0; x.len()];
        apply_i_minus(m, x, &mut r);
        for i in 0..r.len() {
            r[i] = b[i] - r[i];
        }
        let rn = norm_inf(&r);
        (r, rn)
    }

    fn solve_impl(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        if b.len() != self.n() {
            return Err(Error::Domain(format!("rhs length {} for {} states", b.len(), self.n())));
        }
        let mut x = match self.backend {
            Backend::Iterative { symmetric } => self.iterative(b, transpose, None, symmetric)?,
            _ => self.direct(b, transpose)?,
        };
        for _ in 0..3 {
            let (r, rn) = self.residual(&x, b, transpose);
            let scale = norm_inf(b).max(norm_inf(&x)).max(1.0);
            if rn <= RESIDUAL_TOL * scale {
                return Ok(x);
            }
            // iterative refinement
            let dx = match self.backend {
                Backend::Iterative { symmetric } => self.iterative(&r, transpose, None, symmetric)?,
                _ => self.direct(&r, transpose)?,
            };
            for i in 0..x.len() {
                x[i] += dx[i];
            }
        }
        let (_, rn) = self.residual(&x, b, transpose);
        Err(Error::NoConvergence(format!("residual {rn:e} after refinement")))
    }

    /// Solves `(I - 1_V P) x = b` over interior states.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_impl(b, false)
    }

    /// Solves `(I - 1_V P)^T x = b` over interior states.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_impl(b, true)
    }

    /// `G(x_i, y)` for interior `y`.
    pub fn row(&self, i: usize) -> Result<Vec<f64>> {
        let mut e = vec![0.0; self.n()];
        e[i] = 1.0;
        self.solve_transpose(&e)
    }

    /// `G(x, y_j)` for interior `x`.
    pub fn column(&self, j: usize) -> Result<Vec<f64>> {
        let mut e = vec![0.0; self.n()];
        e[j] = 1.0;
        self.solve(&e)
    }

    /// `G(x_i, ·)` over all domain points; boundary entries are the exit law.
    pub fn full_row(&self, i: usize) -> Result<Vec<f64>> {
        let u = self.row(i)?;
        Ok(self.extend_row(&u))
    }

    /// Extends an interior row vector `u` to `(u, u P)` on the boundary.
    pub fn extend_row(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; self.kernel.domain().len()];
        out[..n].copy_from_slice(u);
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            let (c, v) = self.kernel.row(i);
            for (&j, &p) in c.iter().zip(v) {
                if j as usize >= n {
                    out[j as usize] += ui * p;
                }
            }
        }
        out
    }

    /// Dense `G` over interior states (small domains only).
    pub fn dense(&self) -> Result<Vec<Vec<f64>>> {
        if self.n() > 4 * DENSE_MAX {
            return Err(Error::Capacity { needed: self.n(), limit: 4 * DENSE_MAX });
        }
        (0..self.n()).map(|i| self.row(i)).collect()
    }
}

/// Solves `(I - M) x = b` for a square substochastic block `M`.
pub fn solve_i_minus(m: &Csr, b: &[f64]) -> Result<Vec<f64>> {
    let n = m.n_rows;
    let x = if n <= DENSE_MAX {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] += 1.0;
            let (c, v) = m.row(i);
            for (&j, &p) in c.iter().zip(v) {
                a[i * n + j as usize] -= p;
            }
        }
        dense_solve(n, a, b.to_vec())?
    } else {
        let op = |x: &[f64], y: &mut [f64]| apply_i_minus(m, x, y);
        gmres(op, b, None, 60, ITER_TOL, 20 * n)?
    };
    let mut r = vec![0.0; n];
    apply_i_minus(m, &x, &mut r);
    let rn = (0..n).map(|i| (r[i] - b[i]).abs()).fold(0.0, f64::max);
    if rn > RESIDUAL_TOL * norm_inf(&x).max(1.0) {
        return Err(Error::NoConvergence(format!("residual {rn:e}")));
    }
    Ok(x)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExitMeasure {
    pub source: Point,
    /// `(domain index, probability)` over boundary points.
    pub weights: Vec<(usize, f64)>,
}

impl ExitMeasure {
    pub fn total(&self) -> f64 {
        self.weights.iter().map(|w| w.1).sum()
    }

    /// Dense vector over all domain points.
    pub fn dense(&self, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        for &(j, p) in &self.weights {
            v[j] += p;
        }
        v
    }
}

/// `ex_V(x, ·; P)`; equals `δ_x` when `x` is a boundary point.
pub fn exit_measure(g: &GreenOperator, x: &[i32]) -> Result<ExitMeasure> {
    let dom = g.kernel().domain();
    let i = dom
        .index_of(x)
        .ok_or_else(|| Error::Domain(format!("{x:?} is not in the domain closure")))?;
    if i >= g.n() {
        return Ok(ExitMeasure { source: Point::new(x), weights: vec![(i, 1.0)] });
    }
    let row = g.full_row(i)?;
    let weights = (g.n()..row.len()).filter(|&j| row[j] != 0.0).map(|j| (j, row[j])).collect();
    Ok(ExitMeasure { source: Point::new(x), weights })
}

/// `Σ_y G(x, y) holding(y)`; unit holding gives `E_x[τ_V]`.
pub fn mean_exit_time(g: &GreenOperator, x: &[i32], holding: Option<&[f64]>) -> Result<f64> {
    let dom = g.kernel().domain();
    let i = dom
        .index_of(x)
        .ok_or_else(|| Error::Domain(format!("{x:?} is not in the domain closure")))?;
    if i >= g.n() {
        return Ok(0.0);
    }
    let u = g.row(i)?;
    Ok(match holding {
        None => u.iter().sum(),
        Some(h) => u.iter().zip(h).map(|(a, b)| a * b).sum(),
    })
}

/// `E_x[τ_V]` (or the holding-weighted version) for every interior `x`.
pub fn mean_exit_times(g: &GreenOperator, holding: Option<&[f64]>) -> Result<Vec<f64>> {
    let b = match holding {
        None => vec![1.0; g.n()],
        Some(h) => h[..g.n()].to_vec(),
    };
    g.solve(&b)
}

/// `E_x[τ^k]` for `k ∈ {1, 2}`, via `E[τ^2] = Σ_y G(x,y)(2 E_y[τ] - 1)`.
pub fn quenched_moment(g: &GreenOperator, x: &[i32], k: u32) -> Result<f64> {
    match k {
        1 => mean_exit_time(g, x, None),
        2 => {
            let t = mean_exit_times(g, None)?;
            let h: Vec<f64> = t.iter().map(|v| 2.0 * v - 1.0).collect();
            mean_exit_time(g, x, Some(&h))
        }
        _ => Err(Error::Domain(format!("moment order {k} not supported"))),
    }
}
