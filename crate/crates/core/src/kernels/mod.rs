//! Transition kernels on finite domains.
//!
//! A [`Kernel`] stores one sparse row per interior point of its domain.
//! Targets are domain indices, so they always lie in the interior or the
//! outer boundary. Boundary points have no row; they act as absorbing states.

pub mod coarse;
pub mod field;
pub mod hfunc;
pub mod mollifier;
pub mod templates;

use std::io::Write;
use std::sync::Arc;

use crate::environment::LawSource;
use crate::error::{Error, Result};
use crate::lattice::Domain;
use crate::solver::linalg::Csr;

pub use coarse::{coarse_grain, coarse_grain_srw, BaseWalk, CoarseOutput};
pub use field::{HProfile, SmoothingField};
pub use hfunc::HFunction;
pub use mollifier::Mollifier;

pub const ROW_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Kernel {
    domain: Arc<Domain>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel from per-row `(target index, weight)` lists.
    /// Duplicate targets are summed and zero weights dropped.
    pub fn from_rows(domain: Arc<Domain>, rows: Vec<Vec<(u32, f64)>>) -> Result<Kernel> {
        if rows.len() != domain.n_interior() {
            return Err(Error::Domain(format!(
                "{} rows for {} interior points",
                rows.len(),
                domain.n_interior()
            )));
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            let start = cols.len();
            for (j, v) in row {
                if j as usize >= domain.len() {
                    return Err(Error::Domain(format!("target {j} outside domain")));
                }
                if cols.len() > start && *cols.last().unwrap() == j {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Kernel { domain, row_ptr, cols, vals })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn n_states(&self) -> usize {
        self.domain.n_interior()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn row_vec(&self, i: usize) -> Vec<(u32, f64)> {
        let (c, v) = self.row(i);
        c.iter().copied().zip(v.iter().copied()).collect()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&(j as u32)) {
            Ok(p) => v[p],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().sum()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Rejects rows that do not sum to one within [`ROW_TOL`] or carry
    /// negative weight.
    pub fn check_stochastic(&self) -> Result<()> {
        for i in 0..self.n_states() {
            let (_, v) = self.row(i);
            if (self.row_sum(i) - 1.0).abs() > ROW_TOL || v.iter().any(|&p| p < -ROW_TOL) {
                return Err(Error::Substochastic(i));
            }
        }
        Ok(())
    }

    /// Interior-to-interior block `1_V P 1_V` as a square CSR matrix.
    pub fn interior_block(&self) -> Csr {
        let n = self.n_states();
        let mut row_ptr = vec![0usize];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            let (c, v) = self.row(i);
            for (&j, &p) in c.iter().zip(v) {
                if (j as usize) < n {
                    cols.push(j);
                    vals.push(p);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr { n_rows: n, n_cols: n, row_ptr, cols, vals }
    }

    /// Replaces the rows at the given interior indices.
    pub fn with_rows_replaced(&self, repl: &[(usize, Vec<(u32, f64)>)]) -> Result<Kernel> {
        let mut rows: Vec<Vec<(u32, f64)>> = (0..self.n_states()).map(|i| self.row_vec(i)).collect();
        for (i, r) in repl {
            if *i >= rows.len() {
                return Err(Error::Domain(format!("row {i} is not an interior index")));
            }
            rows[*i] = r.clone();
        }
        Kernel::from_rows(self.domain.clone(), rows)
    }

    fn same_domain(&self, other: &Kernel) -> Result<()> {
        if Arc::ptr_eq(&self.domain, &other.domain)
            || (self.domain.len() == other.domain.len()
                && self.domain.n_interior() == other.domain.n_interior()
                && (0..self.domain.len()).all(|i| self.domain.point(i) == other.domain.point(i)))
        {
            Ok(())
        } else {
            Err(Error::Domain("kernels live on different domains".into()))
        }
    }

    /// Signed difference `self - other` on a shared domain.
    pub fn diff(&self, other: &Kernel) -> Result<Kernel> {
        self.same_domain(other)?;
        let rows = (0..self.n_states())
            .map(|i| {
                let mut r = self.row_vec(i);
                r.extend(other.row_vec(i).into_iter().map(|(j, v)| (j, -v)));
                r
            })
            .collect();
        Kernel::from_rows(self.domain.clone(), rows)
    }

    /// `self * other`, with boundary points absorbed (`other(z, .) = δ_z`).
    pub fn compose(&self, other: &Kernel) -> Result<Kernel> {
        self.same_domain(other)?;
        let n = self.n_states();
        let rows = (0..n)
            .map(|i| {
                let mut r = Vec::new();
                let (c, v) = self.row(i);
                for (&j, &p) in c.iter().zip(v) {
                    if (j as usize) < n {
                        let (c2, v2) = other.row(j as usize);
                        r.extend(c2.iter().zip(v2).map(|(&k, &q)| (k, p * q)));
                    } else {
                        r.push((j, p));
                    }
                }
                r
            })
            .collect();
        Kernel::from_rows(self.domain.clone(), rows)
    }

    /// Row vector times kernel over all domain points, boundary absorbed.
    pub fn left_apply(&self, mu: &[f64]) -> Vec<f64> {
        let n = self.n_states();
        let mut out = vec![0.0; self.domain.len()];
        for (j, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            if j < n {
                let (c, v) = self.row(j);
                for (&k, &p) in c.iter().zip(v) {
                    out[k as usize] += m * p;
                }
            } else {
                out[j] += m;
            }
        }
        out
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n_states())
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.interior_block().is_symmetric(tol)
    }

    /// Diagnostic dump: `x_index,y_index,prob` per nonzero.
    pub fn write_triplets(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "x_index,y_index,prob")?;
        for i in 0..self.n_states() {
            let (c, v) = self.row(i);
            for (&j, &p) in c.iter().zip(v) {
                writeln!(w, "{i},{j},{p:e}")?;
            }
        }
        Ok(())
    }
}

/// `p^RW`: weight `1/(2d)` on each nearest neighbour.
pub fn srw_kernel(dom: &Arc<Domain>) -> Kernel {
    let d = dom.d();
    let w = 1.0 / (2 * d) as f64;
    let rows = (0..dom.n_interior())
        .map(|i| (0..2 * d).map(|k| (dom.neighbor(i, k).unwrap() as u32, w)).collect())
        .collect();
    Kernel::from_rows(dom.clone(), rows).expect("srw rows are well formed")
}

/// `p_ω(x, x + e) = ω_x(e)`.
pub fn rwre_kernel(env: &dyn LawSource, dom: &Arc<Domain>) -> Result<Kernel> {
    let d = dom.d();
    if env.d() != d {
        return Err(Error::Domain("environment and domain dimensions differ".into()));
    }
    let mut law = vec![0.0; 2 * d];
    let rows = (0..dom.n_interior())
        .map(|i| {
            env.law_into(dom.point(i), &mut law);
            (0..2 * d).map(|k| (dom.neighbor(i, k).unwrap() as u32, law[k])).collect()
        })
        .collect();
    Kernel::from_rows(dom.clone(), rows)
}

/// Rows at `bad` (domain points) replaced by the matching rows of `cg_srw`.
pub fn goodify(cg_rwre: &Kernel, cg_srw: &Kernel, bad: &[usize]) -> Result<Kernel> {
    cg_rwre.same_domain(cg_srw)?;
    let repl: Vec<(usize, Vec<(u32, f64)>)> = bad
        .iter()
        .filter(|&&i| i < cg_rwre.n_states())
        .map(|&i| (i, cg_srw.row_vec(i)))
        .collect();
    cg_rwre.with_rows_replaced(&repl)
}

/// Rows at bad points replaced by the exit law of the `cg` chain from
/// `V_{t(x)}(x) ∩ V`, with `t(x) = k1 * h(x)`.
pub fn modify_level4(cg: &Kernel, bad: &[usize], k1: f64, field: &SmoothingField) -> Result<Kernel> {
    if k1 < 2.0 {
        return Err(Error::Domain(format!("K1 = {k1} must be at least 2")));
    }
    let dom = cg.domain();
    let n = cg.n_states();
    let mut repl = Vec::new();
    for &b in bad {
        if b >= n {
            continue;
        }
        let x = dom.point(b);
        let t = k1 * field.value(x);
        let sq = crate::lattice::sq_threshold(t).unwrap_or(0);
        // local chain on the interior points of V_t(x) ∩ V
        let local: Vec<usize> = (0..n)
            .filter(|&i| crate::lattice::dist2(dom.point(i), x) <= sq)
            .collect();
        let mut pos = vec![u32::MAX; dom.len()];
        for (k, &i) in local.iter().enumerate() {
            pos[i] = k as u32;
        }
        let mut t_int = Vec::new();
        for (k, &i) in local.iter().enumerate() {
            let (c, v) = cg.row(i);
            for (&j, &p) in c.iter().zip(v) {
                if pos[j as usize] != u32::MAX {
                    t_int.push((k as u32, pos[j as usize], p));
                }
            }
        }
        let m = Csr::from_triplets(local.len(), local.len(), t_int);
        let start = pos[b] as usize;
        let mut e = vec![0.0; local.len()];
        e[start] = 1.0;
        let mt = m.transpose();
        let u = crate::solver::solve_i_minus(&mt, &e)?;
        let mut row: Vec<(u32, f64)> = Vec::new();
        for (k, &i) in local.iter().enumerate() {
            if u[k] == 0.0 {
                continue;
            }
            let (c, v) = cg.row(i);
            for (&j, &p) in c.iter().zip(v) {
                if pos[j as usize] == u32::MAX {
                    row.push((j, u[k] * p));
                }
            }
        }
        repl.push((b, row));
    }
    cg.with_rows_replaced(&repl)
}
