//! Symmetric sparse matrices and the SPD solvers used by the field solve.

use faer::linalg::solvers::SolveCore;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Side};
use serde::{Deserialize, Serialize};

/// Compressed sparse row matrix with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from `(row, col, value)` triplets, summing duplicates in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            // stable sort keeps the summation order of duplicates fixed
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut acc = 0.0;
                while k < row.len() && row[k].0 == c {
                    acc += row[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(acc);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |K - K^T| / max |K|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn relative_residual(k: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let bn = norm(b);
    let mut kx = vec![0.0; k.n];
    k.matvec(x, &mut kx);
    let rn = kx
        .iter()
        .zip(b)
        .map(|(p, q)| (q - p) * (q - p))
        .sum::<f64>()
        .sqrt();
    if bn == 0.0 {
        rn
    } else {
        rn / bn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Sparse Cholesky with conjugate-gradient fallback.
    #[default]
    Direct,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    Jacobi,
    /// Zero fill-in incomplete Cholesky; falls back to Jacobi on breakdown.
    #[default]
    IncompleteCholesky,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    #[serde(default)]
    pub method: SolverMethod,
    #[serde(default)]
    pub preconditioner: Preconditioner,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    20_000
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::Direct,
            preconditioner: Preconditioner::IncompleteCholesky,
            rel_tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub method: String,
    pub iterations: usize,
    pub relative_residual: f64,
    pub dofs: usize,
    pub nnz: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveFailure {
    pub relative_residual: f64,
    pub iterations: usize,
    pub detail: String,
}

/// Solve `K x = b` for symmetric positive-definite `K`.
pub fn solve_spd(k: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats), SolveFailure> {
    let stats = |method: &str, iterations, res| SolveStats {
        method: method.to_string(),
        iterations,
        relative_residual: res,
        dofs: k.n,
        nnz: k.nnz(),
    };
    if b.iter().all(|&v| v == 0.0) {
        return Ok((vec![0.0; k.n], stats("trivial", 0, 0.0)));
    }
    let mut start = None;
    if opts.method == SolverMethod::Direct {
        // solves are parallelised across wrap angles, not inside one factorisation
        faer::set_global_parallelism(faer::Par::Seq);
        match cholesky_solve(k, b) {
            Ok(x) => {
                let res = relative_residual(k, &x, b);
                if res <= opts.rel_tol {
                    return Ok((x, stats("cholesky", 0, res)));
                }
                log::debug!("cholesky residual {res:.3e} above tolerance, refining with CG");
                start = Some(x);
            }
            Err(e) => log::debug!("cholesky failed ({e}), falling back to CG"),
        }
    }
    let x0 = start.unwrap_or_else(|| vec![0.0; k.n]);
    let pre = match opts.preconditioner {
        Preconditioner::IncompleteCholesky => match Ic0::new(k) {
            Some(ic) => Precond::Ic0(ic),
            None => Precond::Jacobi(jacobi(k)),
        },
        Preconditioner::Jacobi => Precond::Jacobi(jacobi(k)),
    };
    let (x, iters, res) = pcg(k, b, x0, &pre, opts.rel_tol, opts.max_iter);
    if res <= opts.rel_tol {
        Ok((x, stats(pre.name(), iters, res)))
    } else {
        Err(SolveFailure {
            relative_residual: res,
            iterations: iters,
            detail: format!("{} did not reach {:.1e} within {} iterations", pre.name(), opts.rel_tol, opts.max_iter),
        })
    }
}

fn cholesky_solve(k: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>, String> {
    let mut trip = Vec::with_capacity(k.nnz());
    for i in 0..k.n {
        for (j, v) in k.row(i) {
            if j <= i {
                trip.push(Triplet::new(i, j, v));
            }
        }
    }
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(k.n, k.n, &trip).map_err(|e| format!("{e:?}"))?;
    let llt = mat.sp_cholesky(Side::Lower).map_err(|e| format!("{e:?}"))?;
    let mut rhs = Mat::<f64>::from_fn(k.n, 1, |i, _| b[i]);
    llt.solve_in_place_with_conj(Conj::No, rhs.as_mut());
    let x: Vec<f64> = (0..k.n).map(|i| rhs[(i, 0)]).collect();
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err("non-finite solution".into())
    }
}

fn jacobi(k: &CsrMatrix) -> Vec<f64> {
    k.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect()
}

/// Lower factor of `K ~ L L^T` on the sparsity pattern of `K`.
struct Ic0 {
    // row-wise strictly lower entries plus the diagonal
    l: CsrMatrix,
    diag: Vec<f64>,
}

impl Ic0 {
    fn new(k: &CsrMatrix) -> Option<Self> {
        let n = k.n;
        let mut trip = Vec::new();
        for i in 0..n {
            for (j, v) in k.row(i) {
                if j <= i {
                    trip.push((i, j, v));
                }
            }
        }
        let mut l = CsrMatrix::from_triplets(n, &trip);
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let (s, e) = (l.row_ptr[i], l.row_ptr[i + 1]);
            for p in s..e {
                let j = l.col_idx[p];
                // sparse dot of rows i and j over columns < j
                let mut acc = l.values[p];
                let (mut a, mut b) = (s, l.row_ptr[j]);
                let b_end = l.row_ptr[j + 1];
                while a < p && b < b_end {
                    let (ca, cb) = (l.col_idx[a], l.col_idx[b]);
                    if cb >= j {
                        break;
                    }
                    match ca.cmp(&cb) {
                        std::cmp::Ordering::Less => a += 1,
                        std::cmp::Ordering::Greater => b += 1,
                        std::cmp::Ordering::Equal => {
                            acc -= l.values[a] * l.values[b];
                            a += 1;
                            b += 1;
                        }
                    }
                }
                if j == i {
                    if !(acc > 0.0) {
                        return None;
                    }
                    let d = acc.sqrt();
                    l.values[p] = d;
                    diag[i] = d;
                } else {
                    l.values[p] = acc / diag[j];
                }
            }
        }
        Some(Self { l, diag })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.l.n;
        // forward: L y = r
        for i in 0..n {
            let mut acc = r[i];
            for (j, v) in self.l.row(i) {
                if j < i {
                    acc -= v * z[j];
                }
            }
            z[i] = acc / self.diag[i];
        }
        // backward: L^T z = y
        for i in (0..n).rev() {
            z[i] /= self.diag[i];
            let zi = z[i];
            for (j, v) in self.l.row(i) {
                if j < i {
                    z[j] -= v * zi;
                }
            }
        }
    }
}

enum Precond {
    Jacobi(Vec<f64>),
    Ic0(Ic0),
}

impl Precond {
    fn name(&self) -> &'static str {
        match self {
            Precond::Jacobi(_) => "cg-jacobi",
            Precond::Ic0(_) => "cg-ic0",
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Jacobi(d) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(d) {
                    *zi = ri * di;
                }
            }
            Precond::Ic0(ic) => ic.apply(r, z),
        }
    }
}

fn pcg(k: &CsrMatrix, b: &[f64], mut x: Vec<f64>, pre: &Precond, tol: f64, max_iter: usize) -> (Vec<f64>, usize, f64) {
    let n = k.n;
    let bn = norm(b);
    let mut r = vec![0.0; n];
    k.matvec(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut kp = vec![0.0; n];
    let mut res = norm(&r) / bn;
    let mut it = 0;
    while res > tol && it < max_iter {
        k.matvec(&p, &mut kp);
        let alpha = rz / dot(&p, &kp);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        it += 1;
        // recompute the true residual now and then to avoid drift
        if it % 50 == 0 {
            k.matvec(&x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = bi - *ri;
            }
        }
        res = norm(&r) / bn;
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = relative_residual(k, &x, b);
    (x, it, res)
}
