//! Sparse, banded, and spectral linear algebra shared by the mesh operators.
//!
//! Everything here is deterministic: assembly and factorization run in a
//! fixed order, and the iterative eigensolver draws its start block from a
//! seeded generator.

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

/// Problems below this size use a dense symmetric eigensolve; larger ones
/// use shift-invert subspace iteration on a banded factorization.
pub const DENSE_EIG_THRESHOLD: usize = 900;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite at pivot {0}")]
    NotPositiveDefinite(usize),
    #[error("eigensolver failed to converge: worst relative residual {0:.3e}")]
    ConvergenceFailure(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Compressed sparse row matrix. Rows are sorted by column index and
/// duplicate entries are merged at construction.
#[derive(Debug, Clone)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            assert!(i < n && j < n, "triplet index out of range");
            if let Some(last) = merged.last_mut() {
                if last.0 == i && last.1 == j {
                    last.2 += v;
                    continue;
                }
            }
            merged.push((i, j, v));
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &merged {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = merged.iter().map(|e| e.1).collect();
        let vals = merged.iter().map(|e| e.2).collect();
        Csr { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c];
            }
            y[i] = s;
        }
    }

    /// x' A y.
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut r = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                r += v * y[*c];
            }
            s += x[i] * r;
        }
        s
    }

    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                m[(i, *c)] = *v;
            }
        }
        m
    }

    /// Maximum symmetry defect |A - A'|.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(*c, i)).abs());
            }
        }
        worst
    }
}

/// Reverse Cuthill–McKee ordering of an undirected adjacency structure.
/// Returns `perm` with `perm[old] = new`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut queue: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    loop {
        // lowest-degree unvisited vertex seeds the next component
        let seed = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (adj[v].len(), v));
        let Some(seed) = seed else { break };
        visited[seed] = true;
        queue.push_back(seed);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().cloned().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (adj[u].len(), u));
            for u in next {
                if !visited[u] {
                    visited[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    order.reverse();
    let mut perm = vec![0usize; n];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    perm
}

/// Lower-banded Cholesky factor of a symmetric positive definite matrix.
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // row-major band: entry (i, j) with i-bw <= j <= i lives at i*(bw+1) + (j + bw - i)
    l: Vec<f64>,
}

impl BandedCholesky {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Factor a band assembled in the same storage layout.
    pub fn factor(n: usize, bw: usize, mut band: Vec<f64>) -> Result<Self, LinalgError> {
        assert_eq!(band.len(), n * (bw + 1));
        let w = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j.saturating_sub(bw).max(j0);
                let mut s = band[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(LinalgError::NotPositiveDefinite(i));
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l: band })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let bw = self.bw;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            let mut s = b[i];
            for j in j0..i {
                s -= self.l[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.l[self.idx(i, i)];
        }
        for i in (0..self.n).rev() {
            let j1 = (i + bw).min(self.n - 1);
            let mut s = b[i];
            for j in (i + 1)..=j1 {
                s -= self.l[self.idx(j, i)] * b[j];
            }
            b[i] = s / self.l[self.idx(i, i)];
        }
    }
}

/// RCM-permuted banded Cholesky solver for `A - sigma * diag(m)` with `A` in CSR form.
pub struct ShiftedSolver {
    perm: Vec<usize>,
    chol: BandedCholesky,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl ShiftedSolver {
    pub fn new(a: &Csr, m_diag: Option<&[f64]>, sigma: f64) -> Result<Self, LinalgError> {
        let n = a.n();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for &j in a.row(i).0 {
                if j != i {
                    adj[i].push(j);
                }
            }
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut bw = 0usize;
        for i in 0..n {
            for &j in a.row(i).0 {
                bw = bw.max(perm[i].abs_diff(perm[j]));
            }
        }
        let w = bw + 1;
        let mut band = vec![0.0f64; n * w];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let (pi, pj) = (perm[i], perm[*c]);
                if pj <= pi {
                    band[pi * w + (pj + bw - pi)] = *v;
                }
            }
            let shift = sigma * m_diag.map_or(1.0, |m| m[i]);
            band[perm[i] * w + bw] -= shift;
        }
        let chol = BandedCholesky::factor(n, bw, band)?;
        Ok(ShiftedSolver {
            perm,
            chol,
            scratch: std::cell::RefCell::new(vec![0.0; n]),
        })
    }

    pub fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        let n = rhs.len();
        let mut tmp = self.scratch.borrow_mut();
        for i in 0..n {
            tmp[self.perm[i]] = rhs[i];
        }
        self.chol.solve_in_place(&mut tmp);
        for i in 0..n {
            out[i] = tmp[self.perm[i]];
        }
    }
}

/// Eigenpairs of the symmetric pencil `A v = lambda diag(m) v`, ascending.
#[derive(Debug, Clone)]
pub struct PencilEig {
    pub values: Vec<f64>,
    /// M-orthonormal eigenvectors, one inner Vec per eigenpair.
    pub vectors: Vec<Vec<f64>>,
    /// Relative residuals |A v - lambda M v| / |A|_inf.
    pub residuals: Vec<f64>,
}

fn m_dot(m: &[f64], x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).zip(m).map(|((a, b), w)| a * b * w).sum()
}

fn residual(a: &Csr, m: &[f64], lambda: f64, v: &[f64], scale: f64) -> f64 {
    let n = a.n();
    let mut r = vec![0.0; n];
    a.matvec(v, &mut r);
    let mut s = 0.0;
    for i in 0..n {
        let d = r[i] - lambda * m[i] * v[i];
        s += d * d;
    }
    s.sqrt() / scale
}

/// Gershgorin lower bound for the pencil (A, diag(m)).
fn gershgorin_lower(a: &Csr, m: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    for i in 0..a.n() {
        let (cols, vals) = a.row(i);
        let mut diag = 0.0;
        let mut off = 0.0;
        for (c, v) in cols.iter().zip(vals) {
            if *c == i {
                diag = *v;
            } else {
                off += v.abs();
            }
        }
        lo = lo.min((diag - off) / m[i]);
    }
    lo
}

/// Lowest `count` eigenpairs of `A v = lambda diag(m) v`.
///
/// `orthogonal_to` restricts the problem to the subspace orthogonal (in the
/// Euclidean sense) to every listed constraint vector; the volume-constrained
/// stability check runs this way.
pub fn lowest_eigenpairs(
    a: &Csr,
    m: &[f64],
    count: usize,
    orthogonal_to: &[Vec<f64>],
    seed: u64,
) -> Result<PencilEig, LinalgError> {
    let n = a.n();
    if count == 0 || count > n {
        return Err(LinalgError::DimensionMismatch(format!(
            "requested {count} eigenpairs of a {n}-dim pencil"
        )));
    }
    for c in orthogonal_to {
        if c.len() != n {
            return Err(LinalgError::DimensionMismatch(
                "constraint vector length".into(),
            ));
        }
    }
    if n <= DENSE_EIG_THRESHOLD {
        dense_lowest(a, m, count, orthogonal_to)
    } else {
        subspace_lowest(a, m, count, orthogonal_to, seed)
    }
}

fn dense_lowest(
    a: &Csr,
    m: &[f64],
    count: usize,
    orthogonal_to: &[Vec<f64>],
) -> Result<PencilEig, LinalgError> {
    let n = a.n();
    let scale = a.inf_norm().max(f64::MIN_POSITIVE);
    let sqrt_m: Vec<f64> = m.iter().map(|v| v.sqrt()).collect();
    let mut b = a.to_dense();
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] /= sqrt_m[i] * sqrt_m[j];
        }
    }
    b = (&b + b.transpose()) * 0.5;
    // whitened constraint directions, mutually orthonormalized; the
    // spurious modes are pushed above the window
    let mut chats: Vec<Vec<f64>> = Vec::new();
    for c in orthogonal_to {
        let mut chat: Vec<f64> = (0..n).map(|i| c[i] / sqrt_m[i]).collect();
        for prev in &chats {
            let d: f64 = chat.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (x, p) in chat.iter_mut().zip(prev) {
                *x -= d * p;
            }
        }
        let norm = chat.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for v in &mut chat {
                *v /= norm;
            }
            chats.push(chat);
        }
    }
    for chat in &chats {
        let mu = 10.0 * b.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) + 1.0;
        let bc = &b * DMatrix::from_column_slice(n, 1, chat);
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] +=
                    mu * chat[i] * chat[j] - bc[(i, 0)] * chat[j] - chat[i] * bc[(j, 0)];
            }
        }
    }
    let eig = b.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&p, &q| eig.eigenvalues[p].partial_cmp(&eig.eigenvalues[q]).unwrap());
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for &k in idx.iter().take(count) {
        let lambda = eig.eigenvalues[k];
        let mut v: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, k)] / sqrt_m[i]).collect();
        let nm = m_dot(m, &v, &v).sqrt();
        for x in &mut v {
            *x /= nm;
        }
        let r = if orthogonal_to.is_empty() {
            residual(a, m, lambda, &v, scale)
        } else {
            constrained_residual(a, m, lambda, &v, orthogonal_to, scale)
        };
        values.push(lambda);
        vectors.push(v);
        residuals.push(r);
    }
    Ok(PencilEig { values, vectors, residuals })
}

/// Residual of the constrained problem: project A v - lambda M v off the
/// constraint normals before measuring.
fn constrained_residual(
    a: &Csr,
    m: &[f64],
    lambda: f64,
    v: &[f64],
    constraints: &[Vec<f64>],
    scale: f64,
) -> f64 {
    let n = a.n();
    let mut r = vec![0.0; n];
    a.matvec(v, &mut r);
    for i in 0..n {
        r[i] -= lambda * m[i] * v[i];
    }
    for c in constraints {
        let cc: f64 = c.iter().map(|x| x * x).sum();
        if cc > 0.0 {
            let rc: f64 = r.iter().zip(c).map(|(a, b)| a * b).sum();
            for i in 0..n {
                r[i] -= rc / cc * c[i];
            }
        }
    }
    r.iter().map(|x| x * x).sum::<f64>().sqrt() / scale
}

fn subspace_lowest(
    a: &Csr,
    m: &[f64],
    count: usize,
    orthogonal_to: &[Vec<f64>],
    seed: u64,
) -> Result<PencilEig, LinalgError> {
    let n = a.n();
    let scale = a.inf_norm().max(f64::MIN_POSITIVE);
    let p = (count + 6).min(n);
    let tol = 1e-10;
    let max_iter = 400;

    // deflation directions in the M inner product, M-orthonormalized
    let mut deflate: Vec<Vec<f64>> = Vec::new();
    for c in orthogonal_to {
        let mut u: Vec<f64> = (0..n).map(|i| c[i] / m[i]).collect();
        for prev in &deflate {
            let d = m_dot(m, &u, prev);
            for (x, p) in u.iter_mut().zip(prev) {
                *x -= d * p;
            }
        }
        let nm = m_dot(m, &u, &u).sqrt();
        if nm > 1e-12 {
            for x in &mut u {
                *x /= nm;
            }
            deflate.push(u);
        }
    }

    let glo = gershgorin_lower(a, m);
    let sigma0 = glo - 1e-3 * glo.abs() - 1e-9 * scale;
    let mut solver = ShiftedSolver::new(a, Some(m), sigma0)?;

    let mut rng = StdRng::seed_from_u64(seed);
    let mut x: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let mgs = |x: &mut Vec<Vec<f64>>, deflate: &Vec<Vec<f64>>| {
        for k in 0..x.len() {
            for u in deflate {
                for _ in 0..2 {
                    let d = m_dot(m, &x[k], u);
                    for i in 0..n {
                        x[k][i] -= d * u[i];
                    }
                }
            }
            for j in 0..k {
                let (head, tail) = x.split_at_mut(k);
                let d = m_dot(m, &tail[0], &head[j]);
                for i in 0..n {
                    tail[0][i] -= d * head[j][i];
                }
            }
            let nm = m_dot(m, &x[k], &x[k]).sqrt();
            if nm > 0.0 {
                for v in &mut x[k] {
                    *v /= nm;
                }
            }
        }
    };

    let mut reshifted = false;
    let mut last_res = f64::INFINITY;
    let mut rhs = vec![0.0; n];
    for iter in 0..max_iter {
        // Y = (A - sigma M)^{-1} M X
        let mut y: Vec<Vec<f64>> = Vec::with_capacity(p);
        for xk in &x {
            for i in 0..n {
                rhs[i] = m[i] * xk[i];
            }
            let mut out = vec![0.0; n];
            solver.solve(&rhs, &mut out);
            y.push(out);
        }
        mgs(&mut y, &deflate);
        mgs(&mut y, &deflate);
        // Rayleigh-Ritz on the M-orthonormal block
        let mut g = DMatrix::<f64>::zeros(p, p);
        let mut ay: Vec<Vec<f64>> = Vec::with_capacity(p);
        for yk in &y {
            let mut out = vec![0.0; n];
            a.matvec(yk, &mut out);
            ay.push(out);
        }
        for r in 0..p {
            for c in r..p {
                let v: f64 = y[r].iter().zip(&ay[c]).map(|(a, b)| a * b).sum();
                g[(r, c)] = v;
                g[(c, r)] = v;
            }
        }
        let eig = g.symmetric_eigen();
        let mut idx: Vec<usize> = (0..p).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        let mut xn: Vec<Vec<f64>> = Vec::with_capacity(p);
        for &k in &idx {
            let mut v = vec![0.0; n];
            for (j, yj) in y.iter().enumerate() {
                let w = eig.eigenvectors[(j, k)];
                for i in 0..n {
                    v[i] += w * yj[i];
                }
            }
            xn.push(v);
        }
        x = xn;
        let lambdas: Vec<f64> = idx.iter().map(|&k| eig.eigenvalues[k]).collect();

        let mut worst = 0.0f64;
        for k in 0..count {
            let r = if deflate.is_empty() {
                residual(a, m, lambdas[k], &x[k], scale)
            } else {
                constrained_residual(a, m, lambdas[k], &x[k], orthogonal_to, scale)
            };
            worst = worst.max(r);
        }
        last_res = worst;
        if worst <= tol {
            let mut values = Vec::with_capacity(count);
            let mut vectors = Vec::with_capacity(count);
            let mut residuals = Vec::with_capacity(count);
            for k in 0..count {
                let r = if deflate.is_empty() {
                    residual(a, m, lambdas[k], &x[k], scale)
                } else {
                    constrained_residual(a, m, lambdas[k], &x[k], orthogonal_to, scale)
                };
                values.push(lambdas[k]);
                vectors.push(x[k].clone());
                residuals.push(r);
            }
            return Ok(PencilEig { values, vectors, residuals });
        }
        // one re-shift close below the current window speeds convergence a lot
        if !reshifted && iter >= 4 {
            let spread = (lambdas[p - 1] - lambdas[0]).max(1e-8 * scale);
            let mut candidate = lambdas[0] - 0.1 * spread;
            for _ in 0..6 {
                match ShiftedSolver::new(a, Some(m), candidate) {
                    Ok(s) => {
                        solver = s;
                        break;
                    }
                    Err(_) => candidate -= spread,
                }
            }
            reshifted = true;
        }
    }
    Err(LinalgError::ConvergenceFailure(last_res))
}
