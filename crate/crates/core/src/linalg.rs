//! Small symmetric eigensolvers.
//!
//! Dense cyclic Jacobi for tiny matrices, and Lanczos with full
//! reorthogonalization for the bottom of the spectrum of sparse operators.
//! Ritz values come from Sturm bisection on the tridiagonal matrix, Ritz
//! vectors from inverse iteration, and every returned pair carries its true
//! residual norm.

use crate::error::{Error, Result};
use crate::scalar::{CompensatedSum, Real};

/// Symmetric linear operator.
pub trait SymOp<S> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[S], y: &mut [S]);
}

#[derive(Clone, Debug)]
pub struct EigPair<S> {
    pub value: S,
    pub vector: Vec<S>,
    /// `‖A v − λ v‖` with `‖v‖ = 1`; bounds the distance to the spectrum.
    pub residual: S,
    pub iterations: usize,
}

fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    let mut acc = CompensatedSum::new();
    for (&x, &y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.value()
}

fn norm<S: Real>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

/// Eigen-decomposition of a dense symmetric matrix (row-major `n × n`).
///
/// Returns eigenvalues ascending and the matching eigenvectors as rows.
pub fn symmetric_eigen<S: Real>(a: &[S], n: usize) -> (Vec<S>, Vec<Vec<S>>) {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![S::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = S::one();
    }
    for _sweep in 0..100 {
        let mut off = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off + m[i * n + j] * m[i * n + j];
            }
        }
        let scale: S = (0..n).map(|i| m[i * n + i] * m[i * n + i]).sum::<S>() + off;
        if off <= S::epsilon() * S::epsilon() * scale || off == S::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == S::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (S::c(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].partial_cmp(&m[j * n + j]).unwrap());
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|k| v[k * n + j]).collect())
        .collect();
    (values, vectors)
}

/// Number of eigenvalues of the tridiagonal `(alpha, beta)` below `x`.
fn sturm_count<S: Real>(alpha: &[S], beta: &[S], x: S) -> usize {
    let tiny = S::min_positive_value().sqrt();
    let mut count = 0;
    let mut q = S::one();
    for i in 0..alpha.len() {
        let b2 = if i == 0 {
            S::zero()
        } else {
            beta[i - 1] * beta[i - 1]
        };
        q = alpha[i] - x - if i == 0 { S::zero() } else { b2 / q };
        if q.abs() < tiny {
            q = -tiny;
        }
        if q < S::zero() {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest (0-based) eigenvalue of a symmetric tridiagonal matrix.
pub fn tridiagonal_eigenvalue<S: Real>(alpha: &[S], beta: &[S], k: usize) -> S {
    let n = alpha.len();
    assert!(k < n);
    let mut lo = S::infinity();
    let mut hi = S::neg_infinity();
    for i in 0..n {
        let r = (if i > 0 { beta[i - 1].abs() } else { S::zero() })
            + (if i + 1 < n { beta[i].abs() } else { S::zero() });
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    for _ in 0..200 {
        let mid = (lo + hi) / S::c(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo + hi) / S::c(2.0)
}

/// Solve `(T − shift) x = b` for tridiagonal `T` with partial pivoting.
fn tridiagonal_solve<S: Real>(alpha: &[S], beta: &[S], shift: S, b: &[S]) -> Vec<S> {
    let n = alpha.len();
    let mut d: Vec<S> = alpha.iter().map(|&a| a - shift).collect();
    let mut du: Vec<S> = beta.to_vec();
    let mut du2 = vec![S::zero(); n.saturating_sub(2)];
    let dl: Vec<S> = beta.to_vec();
    let mut rhs = b.to_vec();
    let tiny = S::min_positive_value().sqrt();
    for i in 0..n.saturating_sub(1) {
        if d[i].abs() >= dl[i].abs() {
            if d[i].abs() < tiny {
                d[i] = tiny;
            }
            let f = dl[i] / d[i];
            d[i + 1] = d[i + 1] - f * du[i];
            rhs[i + 1] = rhs[i + 1] - f * rhs[i];
        } else {
            let f = d[i] / dl[i];
            d[i] = dl[i];
            let old_du = du[i];
            du[i] = d[i + 1];
            d[i + 1] = old_du - f * du[i];
            if i + 1 < n - 1 {
                du2[i] = du[i + 1];
                du[i + 1] = -f * du2[i];
            }
            let old = rhs[i];
            rhs[i] = rhs[i + 1];
            rhs[i + 1] = old - f * rhs[i];
        }
    }
    if d[n - 1].abs() < tiny {
        d[n - 1] = tiny;
    }
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        if i + 1 < n {
            s = s - du[i] * x[i + 1];
        }
        if i + 2 < n {
            s = s - du2[i] * x[i + 2];
        }
        x[i] = s / d[i];
    }
    x
}

fn tridiagonal_eigenvector<S: Real>(alpha: &[S], beta: &[S], theta: S) -> Vec<S> {
    let n = alpha.len();
    let scale = alpha
        .iter()
        .chain(beta)
        .fold(S::zero(), |m, &x| m.max(x.abs()))
        .max(S::one());
    let shift = theta - scale * S::epsilon() * S::c(4.0);
    let mut x: Vec<S> = (0..n)
        .map(|i| S::one() + S::c(0.01) * S::c((i % 7) as f64))
        .collect();
    for _ in 0..4 {
        let y = tridiagonal_solve(alpha, beta, shift, &x);
        let nrm = norm(&y);
        x = y.into_iter().map(|v| v / nrm).collect();
    }
    x
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Stop once `‖r‖ ≤ rel_tol · |θ|` (or at the rounding floor).
    pub rel_tol: f64,
    pub krylov_dim: usize,
    pub max_restarts: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            krylov_dim: 160,
            max_restarts: 60,
        }
    }
}

/// Smallest eigenpair of a symmetric operator.
pub fn lanczos_smallest<S: Real, A: SymOp<S>>(
    op: &A,
    start: Option<&[S]>,
    opts: LanczosOptions,
) -> Result<EigPair<S>> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::EmptySet);
    }
    let mut v: Vec<S> = match start {
        Some(s) => s.to_vec(),
        None => (0..n)
            .map(|i| S::one() + S::c(1e-3) * S::c(((i * 7919) % 101) as f64 / 101.0))
            .collect(),
    };
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x = *x / nv);
    let mut w = vec![S::zero(); n];
    let mut best: Option<EigPair<S>> = None;
    let mut iterations = 0;
    let m_max = opts.krylov_dim.min(n);
    let mut norm_est = S::zero();
    for _restart in 0..opts.max_restarts {
        let mut basis: Vec<Vec<S>> = vec![v.clone()];
        let mut alpha: Vec<S> = Vec::new();
        let mut beta: Vec<S> = Vec::new();
        for j in 0..m_max {
            op.apply(&basis[j], &mut w);
            iterations += 1;
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            // Two passes of classical Gram–Schmidt against the whole basis.
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&w, q);
                    w.iter_mut().zip(q).for_each(|(wi, &qi)| *wi = *wi - c * qi);
                }
            }
            let b = norm(&w);
            norm_est = norm_est.max(a.abs() + b + beta.last().copied().unwrap_or(S::zero()));
            if j + 1 == m_max || b <= S::epsilon() * norm_est.max(S::one()) {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|&x| x / b).collect());
        }
        let k = alpha.len();
        let theta = tridiagonal_eigenvalue(&alpha, &beta[..k - 1], 0);
        let s = tridiagonal_eigenvector(&alpha, &beta[..k - 1], theta);
        let mut y = vec![S::zero(); n];
        for (q, &c) in basis.iter().zip(&s) {
            y.iter_mut().zip(q).for_each(|(yi, &qi)| *yi = *yi + c * qi);
        }
        let ny = norm(&y);
        y.iter_mut().for_each(|x| *x = *x / ny);
        op.apply(&y, &mut w);
        let rq = dot(&w, &y);
        let r: Vec<S> = w.iter().zip(&y).map(|(&a, &b)| a - rq * b).collect();
        let res = norm(&r);
        let pair = EigPair {
            value: rq,
            vector: y.clone(),
            residual: res,
            iterations,
        };
        let better = best.as_ref().map_or(true, |b| res < b.residual);
        if better {
            best = Some(pair);
        }
        let floor = S::c(64.0) * S::epsilon() * norm_est.max(S::one()) * S::c((n as f64).sqrt());
        if res <= (S::c(opts.rel_tol) * rq.abs()).max(floor) {
            return Ok(best.unwrap());
        }
        v = y;
    }
    let b = best.unwrap();
    Err(Error::NoConvergence {
        iterations,
        best: b.value.as_f64(),
        residual: b.residual.as_f64(),
    })
}

/// Dense row-major symmetric matrix as an operator.
pub struct DenseSym<'a, S> {
    pub n: usize,
    pub a: &'a [S],
}

impl<'a, S: Real> SymOp<S> for DenseSym<'a, S> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[S], y: &mut [S]) {
        for i in 0..self.n {
            y[i] = dot(&self.a[i * self.n..(i + 1) * self.n], x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> Vec<f64> {
        // I − P for the simple walk on ℤ killed outside n consecutive sites.
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
            if i + 1 < n {
                a[i * n + i + 1] = -0.5;
                a[(i + 1) * n + i] = -0.5;
            }
        }
        a
    }

    #[test]
    fn jacobi_against_nalgebra() {
        let n = 9;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let x = ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5;
                a[i * n + j] = x;
                a[j * n + i] = x;
            }
        }
        let (vals, vecs) = symmetric_eigen(&a, n);
        let m = nalgebra::DMatrix::from_row_slice(n, n, &a);
        let mut oracle: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        oracle.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in vals.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-12);
        }
        for (lam, v) in vals.iter().zip(&vecs) {
            let mut av = vec![0.0; n];
            DenseSym { n, a: &a }.apply(v, &mut av);
            let r: f64 = av
                .iter()
                .zip(v)
                .map(|(p, q)| (p - lam * q).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(r < 1e-12);
        }
    }

    #[test]
    fn sturm_bisection_on_path() {
        for n in [1usize, 2, 5, 40] {
            let alpha = vec![1.0; n];
            let beta = vec![-0.5; n.saturating_sub(1)];
            for k in 0..n {
                let exact = 1.0 - (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
                assert!((tridiagonal_eigenvalue(&alpha, &beta, k) - exact).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn lanczos_path_gap() {
        for n in [1usize, 3, 50, 400] {
            let a = path_laplacian(n);
            let pair =
                lanczos_smallest(&DenseSym { n, a: &a }, None, LanczosOptions::default()).unwrap();
            let exact = 1.0 - (std::f64::consts::PI / (n + 1) as f64).cos();
            assert!(
                (pair.value - exact).abs() <= 1e-10 * exact,
                "n={n}: {} vs {exact}",
                pair.value
            );
        }
    }

    #[test]
    fn lanczos_reports_non_convergence() {
        let n = 300;
        let a = path_laplacian(n);
        let opts = LanczosOptions {
            rel_tol: 1e-10,
            krylov_dim: 4,
            max_restarts: 2,
        };
        assert!(matches!(
            lanczos_smallest(&DenseSym { n, a: &a }, None, opts),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn tridiagonal_solver_handles_pivoting() {
        let alpha: [f64; 4] = [0.0, 2.0, 3.0, 1.0];
        let beta = [1.0, 0.5, 2.0];
        let b = [1.0, -1.0, 2.0, 0.5];
        let x = tridiagonal_solve(&alpha, &beta, 0.0, &b);
        for i in 0..4 {
            let mut s = alpha[i] * x[i];
            if i > 0 {
                s += beta[i - 1] * x[i - 1];
            }
            if i < 3 {
                s += beta[i] * x[i + 1];
            }
            assert!((s - b[i]).abs() < 1e-12, "row {i}");
        }
    }
}
