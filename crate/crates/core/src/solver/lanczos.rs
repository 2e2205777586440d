//! Lanczos approximation of the top eigenpair of a symmetric operator.
//!
//! Full reorthogonalization keeps the Krylov basis orthonormal to machine
//! precision; the operator dimensions seen here (N up to a few thousand,
//! tens of steps) make that affordable and the results reproducible.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Symmetric linear operator known only through its action.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    /// `y ← A x`. `y` arrives zeroed.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for j in 0..self.ncols() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for (yi, aij) in y.iter_mut().zip(self.column(j).iter()) {
                *yi += aij * xj;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Target bound on the residual ‖Au − θu‖.
    pub tol: f64,
    /// Krylov dimension cap (clamped to the operator dimension).
    pub max_steps: usize,
    /// Seed of the random start vector.
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_steps: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TopEigen {
    /// Unit vector.
    pub vector: Vec<f64>,
    /// Rayleigh quotient uᵀAu.
    pub value: f64,
    /// ‖Au − (uᵀAu)u‖, evaluated with one extra product.
    pub residual: f64,
    /// Whether `residual ≤ tol` (or the Krylov space became invariant).
    pub converged: bool,
    pub matvecs: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn random_unit(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    v
}

/// Approximate top eigenvector of `op`. `start`, when given and nonzero,
/// seeds the Krylov space (warm start); otherwise a seeded Gaussian vector
/// is used.
pub fn approx_top_eigvec<A: SymmetricOperator + ?Sized>(
    op: &A,
    opts: &EigenOptions,
    start: Option<&[f64]>,
) -> TopEigen {
    let n = op.dim();
    assert!(n > 0, "operator of dimension zero");
    let steps = opts.max_steps.clamp(1, n);

    let mut q0 = match start {
        Some(s) if s.len() == n && norm(s) > 0.0 => s.to_vec(),
        _ => random_unit(n, opts.seed),
    };
    let nq = norm(&q0);
    q0.iter_mut().for_each(|x| *x /= nq);

    let mut basis: Vec<Vec<f64>> = vec![q0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut matvecs = 0;
    let mut ritz = vec![1.0];
    let mut w = vec![0.0; n];

    for j in 0..steps {
        w.iter_mut().for_each(|x| *x = 0.0);
        op.apply(&basis[j], &mut w);
        matvecs += 1;
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let b = norm(&w);

        let k = alpha.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let top = eig.eigenvalues.imax();
        ritz = eig.eigenvectors.column(top).iter().copied().collect();
        let estimate = b * ritz[k - 1].abs();

        let scale = alpha.iter().chain(beta.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
        let invariant = b <= 1e-14 * scale.max(f64::MIN_POSITIVE);
        if estimate <= opts.tol || invariant || j + 1 == steps || basis.len() == n {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }

    let mut u = vec![0.0; n];
    for (q, &s) in basis.iter().zip(&ritz) {
        u.iter_mut().zip(q).for_each(|(ui, qi)| *ui += s * qi);
    }
    let nu = norm(&u);
    u.iter_mut().for_each(|x| *x /= nu);

    let mut au = vec![0.0; n];
    op.apply(&u, &mut au);
    matvecs += 1;
    let value = dot(&u, &au);
    let residual = au
        .iter()
        .zip(&u)
        .map(|(a, x)| (a - value * x).powi(2))
        .sum::<f64>()
        .sqrt();
    let exhausted = basis.len() == n;
    TopEigen {
        vector: u,
        value,
        residual,
        converged: residual <= opts.tol || exhausted,
        matvecs,
    }
}
