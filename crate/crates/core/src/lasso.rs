//! L1-regularized least squares, `min ½‖x − Dα‖² + λ‖α‖₁`.
//!
//! Cyclic coordinate descent on the Gram matrix `DᵀD`, with an active-set
//! inner loop. After every full pass a feature-sign search starts from the
//! current iterate: it solves the restricted stationarity system for the
//! current signs, backs off to sign changes when they lower the objective,
//! and admits violators one at a time. It usually finishes the solve after
//! a pass or two, and handles nearly dependent supports where plain
//! coordinate descent crawls.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 1000;

const ACTIVE_PASSES: usize = 25;
const ZERO_COLUMN: f64 = 1e-14;

/// Dictionary-learning λ used when none is given: `1.2 / √m`.
pub fn default_lambda(dim: usize) -> f64 {
    1.2 / (dim as f64).sqrt()
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// A Lasso solver bound to one dictionary. The Gram matrix is computed once
/// and shared across signals.
#[derive(Debug, Clone)]
pub struct LassoSolver<'a> {
    dict: &'a DMatrix<f64>,
    gram: DMatrix<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'a> LassoSolver<'a> {
    pub fn new(dict: &'a DMatrix<f64>) -> Self {
        Self {
            dict,
            gram: dict.tr_mul(dict),
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_tolerance(mut self, tol: f64, max_iter: usize) -> Self {
        self.tol = tol;
        self.max_iter = max_iter;
        self
    }

    fn check(&self, signal_len: usize, lambda: f64) -> Result<()> {
        if signal_len != self.dict.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "signal has {} entries, dictionary has {} rows",
                signal_len,
                self.dict.nrows()
            )));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be ≥ 0, got {lambda}")));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter("tol must be > 0 and max_iter ≥ 1".into()));
        }
        Ok(())
    }

    pub fn solve(&self, signal: &[f64], lambda: f64) -> Result<DVector<f64>> {
        let x = DMatrix::from_column_slice(signal.len(), 1, signal);
        Ok(self.solve_batch(&x, lambda)?.column(0).clone_owned())
    }

    /// Solves given `c = Dᵀx` directly.
    pub fn solve_with_correlation(&self, corr: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
        let n = self.gram.nrows();
        let g = &self.gram;
        let mut alpha = DVector::zeros(n);
        if corr.amax() <= lambda {
            return Ok(alpha);
        }
        if let Some(a) = lars(g, corr, lambda) {
            if kkt_residual_gram(g, corr, &a, lambda) <= self.tol {
                return Ok(a);
            }
            alpha = a;
        }
        // q = G α, kept in sync with alpha.
        let mut q = g * &alpha;
        let mut active: Vec<usize> = Vec::with_capacity(n);
        let mut residual = f64::INFINITY;

        let update = |j: usize, alpha: &mut DVector<f64>, q: &mut DVector<f64>| -> f64 {
            let gjj = g[(j, j)];
            if gjj <= ZERO_COLUMN {
                return 0.0;
            }
            let r = corr[j] - q[j] + gjj * alpha[j];
            let new = soft_threshold(r, lambda) / gjj;
            let delta = new - alpha[j];
            if delta != 0.0 {
                q.axpy(delta, &g.column(j), 1.0);
                alpha[j] = new;
            }
            delta.abs()
        };

        for _ in 0..self.max_iter {
            for j in 0..n {
                update(j, &mut alpha, &mut q);
            }
            active.clear();
            active.extend((0..n).filter(|&j| alpha[j] != 0.0));
            for _ in 0..ACTIVE_PASSES {
                let mut biggest = 0.0f64;
                for &j in &active {
                    biggest = biggest.max(update(j, &mut alpha, &mut q));
                }
                if biggest <= self.tol * 1e-3 {
                    break;
                }
            }

            residual = kkt_residual_gram(g, corr, &alpha, lambda);
            if residual <= self.tol {
                return Ok(alpha);
            }
            if let Some(refined) = feature_sign(g, corr, &alpha, lambda, self.tol, 4 * n + 10) {
                return Ok(refined);
            }
        }
        Err(Error::LassoNoConvergence {
            iterations: self.max_iter,
            residual,
        })
    }

    /// Columnwise solve of an `m × η` signal matrix.
    pub fn solve_batch(&self, signals: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
        self.check(signals.nrows(), lambda)?;
        let corr = self.dict.transpose() * signals;
        let mut codes = DMatrix::zeros(self.dict.ncols(), signals.ncols());
        for (k, c) in corr.column_iter().enumerate() {
            let a = self.solve_with_correlation(&c.clone_owned(), lambda)?;
            codes.set_column(k, &a);
        }
        Ok(codes)
    }
}

/// Cholesky factor of the Gram submatrix of an ordered active set, with
/// O(k²) append and delete.
struct ActiveFactor {
    n: usize,
    /// Row-major lower triangle, row stride `n`.
    l: Vec<f64>,
    active: Vec<usize>,
}

impl ActiveFactor {
    fn new(n: usize) -> Self {
        Self {
            n,
            l: vec![0.0; n * n],
            active: Vec::with_capacity(n),
        }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.l[r * self.n + c]
    }

    fn forward(&self, rhs: &mut [f64]) {
        for r in 0..rhs.len() {
            let mut v = rhs[r];
            for c in 0..r {
                v -= self.at(r, c) * rhs[c];
            }
            rhs[r] = v / self.at(r, r);
        }
    }

    fn backward(&self, rhs: &mut [f64]) {
        for r in (0..rhs.len()).rev() {
            let mut v = rhs[r];
            for c in r + 1..rhs.len() {
                v -= self.at(c, r) * rhs[c];
            }
            rhs[r] = v / self.at(r, r);
        }
    }

    /// Appends `j`; refuses a column numerically in the span of the set.
    fn push(&mut self, g: &DMatrix<f64>, j: usize) -> bool {
        let k = self.active.len();
        let mut row: Vec<f64> = self.active.iter().map(|&i| g[(i, j)]).collect();
        self.forward(&mut row);
        let d2 = g[(j, j)] - row.iter().map(|v| v * v).sum::<f64>();
        if d2 <= 1e-10 * g[(j, j)] {
            return false;
        }
        let base = k * self.n;
        self.l[base..base + k].copy_from_slice(&row);
        self.l[base + k] = d2.sqrt();
        self.active.push(j);
        true
    }

    fn remove(&mut self, p: usize) {
        let k = self.active.len();
        let n = self.n;
        for r in p..k - 1 {
            let (dst, src) = (r * n, (r + 1) * n);
            self.l.copy_within(src..src + r + 2, dst);
        }
        // rows p.. now reach one column past the diagonal; rotate it away
        for i in p..k - 1 {
            let (a, b) = (self.at(i, i), self.at(i, i + 1));
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for r in i..k - 1 {
                let (x, y) = (self.at(r, i), self.at(r, i + 1));
                self.l[r * n + i] = c * x + s * y;
                self.l[r * n + i + 1] = -s * x + c * y;
            }
        }
        for r in 0..k - 1 {
            self.l[r * n + k - 1] = 0.0;
        }
        self.active.remove(p);
    }

    fn solve(&self, rhs: &mut [f64]) {
        self.forward(rhs);
        self.backward(rhs);
    }
}

/// LARS with the Lasso modification, run from `λ = max|c|` down to `lambda`.
/// Returns `None` if it stalls on a degenerate path.
fn lars(g: &DMatrix<f64>, corr: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    const EPS: f64 = 1e-12;
    let n = corr.len();
    let mut beta = DVector::zeros(n);
    let mut chat = corr.clone();
    let mut f = ActiveFactor::new(n);
    let mut signs: Vec<f64> = Vec::with_capacity(n);
    let mut blocked = vec![false; n];
    for j in 0..n {
        blocked[j] = g[(j, j)] <= ZERO_COLUMN;
    }
    let first = (0..n).filter(|&j| !blocked[j]).max_by(|&a, &b| chat[a].abs().total_cmp(&chat[b].abs()))?;
    let mut big_c = chat[first].abs();
    if big_c <= lambda {
        return Some(beta);
    }
    f.push(g, first);
    signs.push(chat[first].signum());
    let mut in_set = vec![false; n];
    in_set[first] = true;
    let mut w = vec![0.0; n];
    let mut a = DVector::zeros(n);

    for _ in 0..8 * n + 8 {
        let k = f.active.len();
        w[..k].copy_from_slice(&signs);
        f.solve(&mut w[..k]);
        a.fill(0.0);
        for (idx, &j) in f.active.iter().enumerate() {
            a.axpy(w[idx], &g.column(j), 1.0);
        }
        let mut step = big_c - lambda;
        let mut event: Option<(bool, usize)> = None;
        for j in 0..n {
            if in_set[j] || blocked[j] {
                continue;
            }
            for (num, den) in [(big_c - chat[j], 1.0 - a[j]), (big_c + chat[j], 1.0 + a[j])] {
                if den > EPS {
                    let t = num / den;
                    if t > EPS && t < step {
                        step = t;
                        event = Some((true, j));
                    }
                }
            }
        }
        for idx in 0..k {
            let j = f.active[idx];
            if w[idx] != 0.0 {
                let t = -beta[j] / w[idx];
                if t > EPS && t < step {
                    step = t;
                    event = Some((false, idx));
                }
            }
        }
        for (idx, &j) in f.active.iter().enumerate() {
            beta[j] += step * w[idx];
        }
        chat.axpy(-step, &a, 1.0);
        big_c -= step;
        match event {
            None => return Some(beta),
            Some((true, j)) => {
                if f.push(g, j) {
                    signs.push(chat[j].signum());
                    in_set[j] = true;
                } else {
                    blocked[j] = true;
                }
            }
            Some((false, idx)) => {
                let j = f.active[idx];
                beta[j] = 0.0;
                in_set[j] = false;
                f.remove(idx);
                signs.remove(idx);
            }
        }
    }
    None
}

/// `½ aᵀGa − cᵀa + λ‖a‖₁`, the Lasso objective up to a constant.
fn gram_objective(g: &DMatrix<f64>, corr: &DVector<f64>, a: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * a.dot(&(g * a)) - corr.dot(a) + lambda * a.lp_norm(1)
}

/// Feature-sign search started from `start`: solve on the signed active
/// set, line-search back to the first improving sign change, admit the worst
/// violator once the active set is optimal.
fn feature_sign(
    g: &DMatrix<f64>,
    corr: &DVector<f64>,
    start: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_steps: usize,
) -> Option<DVector<f64>> {
    let n = start.len();
    let mut x = start.clone();
    let mut theta: Vec<f64> = x.iter().map(|v| if *v == 0.0 { 0.0 } else { v.signum() }).collect();
    for _step in 0..max_steps {
        let grad = corr - g * &x;
        if kkt_residual_gram(g, corr, &x, lambda) <= tol {
            return Some(x);
        }
        let active_ok = (0..n)
            .filter(|&j| theta[j] != 0.0)
            .all(|j| (grad[j] - lambda * theta[j]).abs() <= tol);
        if active_ok {
            let (j, v) = (0..n)
                .filter(|&j| theta[j] == 0.0 && g[(j, j)] > ZERO_COLUMN)
                .map(|j| (j, grad[j]))
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))?;
            if v.abs() <= lambda {
                return None;
            }
            theta[j] = v.signum();
        }
        let support: Vec<usize> = (0..n).filter(|&j| theta[j] != 0.0).collect();
        let k = support.len();
        let gs = DMatrix::from_fn(k, k, |a, b| g[(support[a], support[b])]);
        let rhs = DVector::from_fn(k, |a, _| corr[support[a]] - lambda * theta[support[a]]);
        let z = match gs.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gs.svd(true, true).solve(&rhs, 1e-12).ok()?,
        };
        let mut target = DVector::zeros(n);
        for (a, &j) in support.iter().enumerate() {
            target[j] = z[a];
        }
        // Candidates: the full step and every zero crossing along the way.
        let mut best = target.clone();
        let mut best_f = gram_objective(g, corr, &best, lambda);
        for &j in &support {
            if x[j] != 0.0 && x[j].signum() != target[j].signum() {
                let t = x[j] / (x[j] - target[j]);
                let mut p = &x + (&target - &x) * t;
                p[j] = 0.0;
                let f = gram_objective(g, corr, &p, lambda);
                if f < best_f {
                    best_f = f;
                    best = p;
                }
            }
        }
        x = best;
        for j in 0..n {
            if theta[j] != 0.0 && x[j].signum() != theta[j] {
                x[j] = 0.0;
                theta[j] = 0.0;
            }
        }
    }
    None
}

/// Largest KKT violation of `alpha`, measured on correlations `Dᵀ(x − Dα)`.
fn kkt_residual_gram(g: &DMatrix<f64>, corr: &DVector<f64>, alpha: &DVector<f64>, lambda: f64) -> f64 {
    let grad = corr - g * alpha;
    grad.iter()
        .zip(alpha.iter())
        .map(|(&gj, &aj)| {
            if aj == 0.0 {
                (gj.abs() - lambda).max(0.0)
            } else {
                (gj - lambda * aj.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Objective `½‖x − Dα‖² + λ‖α‖₁`.
pub fn lasso_objective(dict: &DMatrix<f64>, signal: &[f64], alpha: &DVector<f64>, lambda: f64) -> f64 {
    let x = DVector::from_column_slice(signal);
    let r = x - dict * alpha;
    0.5 * r.norm_squared() + lambda * alpha.lp_norm(1)
}

pub fn lasso_solve(dict: &DMatrix<f64>, signal: &[f64], lambda: f64, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    LassoSolver::new(dict).with_tolerance(tol, max_iter).solve(signal, lambda)
}

pub fn lasso_solve_batch(
    dict: &DMatrix<f64>,
    signals: &DMatrix<f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>> {
    LassoSolver::new(dict).with_tolerance(tol, max_iter).solve_batch(signals, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dict(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
        let mut d = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        for mut c in d.column_iter_mut() {
            let norm = c.norm();
            c /= norm;
        }
        d
    }

    // Independent check straight from D, x: no Gram matrix.
    fn kkt_ok(d: &DMatrix<f64>, x: &[f64], a: &DVector<f64>, lambda: f64, tol: f64) -> bool {
        let r = DVector::from_column_slice(x) - d * a;
        (0..d.ncols()).all(|j| {
            let c = d.column(j).dot(&r);
            if a[j] == 0.0 {
                c.abs() <= lambda + tol
            } else {
                (c - lambda * a[j].signum()).abs() <= tol
            }
        })
    }

    #[test]
    fn orthonormal_is_soft_threshold() {
        let d = DMatrix::identity(2, 2);
        let a = lasso_solve(&d, &[1.0, 0.0], 0.25, 1e-6, 1000).unwrap();
        assert!((a[0] - 0.75).abs() < 1e-12);
        assert_eq!(a[1], 0.0);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_dict(&mut rng, 6, 9);
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cmax = d.tr_mul(&DVector::from_column_slice(&x)).amax();
        let a = lasso_solve(&d, &x, cmax, 1e-6, 1000).unwrap();
        assert!(a.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kkt_and_objective_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let d = random_dict(&mut rng, 16, 40);
            let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let lambda = rng.gen_range(0.01..1.0);
            let a = lasso_solve(&d, &x, lambda, 1e-6, 1000).unwrap();
            assert!(kkt_ok(&d, &x, &a, lambda, 1e-6));
            let zero = DVector::zeros(40);
            assert!(lasso_objective(&d, &x, &a, lambda) <= lasso_objective(&d, &x, &zero, lambda));
        }
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_dict(&mut rng, 8, 12);
        let mut x = DMatrix::from_fn(8, 5, |_, _| rng.gen_range(-1.0..1.0));
        let col0 = x.column(0).clone_owned();
        x.set_column(4, &col0);
        let codes = lasso_solve_batch(&d, &x, 0.1, 1e-6, 1000).unwrap();
        let single = lasso_solve(&d, x.column(2).as_slice(), 0.1, 1e-6, 1000).unwrap();
        assert_eq!(codes.column(2), single.column(0));
        assert_eq!(codes.column(0), codes.column(4));
        for k in 0..5 {
            assert!(kkt_ok(&d, x.column(k).as_slice(), &codes.column(k).clone_owned(), 0.1, 1e-6));
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let d = DMatrix::identity(3, 3);
        assert!(lasso_solve(&d, &[1.0, 2.0], 0.1, 1e-6, 10).is_err());
        assert!(lasso_solve(&d, &[1.0, 2.0, 3.0], -0.1, 1e-6, 10).is_err());
        assert!(lasso_solve(&d, &[1.0, 2.0, 3.0], 0.1, 0.0, 10).is_err());
        assert!(lasso_solve(&d, &[1.0, 2.0, 3.0], 0.1, 1e-6, 0).is_err());
    }

    #[test]
    fn l1_norm_shrinks_with_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let d = random_dict(&mut rng, 10, 20);
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut last = f64::INFINITY;
            for step in 0..30 {
                let lambda = 0.02 + 0.1 * step as f64;
                let l1 = lasso_solve(&d, &x, lambda, 1e-9, 1000).unwrap().lp_norm(1);
                assert!(l1 <= last + 1e-7, "l1 grew at lambda {lambda}");
                last = l1;
            }
        }
    }
}
