//! Bernoulli-entropy maximization over the binary transportation polytope.
//!
//! The typical table Z of a margin pair is the unique maximizer of
//! `g(X) = Σ x_ij ln(1/x_ij) + (1-x_ij) ln(1/(1-x_ij))` among matrices in
//! `[0,1]^(m x n)` with the prescribed row and column sums. Stationarity
//! forces `ln((1-z_ij)/z_ij) = λ_i + μ_j`, so the solver iterates only on
//! the dual vectors and the entries `z_ij = 1/(1 + e^(λ_i+μ_j))` satisfy
//! the Lagrange condition identically.
//!
//! For block margins the duals collapse to two values and the whole system
//! reduces to two scalar equations in `(P, Q) = (e^α, e^β)`; their `n → ∞`
//! limits have closed forms exposed by [`limit_law`].

use crate::margins::{build_block_margins, check_feasible, BlockParams, MarginError, MarginPair};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("matrix entry ({i}, {j}) = {value} lies on the boundary of (0, 1)")]
    BoundaryEntry { i: usize, j: usize, value: f64 },
    #[error("margins admit no binary table")]
    Infeasible,
    #[error("margins leave no interior after forcing saturated rows/columns")]
    NoInterior,
    #[error("solver did not converge within {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("limit law undefined: requires 0 < C < 1 and 0 < B*C < 1, got B={b}, C={c}")]
    LimitUndefined { b: f64, c: f64 },
    #[error(transparent)]
    Margin(#[from] MarginError),
}

/// Default residual tolerance for the dual solvers.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration budget (coordinate sweeps plus Newton steps).
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// A solved typical table.
///
/// Cells forced by saturated or empty margins carry `z` exactly 0 or 1 and
/// contribute nothing to the entropy; their row/column duals are `±inf`
/// (which serde renders as `null` in JSON). All free entries satisfy
/// `ln((1-z)/z) = λ_i + μ_j` exactly by construction.
#[derive(Debug, Clone, Serialize)]
pub struct TypicalTable {
    pub z: Vec<Vec<f64>>,
    pub row_duals: Vec<f64>,
    pub col_duals: Vec<f64>,
    /// g(Z) in nats.
    pub entropy: f64,
    /// Maximum absolute row/column margin violation.
    pub residual: f64,
}

/// Block reduction of the typical table: the two dual exponentials and the
/// three distinct entry values.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BlockSolution {
    /// P = e^α, the heavy-class dual exponential.
    pub p_var: f64,
    /// Q = e^β, the light-class dual exponential.
    pub q_var: f64,
    /// Top-left block value 1/(P²+1).
    pub z_tl: f64,
    /// Side block value 1/(PQ+1).
    pub z_side: f64,
    /// Bottom-right block value 1/(Q²+1).
    pub z_br: f64,
}

/// Closed-form n → ∞ limits of the block solution.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitLaw {
    pub p_star: f64,
    pub q_star: f64,
    /// Limiting top-left mean B²(1-C)/(B² - 2B + 1/C).
    pub mean_tl: f64,
    /// Limiting side mean B·C.
    pub mean_side: f64,
    /// Limiting bottom-right mean C.
    pub mean_br: f64,
}

/// Per-entry Bernoulli entropy, valid on the open interval (0, 1).
#[inline]
fn bernoulli_entropy(x: f64) -> f64 {
    x * (1.0 / x).ln() + (1.0 - x) * (1.0 / (1.0 - x)).ln()
}

/// Numerically stable logistic `1/(1+e^s)`.
#[inline]
fn inv_logit(s: f64) -> f64 {
    if s >= 0.0 {
        let e = (-s).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + s.exp())
    }
}

/// Sum of per-entry Bernoulli entropies in nats. Every entry must lie
/// strictly inside (0, 1); the gradient diverges on the boundary.
pub fn entropy_g(x: &[Vec<f64>]) -> Result<f64, SolveError> {
    let mut total = 0.0;
    for (i, row) in x.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !(v > 0.0 && v < 1.0) {
                return Err(SolveError::BoundaryEntry { i, j, value: v });
            }
            total += bernoulli_entropy(v);
        }
    }
    Ok(total)
}

/// The entropy-based upper bound on the number of tables, in log domain:
/// returns g(Z), so the bound itself is e^(g(Z)). Callers exponentiate
/// only for small instances.
pub fn barvinok_upper_bound(t: &TypicalTable) -> f64 {
    t.entropy
}

// ---------------------------------------------------------------------------
// General dual solver
// ---------------------------------------------------------------------------

/// Cell forced during boundary reduction.
#[derive(Clone, Copy, PartialEq)]
enum Forced {
    Zero,
    One,
}

struct Reduction {
    /// per-row: None if free, Some(forced value applied to still-active columns at the time)
    row_forced: Vec<Option<Forced>>,
    col_forced: Vec<Option<Forced>>,
    /// explicit value for every cell that is in a forced row or column
    forced_cells: Vec<((usize, usize), f64)>,
    active_rows: Vec<usize>,
    active_cols: Vec<usize>,
    reduced_r: Vec<usize>,
    reduced_c: Vec<usize>,
}

/// Peel off saturated (r = #cols) and empty (r = 0) rows and columns until
/// every remaining margin is strictly interior.
fn reduce_boundaries(mp: &MarginPair) -> Result<Reduction, SolveError> {
    let m = mp.num_rows();
    let n = mp.num_cols();
    let mut row_forced: Vec<Option<Forced>> = vec![None; m];
    let mut col_forced: Vec<Option<Forced>> = vec![None; n];
    let mut r: Vec<isize> = mp.rows().iter().map(|&x| x as isize).collect();
    let mut c: Vec<isize> = mp.cols().iter().map(|&x| x as isize).collect();
    let mut forced_cells: Vec<((usize, usize), f64)> = Vec::new();

    loop {
        let active_cols: Vec<usize> = (0..n).filter(|&j| col_forced[j].is_none()).collect();
        let active_rows: Vec<usize> = (0..m).filter(|&i| row_forced[i].is_none()).collect();
        let mut changed = false;

        for &i in &active_rows {
            if r[i] < 0 || r[i] as usize > active_cols.len() {
                return Err(SolveError::Infeasible);
            }
            if r[i] == 0 || r[i] as usize == active_cols.len() {
                let forced = if r[i] == 0 { Forced::Zero } else { Forced::One };
                row_forced[i] = Some(forced);
                for &j in &active_cols {
                    let v = if forced == Forced::One { 1.0 } else { 0.0 };
                    forced_cells.push(((i, j), v));
                    if forced == Forced::One {
                        c[j] -= 1;
                    }
                }
                changed = true;
            }
        }
        if changed {
            continue;
        }

        for &j in &active_cols {
            if c[j] < 0 || c[j] as usize > active_rows.len() {
                return Err(SolveError::Infeasible);
            }
            if c[j] == 0 || c[j] as usize == active_rows.len() {
                let forced = if c[j] == 0 { Forced::Zero } else { Forced::One };
                col_forced[j] = Some(forced);
                for &i in &active_rows {
                    let v = if forced == Forced::One { 1.0 } else { 0.0 };
                    forced_cells.push(((i, j), v));
                    if forced == Forced::One {
                        r[i] -= 1;
                    }
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let active_rows: Vec<usize> = (0..m).filter(|&i| row_forced[i].is_none()).collect();
    let active_cols: Vec<usize> = (0..n).filter(|&j| col_forced[j].is_none()).collect();
    let reduced_r: Vec<usize> = active_rows.iter().map(|&i| r[i] as usize).collect();
    let reduced_c: Vec<usize> = active_cols.iter().map(|&j| c[j] as usize).collect();
    Ok(Reduction {
        row_forced,
        col_forced,
        forced_cells,
        active_rows,
        active_cols,
        reduced_r,
        reduced_c,
    })
}

/// Internal dual state on the reduced (strictly interior) problem.
struct DualSolver {
    r: Vec<f64>,
    c: Vec<f64>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl DualSolver {
    fn new(r: &[usize], c: &[usize]) -> Self {
        let n_cols = c.len() as f64;
        let lambda: Vec<f64> = r.iter().map(|&ri| (n_cols / ri as f64 - 1.0).ln()).collect();
        let mu = vec![0.0; c.len()];
        DualSolver {
            r: r.iter().map(|&x| x as f64).collect(),
            c: c.iter().map(|&x| x as f64).collect(),
            lambda,
            mu,
        }
    }

    #[inline]
    fn z(&self, i: usize, j: usize) -> f64 {
        inv_logit(self.lambda[i] + self.mu[j])
    }

    fn row_sum(&self, i: usize) -> f64 {
        (0..self.c.len()).map(|j| self.z(i, j)).sum()
    }

    fn col_sum(&self, j: usize) -> f64 {
        (0..self.r.len()).map(|i| self.z(i, j)).sum()
    }

    fn residual(&self) -> f64 {
        let row = (0..self.r.len())
            .map(|i| (self.row_sum(i) - self.r[i]).abs())
            .fold(0.0, f64::max);
        let col = (0..self.c.len())
            .map(|j| (self.col_sum(j) - self.c[j]).abs())
            .fold(0.0, f64::max);
        row.max(col)
    }

    /// Solve Σ_j 1/(1+e^(x+μ_j)) = target for x: strictly decreasing, so a
    /// safeguarded Newton iteration with a bisection bracket always lands.
    fn solve_row_scalar(offsets: &[f64], target: f64, start: f64) -> f64 {
        let f = |x: f64| offsets.iter().map(|&o| inv_logit(x + o)).sum::<f64>() - target;
        let mut lo = -745.0 - offsets.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hi = 745.0 - offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut x = start.clamp(lo, hi);
        for _ in 0..100 {
            let fx = f(x);
            if fx.abs() < 1e-14 * (1.0 + target) {
                return x;
            }
            if fx > 0.0 {
                lo = x; // function decreasing: need larger x
            } else {
                hi = x;
            }
            let slope: f64 = offsets
                .iter()
                .map(|&o| {
                    let z = inv_logit(x + o);
                    -z * (1.0 - z)
                })
                .sum();
            let newton = if slope < 0.0 { x - fx / slope } else { f64::NAN };
            x = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        x
    }

    fn sweep(&mut self) {
        for i in 0..self.r.len() {
            self.lambda[i] = Self::solve_row_scalar(&self.mu, self.r[i], self.lambda[i]);
        }
        for j in 0..self.c.len() {
            self.mu[j] = Self::solve_row_scalar(&self.lambda, self.c[j], self.mu[j]);
        }
    }

    /// One damped Newton step on the full dual vector (last μ pinned to fix
    /// the additive gauge). Returns false if the step had to be abandoned.
    fn newton_step(&mut self) -> bool {
        let m = self.r.len();
        let n = self.c.len();
        let dim = m + n - 1;
        // Residual vector F and Jacobian J (dense, rows then cols).
        let mut f = vec![0.0f64; m + n];
        for i in 0..m {
            f[i] = self.row_sum(i) - self.r[i];
        }
        for j in 0..n {
            f[m + j] = self.col_sum(j) - self.c[j];
        }
        let norm0 = f.iter().fold(0.0f64, |a, &x| a.max(x.abs()));

        let mut jac = vec![vec![0.0f64; dim]; dim];
        for i in 0..m {
            let mut diag = 0.0;
            for j in 0..n {
                let z = self.z(i, j);
                let w = z * (1.0 - z);
                diag += w;
                if j + 1 < n {
                    jac[i][m + j] = -w;
                }
            }
            jac[i][i] = -diag;
        }
        for j in 0..n.saturating_sub(1) {
            let mut diag = 0.0;
            for i in 0..m {
                let z = self.z(i, j);
                let w = z * (1.0 - z);
                diag += w;
                jac[m + j][i] = -w;
            }
            jac[m + j][m + j] = -diag;
        }
        // Equation m+n-1 is linearly dependent on the others and is dropped
        // together with its variable.
        let mut rhs: Vec<f64> = f[..dim].iter().map(|x| -x).collect();

        if !gauss_solve(&mut jac, &mut rhs) {
            return false;
        }
        if rhs.iter().any(|x| !x.is_finite()) {
            return false;
        }

        let lambda0 = self.lambda.clone();
        let mu0 = self.mu.clone();
        let mut t = 1.0;
        for _ in 0..40 {
            for i in 0..m {
                self.lambda[i] = lambda0[i] + t * rhs[i];
            }
            for j in 0..n - 1 {
                self.mu[j] = mu0[j] + t * rhs[m + j];
            }
            if self.residual() < norm0 {
                return true;
            }
            t *= 0.5;
        }
        self.lambda = lambda0;
        self.mu = mu0;
        false
    }
}

/// Gaussian elimination with partial pivoting; solves in place, returns
/// false on a (numerically) singular matrix.
fn gauss_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> bool {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return false;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * b[k];
        }
        b[col] = acc / a[col][col];
    }
    true
}

/// Maximize the Bernoulli entropy over the binary transportation polytope
/// of `mp`. Boundary margins (empty or saturated rows/columns) are peeled
/// off first and their cells returned as exact 0/1 entries.
pub fn solve_typical(
    mp: &MarginPair,
    tol: f64,
    max_iter: usize,
) -> Result<TypicalTable, SolveError> {
    if !check_feasible(mp) {
        return Err(SolveError::Infeasible);
    }
    let m = mp.num_rows();
    let n = mp.num_cols();
    let red = reduce_boundaries(mp)?;

    let mut z = vec![vec![f64::NAN; n]; m];
    for &((i, j), v) in &red.forced_cells {
        z[i][j] = v;
    }

    let mut row_duals = vec![0.0f64; m];
    let mut col_duals = vec![0.0f64; n];
    for i in 0..m {
        match red.row_forced[i] {
            Some(Forced::Zero) => row_duals[i] = f64::INFINITY,
            Some(Forced::One) => row_duals[i] = f64::NEG_INFINITY,
            None => {}
        }
    }
    for j in 0..n {
        match red.col_forced[j] {
            Some(Forced::Zero) => col_duals[j] = f64::INFINITY,
            Some(Forced::One) => col_duals[j] = f64::NEG_INFINITY,
            None => {}
        }
    }

    if !red.active_rows.is_empty() && !red.active_cols.is_empty() {
        let mut solver = DualSolver::new(&red.reduced_r, &red.reduced_c);
        let mut iterations = 0usize;
        let newton_threshold = 1e-3;
        loop {
            let res = solver.residual();
            if res < tol {
                break;
            }
            if iterations >= max_iter {
                return Err(SolveError::NotConverged { iterations, residual: res });
            }
            if res < newton_threshold {
                if !solver.newton_step() {
                    solver.sweep();
                }
            } else {
                solver.sweep();
            }
            iterations += 1;
        }
        for (a, &i) in red.active_rows.iter().enumerate() {
            row_duals[i] = solver.lambda[a];
        }
        for (b, &j) in red.active_cols.iter().enumerate() {
            col_duals[j] = solver.mu[b];
        }
        for (a, &i) in red.active_rows.iter().enumerate() {
            for (b, &j) in red.active_cols.iter().enumerate() {
                z[i][j] = solver.z(a, b);
            }
        }
    }

    // Entropy over free cells only; forced cells contribute exactly 0.
    let mut entropy = 0.0;
    for row in &z {
        for &v in row {
            if v > 0.0 && v < 1.0 {
                entropy += bernoulli_entropy(v);
            }
        }
    }
    // Residual against the *original* margins, forced cells included.
    let mut residual = 0.0f64;
    for i in 0..m {
        let s: f64 = z[i].iter().sum();
        residual = residual.max((s - mp.rows()[i] as f64).abs());
    }
    for j in 0..n {
        let s: f64 = (0..m).map(|i| z[i][j]).sum();
        residual = residual.max((s - mp.cols()[j] as f64).abs());
    }

    Ok(TypicalTable { z, row_duals, col_duals, entropy, residual })
}

// ---------------------------------------------------------------------------
// Block reduction
// ---------------------------------------------------------------------------

/// Solve the two-equation block system with the exact floored margins:
/// `k·z_tl + n·z_side = floor(BCn)` and `k·z_side + n·z_br = floor(Cn)`,
/// over (P, Q) via damped Newton on (α, β) = (ln P, ln Q).
pub fn solve_block(p: &BlockParams, tol: f64) -> Result<BlockSolution, SolveError> {
    let mp = build_block_margins(p)?;
    if !check_feasible(&mp) {
        return Err(SolveError::Infeasible);
    }
    let heavy_count = p.heavy_count() as f64;
    let n = p.n as f64;
    let heavy = p.heavy_margin() as f64;
    let light = p.light_margin() as f64;
    let len = heavy_count + n;
    if heavy == 0.0 || light == 0.0 || heavy >= len || light >= len {
        return Err(SolveError::NoInterior);
    }

    // Initial point: the closed-form limits when defined, else (1, 1).
    let (mut alpha, mut beta) = match limit_law(p) {
        Ok(law) => (law.p_star.ln(), law.q_star.ln()),
        Err(_) => (0.0, 0.0),
    };
    if !alpha.is_finite() || !beta.is_finite() {
        alpha = 0.0;
        beta = 0.0;
    }

    let eval = |alpha: f64, beta: f64| -> (f64, f64, f64, f64, f64) {
        let z_tl = inv_logit(2.0 * alpha);
        let z_side = inv_logit(alpha + beta);
        let z_br = inv_logit(2.0 * beta);
        let f1 = heavy_count * z_tl + n * z_side - heavy;
        let f2 = heavy_count * z_side + n * z_br - light;
        (z_tl, z_side, z_br, f1, f2)
    };

    let max_iter = 500;
    for iteration in 0..=max_iter {
        let (z_tl, z_side, z_br, f1, f2) = eval(alpha, beta);
        let res = f1.abs().max(f2.abs());
        if res < tol {
            return Ok(BlockSolution {
                p_var: alpha.exp(),
                q_var: beta.exp(),
                z_tl,
                z_side,
                z_br,
            });
        }
        if iteration == max_iter {
            return Err(SolveError::NotConverged { iterations: max_iter, residual: res });
        }
        let w_tl = z_tl * (1.0 - z_tl);
        let w_s = z_side * (1.0 - z_side);
        let w_br = z_br * (1.0 - z_br);
        let j11 = -(2.0 * heavy_count * w_tl + n * w_s);
        let j12 = -n * w_s;
        let j21 = -heavy_count * w_s;
        let j22 = -(heavy_count * w_s + 2.0 * n * w_br);
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            return Err(SolveError::NotConverged { iterations: iteration, residual: res });
        }
        let da = (-f1 * j22 + f2 * j12) / det;
        let db = (-f2 * j11 + f1 * j21) / det;
        let mut t = 1.0;
        let mut stepped = false;
        for _ in 0..60 {
            let (_, _, _, g1, g2) = eval(alpha + t * da, beta + t * db);
            if g1.abs().max(g2.abs()) < res {
                alpha += t * da;
                beta += t * db;
                stepped = true;
                break;
            }
            t *= 0.5;
        }
        if !stepped {
            return Err(SolveError::NotConverged { iterations: iteration, residual: res });
        }
    }
    unreachable!("loop returns or errors");
}

/// Closed-form limits of the block solution as n → ∞.
///
/// `q* = sqrt(1/C - 1)`, `p* = (1/(BC) - 1)/q*`; the block means are
/// `C`, `B·C` and `B²(1-C)/(B² - 2B + 1/C)`. Requires `0 < C < 1` and
/// `0 < B·C < 1`.
pub fn limit_law(p: &BlockParams) -> Result<LimitLaw, SolveError> {
    let (b, c) = (p.b, p.c);
    if !(c > 0.0 && c < 1.0) || !(b * c > 0.0 && b * c < 1.0) {
        return Err(SolveError::LimitUndefined { b, c });
    }
    let q_star = (1.0 / c - 1.0).sqrt();
    let p_star = (1.0 / (b * c) - 1.0) / q_star;
    let mean_tl = b * b * (1.0 - c) / (b * b - 2.0 * b + 1.0 / c);
    Ok(LimitLaw { p_star, q_star, mean_tl, mean_side: b * c, mean_br: c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::margins::MarginPair;
    use crate::oracle::{count_tables, verify_barvinok_uniformity};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mp(r: &[usize], c: &[usize]) -> MarginPair {
        MarginPair::new(r.to_vec(), c.to_vec()).unwrap()
    }

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn entropy_examples() {
        let half = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert!((entropy_g(&half).unwrap() - 4.0 * LN2).abs() < 1e-12);

        // Independent evaluation of the scalar case.
        let expected = 0.25 * 4f64.ln() + 0.75 * (4.0f64 / 3.0).ln();
        let single = vec![vec![0.25]];
        assert!((entropy_g(&single).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.5623).abs() < 1e-4);

        assert!(matches!(
            entropy_g(&[vec![0.0, 0.5]]),
            Err(SolveError::BoundaryEntry { i: 0, j: 0, .. })
        ));
        assert!(entropy_g(&[vec![1.0]]).is_err());
    }

    proptest! {
        /// Bernoulli entropy is symmetric under x ↦ 1−x.
        #[test]
        fn entropy_complement_symmetry(vals in proptest::collection::vec(1e-6f64..=0.999999, 1..12)) {
            let x = vec![vals.clone()];
            let comp = vec![vals.iter().map(|v| 1.0 - v).collect::<Vec<_>>()];
            let a = entropy_g(&x).unwrap();
            let b = entropy_g(&comp).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }

        /// ∂g/∂x = ln((1−x)/x) matches central finite differences.
        #[test]
        fn entropy_gradient_matches_finite_differences(x in 0.01f64..0.99) {
            let h = 1e-6;
            let up = entropy_g(&[vec![x + h]]).unwrap();
            let dn = entropy_g(&[vec![x - h]]).unwrap();
            let fd = (up - dn) / (2.0 * h);
            let grad = ((1.0 - x) / x).ln();
            prop_assert!((fd - grad).abs() < 1e-6 * (1.0 + grad.abs()),
                "x={} fd={} grad={}", x, fd, grad);
        }
    }

    #[test]
    fn solve_typical_centroid() {
        let t = solve_typical(&mp(&[1, 1], &[1, 1]), 1e-10, 10_000).unwrap();
        for row in &t.z {
            for &v in row {
                assert!((v - 0.5).abs() < 1e-10);
            }
        }
        assert!((t.entropy - 4.0 * LN2).abs() < 1e-9);
        assert!(t.residual < 1e-10);
    }

    #[test]
    fn solve_typical_uniform_block_margins() {
        // Margins (2,2,2,2,2,2): full symmetry gives z = 2/6 = 1/3.
        let p = BlockParams::new(4, 0.5, 1.0, 0.5).unwrap();
        let pair = build_block_margins(&p).unwrap();
        let t = solve_typical(&pair, 1e-10, 10_000).unwrap();
        for row in &t.z {
            for &v in row {
                assert!((v - 1.0 / 3.0).abs() < 1e-9, "z entry {v}");
            }
        }
    }

    #[test]
    fn solve_typical_stationarity_and_margins() {
        let pair = mp(&[3, 2, 2, 2, 2], &[3, 2, 2, 2, 2]);
        let t = solve_typical(&pair, 1e-10, 10_000).unwrap();
        assert!(t.residual < 1e-10);
        for (i, row) in t.z.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            assert!((sum - pair.rows()[i] as f64).abs() < 1e-10);
            for (j, &z) in row.iter().enumerate() {
                let lhs = ((1.0 - z) / z).ln();
                let rhs = t.row_duals[i] + t.col_duals[j];
                assert!((lhs - rhs).abs() < 1e-9, "stationarity at ({i},{j})");
            }
        }
    }

    #[test]
    fn solve_typical_matches_block_solver() {
        let p = BlockParams::new(4, 0.0, 1.5, 0.5).unwrap();
        let pair = build_block_margins(&p).unwrap();
        assert_eq!(pair.rows(), &[3, 2, 2, 2, 2]);
        let t = solve_typical(&pair, 1e-12, 10_000).unwrap();
        let blk = solve_block(&p, 1e-12).unwrap();
        let k0 = 1;
        for (i, row) in t.z.iter().enumerate() {
            for (j, &z) in row.iter().enumerate() {
                let want = if i < k0 && j < k0 {
                    blk.z_tl
                } else if i >= k0 && j >= k0 {
                    blk.z_br
                } else {
                    blk.z_side
                };
                assert!((z - want).abs() < 1e-8, "cell ({i},{j}): {z} vs {want}");
            }
        }
    }

    #[test]
    fn solve_typical_boundary_reduction() {
        // Row 0 saturated; the rest cascades to a single forced table.
        let t = solve_typical(&mp(&[2, 1], &[2, 1]), 1e-10, 10_000).unwrap();
        assert_eq!(t.z, vec![vec![1.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(t.entropy, 0.0);
        assert_eq!(t.residual, 0.0);
        assert_eq!(
            count_tables(&mp(&[2, 1], &[2, 1])).unwrap().count,
            num_bigint::BigUint::from(1u32)
        );
    }

    #[test]
    fn solve_typical_partial_reduction_keeps_free_block() {
        // Column 0 saturated (c_0 = m = 2); remaining 2x2 block is free.
        let pair = mp(&[2, 2], &[2, 1, 1]);
        let t = solve_typical(&pair, 1e-10, 10_000).unwrap();
        assert_eq!(t.z[0][0], 1.0);
        assert_eq!(t.z[1][0], 1.0);
        for i in 0..2 {
            for j in 1..3 {
                assert!((t.z[i][j] - 0.5).abs() < 1e-10);
            }
        }
        assert!(t.residual < 1e-10);
    }

    #[test]
    fn solve_typical_infeasible_margins() {
        assert!(matches!(
            solve_typical(&mp(&[2, 2], &[3, 1]), 1e-10, 1000),
            Err(SolveError::Infeasible)
        ));
    }

    #[test]
    fn solve_typical_reports_non_convergence() {
        // The rank-1 initialization is not exact for these margins, so a
        // zero iteration budget must surface NotConverged.
        let err = solve_typical(&mp(&[2, 1, 1], &[2, 1, 1]), 1e-10, 0).unwrap_err();
        match err {
            SolveError::NotConverged { iterations: 0, residual } => assert!(residual > 0.0),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn solve_typical_is_deterministic() {
        let pair = mp(&[3, 2, 1], &[2, 2, 2]);
        let a = solve_typical(&pair, 1e-10, 10_000).unwrap();
        let b = solve_typical(&pair, 1e-10, 10_000).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.row_duals, b.row_duals);
        assert!(a.entropy.to_bits() == b.entropy.to_bits());
    }

    #[test]
    fn concavity_random_feasible_perturbations_never_increase_g() {
        let pair = mp(&[3, 2, 2, 2, 2], &[3, 2, 2, 2, 2]);
        let t = solve_typical(&pair, 1e-12, 10_000).unwrap();
        let g0 = entropy_g(&t.z).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (m, n) = (5, 5);
        for _ in 0..200 {
            // Random zero-margin direction: combination of checkerboards.
            let mut dir = vec![vec![0.0f64; n]; m];
            for _ in 0..4 {
                let i0 = rng.random_range(0..m);
                let mut i1 = rng.random_range(0..m - 1);
                if i1 >= i0 {
                    i1 += 1;
                }
                let j0 = rng.random_range(0..n);
                let mut j1 = rng.random_range(0..n - 1);
                if j1 >= j0 {
                    j1 += 1;
                }
                let eta: f64 = rng.random_range(-1.0..1.0);
                dir[i0][j0] += eta;
                dir[i0][j1] -= eta;
                dir[i1][j0] -= eta;
                dir[i1][j1] += eta;
            }
            let eps = 1e-4;
            let perturbed: Vec<Vec<f64>> = t
                .z
                .iter()
                .zip(&dir)
                .map(|(zr, dr)| {
                    zr.iter().zip(dr).map(|(&z, &d)| (z + eps * d).clamp(1e-12, 1.0 - 1e-12)).collect()
                })
                .collect();
            let g1 = entropy_g(&perturbed).unwrap();
            assert!(g1 <= g0 + 1e-9, "perturbation increased g: {g1} > {g0}");
        }
    }

    #[test]
    fn block_solution_equal_margins() {
        let p = BlockParams::new(4, 0.5, 1.0, 0.5).unwrap();
        let s = solve_block(&p, 1e-12).unwrap();
        assert!((s.p_var - 2f64.sqrt()).abs() < 1e-9);
        assert!((s.q_var - 2f64.sqrt()).abs() < 1e-9);
        for z in [s.z_tl, s.z_side, s.z_br] {
            assert!((z - 1.0 / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn block_solution_matches_general_solver_at_n_100() {
        let p = BlockParams::new(100, 0.5, 1.2, 0.5).unwrap();
        let pair = build_block_margins(&p).unwrap();
        let blk = solve_block(&p, 1e-12).unwrap();
        let t = solve_typical(&pair, 1e-12, 100_000).unwrap();
        let k0 = p.heavy_count();
        for (i, row) in t.z.iter().enumerate() {
            for (j, &z) in row.iter().enumerate() {
                let want = if i < k0 && j < k0 {
                    blk.z_tl
                } else if i >= k0 && j >= k0 {
                    blk.z_br
                } else {
                    blk.z_side
                };
                assert!((z - want).abs() < 1e-8, "cell ({i},{j}): {z} vs {want}");
            }
        }
        // Exactly three distinct values up to 1e-8.
        let mut values: Vec<f64> = Vec::new();
        for row in &t.z {
            for &z in row {
                if !values.iter().any(|v| (v - z).abs() < 1e-8) {
                    values.push(z);
                }
            }
        }
        assert_eq!(values.len(), 3);
    }

    #[test]
    fn block_product_inequality() {
        // z_tl * z_br <= z_side^2 for every solved block.
        for &(n, delta, b, c) in &[
            (20usize, 0.5, 1.2, 0.5),
            (50, 0.3, 0.8, 0.6),
            (100, 0.7, 1.5, 0.4),
            (64, 0.0, 1.9, 0.5),
        ] {
            let p = BlockParams::new(n, delta, b, c).unwrap();
            let s = solve_block(&p, 1e-11).unwrap();
            assert!(
                s.z_tl * s.z_br <= s.z_side * s.z_side + 1e-12,
                "violated at {p:?}: {s:?}"
            );
        }
    }

    #[test]
    fn block_br_value_approaches_limit_at_rate() {
        // |z_br - C| should decay roughly like n^(delta-1) = n^-0.5.
        let mut gaps = Vec::new();
        for &n in &[50usize, 100, 200, 400, 800] {
            let p = BlockParams::new(n, 0.5, 1.2, 0.5).unwrap();
            let s = solve_block(&p, 1e-12).unwrap();
            gaps.push(((n as f64).ln(), (s.z_br - 0.5).abs().ln()));
        }
        let xs: Vec<f64> = gaps.iter().map(|g| g.0).collect();
        let ys: Vec<f64> = gaps.iter().map(|g| g.1).collect();
        let (_, slope, _) = crate::stats::linear_fit(&xs, &ys);
        assert!(slope <= -0.4, "fitted decay slope {slope}");
    }

    #[test]
    fn limit_law_examples() {
        let law = limit_law(&BlockParams::new(100, 0.5, 1.0, 0.5).unwrap()).unwrap();
        for v in [law.mean_tl, law.mean_side, law.mean_br] {
            assert!((v - 0.5).abs() < 1e-12);
        }

        let law = limit_law(&BlockParams::new(100, 0.5, 1.2, 0.5).unwrap()).unwrap();
        assert!((law.mean_side - 0.6).abs() < 1e-12);
        assert!((law.mean_br - 0.5).abs() < 1e-12);
        assert!((law.mean_tl - 0.72 / 1.04).abs() < 1e-12);
        assert!((law.p_star - 2.0 / 3.0).abs() < 1e-12);
        assert!((law.q_star - 1.0).abs() < 1e-12);
        // Consistency: 1/(p*^2 + 1) equals the top-left mean.
        assert!((1.0 / (law.p_star * law.p_star + 1.0) - law.mean_tl).abs() < 1e-12);
        assert!((law.mean_tl - 0.69231).abs() < 1e-5);
        // The top-left mean respects the product bound B^2 C.
        assert!(law.mean_tl <= 1.2 * 1.2 * 0.5);

        assert!(matches!(
            limit_law(&BlockParams::new(100, 0.5, 2.5, 0.5).unwrap()),
            Err(SolveError::LimitUndefined { .. })
        ));
        assert!(limit_law(&BlockParams::new(100, 0.5, 0.5, 1.5).unwrap()).is_err());
    }

    #[test]
    fn block_solution_approaches_limit_law() {
        // The finite-n deviation is exactly the coupling term (k0/n) times
        // a bounded entry value, so every block gap sits below n^(delta-1).
        let p = BlockParams::new(10_000, 0.5, 1.2, 0.5).unwrap();
        let s = solve_block(&p, 1e-12).unwrap();
        let law = limit_law(&p).unwrap();
        let rate = (p.n as f64).powf(p.delta - 1.0); // 0.01
        assert!((s.z_tl - law.mean_tl).abs() < rate, "tl gap {}", (s.z_tl - law.mean_tl).abs());
        assert!((s.z_side - law.mean_side).abs() < rate);
        assert!((s.z_br - law.mean_br).abs() < rate);
        // And the gaps really are the coupling term, not solver error:
        let k0_over_n = p.heavy_count() as f64 / p.n as f64;
        assert!(((s.z_side - law.mean_side).abs() - k0_over_n * s.z_tl).abs() < 1e-6);
    }

    #[test]
    fn barvinok_bound_examples() {
        let t = solve_typical(&mp(&[1, 1], &[1, 1]), 1e-12, 10_000).unwrap();
        let g = barvinok_upper_bound(&t);
        assert!((g - 4.0 * LN2).abs() < 1e-9);
        assert!(g.exp() >= 2.0); // exact count is 2, bound is 16

        let pair = mp(&[2, 1, 1], &[2, 1, 1]);
        let t = solve_typical(&pair, 1e-12, 10_000).unwrap();
        let count = count_tables(&pair).unwrap();
        assert!(count.log_count <= barvinok_upper_bound(&t) + 1e-9);
        assert!(barvinok_upper_bound(&t).exp() >= 5.0);
    }

    #[test]
    fn uniformity_verification_examples() {
        let pair = mp(&[1, 1], &[1, 1]);
        let t = solve_typical(&pair, 1e-12, 10_000).unwrap();
        let report = verify_barvinok_uniformity(&pair, &t, 1e-8).unwrap();
        assert_eq!(report.table_count, 2);
        assert!(report.max_log_density_deviation < 1e-9);
        assert!(report.log_acceptance <= 0.0);

        let pair = mp(&[2, 1, 1], &[2, 1, 1]);
        let t = solve_typical(&pair, 1e-12, 10_000).unwrap();
        let report = verify_barvinok_uniformity(&pair, &t, 1e-8).unwrap();
        assert_eq!(report.table_count, 5);
        assert!(report.max_log_density_deviation < 1e-8);

        // Negative control: a nudged entry must break equal log-density.
        let mut bad = t.clone();
        bad.z[0][0] += 0.01;
        assert!(verify_barvinok_uniformity(&pair, &bad, 1e-8).is_err());
    }

    #[test]
    fn typical_table_json_shape() {
        let t = solve_typical(&mp(&[1, 1], &[1, 1]), 1e-10, 1000).unwrap();
        let v: serde_json::Value = serde_json::to_value(&t).unwrap();
        for key in ["z", "row_duals", "col_duals", "entropy", "residual"] {
            assert!(v.get(key).is_some(), "missing key {key}");
        }
    }
}
