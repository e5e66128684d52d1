//! Constrained ridge-penalized weight learning.
//!
//! Both problems are posed over the grid coefficients `w` of a
//! piecewise-constant weight function and an unpenalized intercept `w0`.
//! With `eta_i = w0 + h * sum_j x_ij w_j` the objectives are
//!
//! ```text
//! logistic:       sum_i [log(1 + exp(eta_i)) - y_i eta_i] + lambda h sum_j w_j^2
//! least squares:  sum_i (y_i - eta_i)^2                   + lambda h sum_j w_j^2
//! ```
//!
//! subject to one of the [`ConstraintSet`]s. The sign-constrained variants are
//! solved with a primal log-barrier method whose centering steps are
//! equality-constrained Newton iterations; the sign-free variant is the same
//! Newton iteration without a barrier (a single step for least squares).

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fdata::{Curves, Grid};
use crate::linalg::{cholesky_in_place, cholesky_solve, dot, max_abs};
use crate::scalar::Scalar;

/// Feasible set for the weight coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintSet {
    /// `mean(w) = 1`.
    SignFree,
    /// `mean(w) = 1`, `w >= 0`.
    NonNegative,
    /// `mean(w) = -1`, `w <= 0`.
    NonPositive,
}

impl ConstraintSet {
    pub const ALL: [ConstraintSet; 3] = [Self::NonNegative, Self::NonPositive, Self::SignFree];

    /// Required value of `mean(w)`, i.e. of `(1/|I|) * integral of w`.
    pub fn target_mean<T: Scalar>(self) -> T {
        match self {
            Self::NonPositive => -T::one(),
            _ => T::one(),
        }
    }

    /// `+1` for `w >= 0`, `-1` for `w <= 0`, `None` when unconstrained in sign.
    pub fn sign<T: Scalar>(self) -> Option<T> {
        match self {
            Self::SignFree => None,
            Self::NonNegative => Some(T::one()),
            Self::NonPositive => Some(-T::one()),
        }
    }

    /// Strictly feasible starting point.
    fn initial_weights<T: Scalar>(self, p: usize) -> Vec<T> {
        vec![self.target_mean(); p]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    /// Ridge strength; must be positive.
    pub lambda: T,
    /// Tolerance on the KKT residual and on constraint violation.
    pub tol: T,
    /// Newton iteration cap per centering step.
    pub max_newton_iters: usize,
    pub barrier_init: T,
    pub barrier_factor: T,
    /// Outer iterations stop once the barrier weight falls below this value.
    pub barrier_min: T,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn with_lambda(lambda: T) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v > T::zero() && v.is_finite();
        if !pos(self.lambda) {
            return Err(Error::InvalidConfig(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !pos(self.tol) {
            return Err(Error::InvalidConfig(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_newton_iters == 0 {
            return Err(Error::InvalidConfig("max_newton_iters must be >= 1".into()));
        }
        if !pos(self.barrier_init)
            || !pos(self.barrier_min)
            || !(self.barrier_factor > T::zero() && self.barrier_factor < T::one())
        {
            return Err(Error::InvalidConfig("invalid barrier schedule".into()));
        }
        Ok(())
    }

    /// Barrier weights of the outer iterations: `init * factor^k` while `>= min`.
    fn barrier_schedule(&self) -> Vec<T> {
        let ratio = (self.barrier_init / self.barrier_min).ln() / (T::one() / self.barrier_factor).ln();
        // Guard against 0.1^10 landing a hair under 1e-10.
        let stages = (ratio + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1;
        (0..stages)
            .map(|k| self.barrier_init * self.barrier_factor.powi(k as i32))
            .collect()
    }
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::one(),
            tol: T::lit(1e-8),
            max_newton_iters: 100,
            barrier_init: T::one(),
            barrier_factor: T::lit(0.1),
            barrier_min: T::lit(1e-10),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Converged,
    MaxIters,
    Infeasible,
}

/// Lagrange multipliers: `equality` for `sum(w) = target * p`, `bounds[j] >= 0`
/// for `sign * w_j >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers<T> {
    pub equality: T,
    pub bounds: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult<T> {
    pub w: Vec<T>,
    pub intercept: T,
    pub status: SolverStatus,
    pub kkt_residual: T,
    pub objective: T,
    pub multipliers: Multipliers<T>,
    pub newton_iters: usize,
}

impl<T: Scalar> SolverResult<T> {
    /// Largest violation of the equality or sign constraints.
    pub fn constraint_violation(&self, constraints: ConstraintSet) -> T {
        constraint_violation(&self.w, constraints)
    }

    /// Whether the weights may be used despite a non-converged status.
    pub fn is_usable(&self, constraints: ConstraintSet) -> bool {
        self.w.iter().all(|v| v.is_finite())
            && (self.status == SolverStatus::Converged || self.constraint_violation(constraints) <= T::lit(1e-6))
    }
}

pub fn constraint_violation<T: Scalar>(w: &[T], constraints: ConstraintSet) -> T {
    let p = T::count(w.len());
    let mean = w.iter().copied().sum::<T>() / p;
    let mut worst = (mean - constraints.target_mean::<T>()).abs();
    if let Some(s) = constraints.sign::<T>() {
        for &v in w {
            worst = worst.max(-(s * v));
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    Logistic,
    LeastSquares,
}

/// A fully specified weight-learning problem instance.
#[derive(Clone, Copy, Debug)]
pub struct WeightProblem<'a, T> {
    pub curves: &'a Curves<T>,
    /// 0/1 labels for [`Loss::Logistic`], real targets for [`Loss::LeastSquares`].
    pub response: &'a [T],
    pub grid: Grid<T>,
    pub loss: Loss,
    pub constraints: ConstraintSet,
    pub lambda: T,
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<'a, T: Scalar> WeightProblem<'a, T> {
    pub fn n_weights(&self) -> usize {
        self.curves.n_cols()
    }

    fn linear_predictor(&self, intercept: T, w: &[T]) -> Vec<T> {
        let h = self.grid.cell_width();
        self.curves.rows().map(|x| intercept + h * dot(x, w)).collect()
    }

    /// Objective value (without any barrier term).
    pub fn objective(&self, intercept: T, w: &[T]) -> T {
        let eta = self.linear_predictor(intercept, w);
        let data: T = match self.loss {
            Loss::Logistic => eta.iter().zip(self.response).map(|(&e, &y)| softplus(e) - y * e).sum(),
            Loss::LeastSquares => eta.iter().zip(self.response).map(|(&e, &y)| (y - e) * (y - e)).sum(),
        };
        data + self.lambda * self.grid.cell_width() * dot(w, w)
    }

    /// Returns `(d/dw0, d/dw)` of the objective.
    pub fn gradient(&self, intercept: T, w: &[T]) -> (T, Vec<T>) {
        let (g0, gw, _) = self.derivatives(intercept, w, false);
        (g0, gw)
    }

    /// Gradient plus, optionally, the Hessian over `(w0, w)` as a dense
    /// row-major `(p+1) x (p+1)` matrix (upper triangle filled, mirrored).
    fn derivatives(&self, intercept: T, w: &[T], hessian: bool) -> (T, Vec<T>, Vec<T>) {
        let p = self.n_weights();
        let h = self.grid.cell_width();
        let eta = self.linear_predictor(intercept, w);
        let two = T::lit(2.0);
        let mut g0 = T::zero();
        let mut gw = vec![T::zero(); p];
        let n = p + 1;
        let mut hess = if hessian { vec![T::zero(); n * n] } else { Vec::new() };
        let mut z = vec![T::zero(); n];
        for (i, x) in self.curves.rows().enumerate() {
            let (r, d) = match self.loss {
                Loss::Logistic => {
                    let s = sigmoid(eta[i]);
                    (s - self.response[i], s * (T::one() - s))
                }
                Loss::LeastSquares => (two * (eta[i] - self.response[i]), two),
            };
            g0 = g0 + r;
            let hr = h * r;
            for (g, &xj) in gw.iter_mut().zip(x) {
                *g = *g + hr * xj;
            }
            if hessian {
                z[0] = T::one();
                for (zj, &xj) in z[1..].iter_mut().zip(x) {
                    *zj = h * xj;
                }
                for a in 0..n {
                    let da = d * z[a];
                    let row = &mut hess[a * n + a..a * n + n];
                    for (hv, &zb) in row.iter_mut().zip(&z[a..]) {
                        *hv = *hv + da * zb;
                    }
                }
            }
        }
        let ridge = two * self.lambda * h;
        for (g, &wj) in gw.iter_mut().zip(w) {
            *g = *g + ridge * wj;
        }
        if hessian {
            for j in 1..n {
                hess[j * n + j] = hess[j * n + j] + ridge;
            }
            for a in 0..n {
                for b in a + 1..n {
                    hess[b * n + a] = hess[a * n + b];
                }
            }
        }
        (g0, gw, hess)
    }

    /// Multiplier estimates for a bare primal point.
    ///
    /// The equality multiplier is fitted on the coordinates strictly inside
    /// the sign constraint (all of them when sign-free); bound multipliers are
    /// the remaining positive parts of the stationarity residual.
    pub fn estimate_multipliers(&self, intercept: T, w: &[T]) -> Multipliers<T> {
        let (g0, g) = self.gradient(intercept, w);
        let p = w.len();
        match self.constraints.sign::<T>() {
            None => {
                let nu = -g.iter().copied().sum::<T>() / T::count(p);
                Multipliers {
                    equality: nu,
                    bounds: vec![T::zero(); p],
                }
            }
            Some(s) => {
                // Which weights count as active is a judgement call near the
                // bound, so try a few cutoffs and keep the best certificate.
                let scale = max_abs(w).max(T::one());
                let mut best: Option<(T, Multipliers<T>)> = None;
                for cutoff in [1e-8, 1e-6, 1e-4, 1e-2] {
                    let cutoff = T::lit(cutoff) * scale;
                    let free: Vec<T> = g
                        .iter()
                        .zip(w)
                        .filter(|(_, &wj)| s * wj > cutoff)
                        .map(|(&gj, _)| gj)
                        .collect();
                    let nu = if free.is_empty() {
                        -g.iter().copied().sum::<T>() / T::count(p)
                    } else {
                        -free.iter().copied().sum::<T>() / T::count(free.len())
                    };
                    let bounds = g.iter().map(|&gj| (s * (gj + nu)).max(T::zero())).collect();
                    let m = Multipliers { equality: nu, bounds };
                    let r = residual(g0, &g, w, self.constraints, &m);
                    if best.as_ref().is_none_or(|(b, _)| r < *b) {
                        best = Some((r, m));
                    }
                }
                best.map(|(_, m)| m).expect("at least one cutoff")
            }
        }
    }
}

/// Max-norm KKT residual of `(intercept, w)` with the given (or estimated)
/// multipliers: stationarity in `w0` and `w`, primal feasibility, dual
/// feasibility and complementary slackness.
pub fn kkt_residual<T: Scalar>(problem: &WeightProblem<'_, T>, intercept: T, w: &[T], multipliers: Option<&Multipliers<T>>) -> T {
    let estimated;
    let m = match multipliers {
        Some(m) => m,
        None => {
            estimated = problem.estimate_multipliers(intercept, w);
            &estimated
        }
    };
    let (g0, g) = problem.gradient(intercept, w);
    residual(g0, &g, w, problem.constraints, m)
}

fn residual<T: Scalar>(g0: T, g: &[T], w: &[T], constraints: ConstraintSet, m: &Multipliers<T>) -> T {
    let s = constraints.sign::<T>().unwrap_or(T::zero());
    let mut r = g0.abs().max(constraint_violation(w, constraints));
    for j in 0..w.len() {
        let z = m.bounds[j];
        r = r.max((g[j] + m.equality - s * z).abs());
        r = r.max(-z);
        r = r.max((z * s * w[j]).abs());
    }
    r
}

fn validate_inputs<T: Scalar>(curves: &Curves<T>, response_len: usize, grid: &Grid<T>, config: &SolverConfig<T>) -> Result<()> {
    config.validate()?;
    check_len(grid.len(), curves.n_cols())?;
    check_len(curves.n_rows(), response_len)?;
    if curves.n_rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "weight learning needs at least 2 samples, got {}",
            curves.n_rows()
        )));
    }
    Ok(())
}

/// Ridge logistic weight learning on standardized curves.
pub fn solve_logistic_weights<T: Scalar>(
    curves: &Curves<T>,
    labels: &[bool],
    grid: &Grid<T>,
    constraints: ConstraintSet,
    config: &SolverConfig<T>,
) -> Result<SolverResult<T>> {
    validate_inputs(curves, labels.len(), grid, config)?;
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass);
    }
    let y: Vec<T> = labels.iter().map(|&l| if l { T::one() } else { T::zero() }).collect();
    let problem = WeightProblem {
        curves,
        response: &y,
        grid: *grid,
        loss: Loss::Logistic,
        constraints,
        lambda: config.lambda,
    };
    solve(&problem, config)
}

/// Ridge least-squares weight learning on standardized curves.
pub fn solve_ls_weights<T: Scalar>(
    curves: &Curves<T>,
    targets: &[T],
    grid: &Grid<T>,
    constraints: ConstraintSet,
    config: &SolverConfig<T>,
) -> Result<SolverResult<T>> {
    validate_inputs(curves, targets.len(), grid, config)?;
    if targets.iter().all(|&t| t == targets[0]) {
        return Err(Error::ConstantTarget);
    }
    let problem = WeightProblem {
        curves,
        response: targets,
        grid: *grid,
        loss: Loss::LeastSquares,
        constraints,
        lambda: config.lambda,
    };
    solve(&problem, config)
}

/// Iterate of the barrier method.
struct Iterate<T> {
    intercept: T,
    w: Vec<T>,
}

/// Objective plus barrier `-mu * sum_j log(s w_j)`; `None` outside the domain.
fn barrier_objective<T: Scalar>(problem: &WeightProblem<'_, T>, x: &Iterate<T>, mu: T, sign: Option<T>) -> Option<T> {
    let mut value = problem.objective(x.intercept, &x.w);
    if let Some(s) = sign {
        let mut log_sum = T::zero();
        for &wj in &x.w {
            let v = s * wj;
            if v.is_nan() || v <= T::zero() {
                return None;
            }
            log_sum = log_sum + v.ln();
        }
        value = value - mu * log_sum;
    }
    value.is_finite().then_some(value)
}

/// Outcome of one centering step.
struct Centering {
    iters: usize,
}

/// Equality-constrained damped Newton minimization of the barrier subproblem.
fn center<T: Scalar>(
    problem: &WeightProblem<'_, T>,
    x: &mut Iterate<T>,
    mu: T,
    sign: Option<T>,
    config: &SolverConfig<T>,
    tight: bool,
) -> Result<Centering> {
    let p = problem.n_weights();
    let n = p + 1;
    let alpha = T::lit(0.01);
    let beta = T::lit(0.5);
    // Newton decrement threshold for intermediate stages.
    let loose = T::lit(1e-6);
    let stat_tol = config.tol * T::lit(0.1);

    let mut iters = 0;
    loop {
        let (g0, gw, mut hess) = problem.derivatives(x.intercept, &x.w, true);
        let mut grad = Vec::with_capacity(n);
        grad.push(g0);
        grad.extend_from_slice(&gw);
        if sign.is_some() {
            for j in 0..p {
                let wj = x.w[j];
                grad[j + 1] = grad[j + 1] - mu / wj;
                hess[(j + 1) * n + j + 1] = hess[(j + 1) * n + j + 1] + mu / (wj * wj);
            }
        }
        let nu = -grad[1..].iter().copied().sum::<T>() / T::count(p);
        let stationarity = grad[0]
            .abs()
            .max(grad[1..].iter().fold(T::zero(), |m, &g| m.max((g + nu).abs())));
        if tight && stationarity <= stat_tol {
            return Ok(Centering { iters });
        }
        if iters >= config.max_newton_iters {
            return Ok(Centering { iters });
        }

        // KKT system [H a; a' 0] [dx; nu] = [-grad; 0] with a = (0, 1, ..., 1).
        cholesky_in_place(&mut hess, n)?;
        let mut u: Vec<T> = grad.iter().map(|&g| -g).collect();
        cholesky_solve(&hess, n, &mut u);
        let mut v = vec![T::one(); n];
        v[0] = T::zero();
        cholesky_solve(&hess, n, &mut v);
        let au: T = u[1..].iter().copied().sum();
        let av: T = v[1..].iter().copied().sum();
        if av.is_nan() || av <= T::zero() {
            return Err(Error::Singular);
        }
        let step_nu = au / av;
        let dx: Vec<T> = u.iter().zip(&v).map(|(&ui, &vi)| ui - step_nu * vi).collect();
        let slope = dot(&grad, &dx);
        let decrement = -slope;
        if !decrement.is_finite() {
            return Err(Error::Singular);
        }
        if !tight && decrement * T::lit(0.5) <= loose {
            return Ok(Centering { iters });
        }

        // Fraction to the boundary keeps the sign constraints strict.
        let mut t = T::one();
        if let Some(s) = sign {
            for j in 0..p {
                let d = s * dx[j + 1];
                if d < T::zero() {
                    t = t.min(T::lit(0.99) * (s * x.w[j]) / -d);
                }
            }
        }
        let current = barrier_objective(problem, x, mu, sign).ok_or(Error::Singular)?;
        let mut accepted = None;
        // Once the predicted decrease is below the objective's rounding level
        // the Armijo test is noise; the full Newton step is then safe.
        let rounding = T::epsilon() * T::lit(1e3) * current.abs().max(T::one());
        let full_step = decrement <= rounding;
        for _ in 0..60 {
            let trial = Iterate {
                intercept: x.intercept + t * dx[0],
                w: x.w.iter().zip(&dx[1..]).map(|(&wj, &d)| wj + t * d).collect(),
            };
            if let Some(value) = barrier_objective(problem, &trial, mu, sign) {
                if full_step || value <= current + alpha * t * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            t = t * beta;
        }
        iters += 1;
        match accepted {
            Some(next) => *x = next,
            // No decrease representable: the iterate is as good as it gets.
            None => return Ok(Centering { iters }),
        }
    }
}

fn solve<T: Scalar>(problem: &WeightProblem<'_, T>, config: &SolverConfig<T>) -> Result<SolverResult<T>> {
    let p = problem.n_weights();
    let constraints = problem.constraints;
    let sign = constraints.sign::<T>();
    let mut x = Iterate {
        intercept: T::zero(),
        w: constraints.initial_weights(p),
    };

    // The final status is decided by the KKT residual below; the centering
    // flags only control the stage loop.
    let mut iters = 0;
    let mu_final = match sign {
        None => {
            iters += center(problem, &mut x, T::zero(), None, config, true)?.iters;
            T::zero()
        }
        Some(_) => {
            let schedule = config.barrier_schedule();
            let last = schedule.len() - 1;
            for (k, &mu) in schedule.iter().enumerate() {
                iters += center(problem, &mut x, mu, sign, config, k == last)?.iters;
            }
            schedule[last]
        }
    };

    // Two multiplier certificates: the central-path duals z_j = mu / |w_j|
    // and a fit to the final gradient. Either proves optimality; keep the
    // one with the smaller residual.
    let estimated = problem.estimate_multipliers(x.intercept, &x.w);
    let (multipliers, kkt) = match sign {
        None => {
            let kkt = kkt_residual(problem, x.intercept, &x.w, Some(&estimated));
            (estimated, kkt)
        }
        Some(s) => {
            let (_, g) = problem.gradient(x.intercept, &x.w);
            let bounds: Vec<T> = x.w.iter().map(|&wj| mu_final / wj.abs()).collect();
            let nu = -g.iter().zip(&bounds).map(|(&gj, &z)| gj - s * z).sum::<T>() / T::count(p);
            let central = Multipliers { equality: nu, bounds };
            let kkt_central = kkt_residual(problem, x.intercept, &x.w, Some(&central));
            let kkt_estimated = kkt_residual(problem, x.intercept, &x.w, Some(&estimated));
            if kkt_estimated < kkt_central {
                (estimated, kkt_estimated)
            } else {
                (central, kkt_central)
            }
        }
    };
    let objective = problem.objective(x.intercept, &x.w);
    let finite = x.w.iter().all(|v| v.is_finite()) && x.intercept.is_finite();
    let status = if !finite || constraint_violation(&x.w, constraints) > T::lit(1e-6) {
        SolverStatus::Infeasible
    } else if kkt <= config.tol {
        SolverStatus::Converged
    } else {
        SolverStatus::MaxIters
    };
    Ok(SolverResult {
        w: x.w,
        intercept: x.intercept,
        status,
        kkt_residual: kkt,
        objective,
        multipliers,
        newton_iters: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(p: usize) -> Grid<f64> {
        Grid::new(0.0, 1.0, p).unwrap()
    }

    fn toy_curves() -> Curves<f64> {
        Curves::from_rows(&[
            vec![0.3, -1.2, 0.8],
            vec![-0.7, 0.4, 1.1],
            vec![1.5, 0.2, -0.3],
            vec![-0.2, -0.9, 0.6],
            vec![0.9, 1.3, -1.0],
            vec![-1.1, 0.5, 0.1],
        ])
        .unwrap()
    }

    #[test]
    fn barrier_schedule_has_eleven_stages() {
        let s = SolverConfig::<f64>::default().barrier_schedule();
        assert_eq!(s.len(), 11);
        assert_eq!(s[0], 1.0);
        assert!((s[10] - 1e-10).abs() < 1e-20);
    }

    #[test]
    fn config_rejects_nonpositive_lambda() {
        let c = SolverConfig::with_lambda(0.0);
        assert!(solve_ls_weights(
            &toy_curves(),
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            &grid(3),
            ConstraintSet::SignFree,
            &c
        )
        .is_err());
    }

    #[test]
    fn degenerate_responses() {
        let c = SolverConfig::default();
        let curves = toy_curves();
        assert!(matches!(
            solve_logistic_weights(&curves, &[true; 6], &grid(3), ConstraintSet::SignFree, &c),
            Err(Error::SingleClass)
        ));
        assert!(matches!(
            solve_ls_weights(&curves, &[2.5; 6], &grid(3), ConstraintSet::NonNegative, &c),
            Err(Error::ConstantTarget)
        ));
        let one = Curves::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            solve_ls_weights(&one, &[1.0], &grid(3), ConstraintSet::SignFree, &c),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn converged_results_satisfy_constraints() {
        let c = SolverConfig::with_lambda(0.1);
        let curves = toy_curves();
        let labels = [true, false, true, false, true, false];
        let targets = [1.0, -0.5, 2.0, 0.3, -1.2, 0.7];
        for cs in ConstraintSet::ALL {
            for r in [
                solve_logistic_weights(&curves, &labels, &grid(3), cs, &c).unwrap(),
                solve_ls_weights(&curves, &targets, &grid(3), cs, &c).unwrap(),
            ] {
                assert_eq!(r.status, SolverStatus::Converged, "{cs:?} {r:?}");
                assert!(r.kkt_residual <= c.tol);
                let mean = r.w.iter().sum::<f64>() / 3.0;
                assert!((mean - cs.target_mean::<f64>()).abs() <= c.tol);
                if let Some(s) = cs.sign::<f64>() {
                    assert!(r.w.iter().all(|&v| s * v >= -c.tol));
                }
            }
        }
    }

    #[test]
    fn infeasible_point_has_large_residual() {
        let curves = toy_curves();
        let y = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let problem = WeightProblem {
            curves: &curves,
            response: &y,
            grid: grid(3),
            loss: Loss::Logistic,
            constraints: ConstraintSet::NonNegative,
            lambda: 1.0,
        };
        assert!(kkt_residual(&problem, 0.0, &[0.0; 3], None) >= 1.0);
    }

    #[test]
    fn symmetric_logistic_data_has_zero_intercept() {
        // Each curve has a mirrored twin with the opposite label.
        let base = [
            vec![0.4, -1.0, 0.3, 1.2],
            vec![1.1, 0.2, -0.6, 0.5],
            vec![-0.3, 0.9, 0.8, -0.2],
        ];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (k, r) in base.iter().enumerate() {
            rows.push(r.clone());
            labels.push(k % 2 == 0);
            rows.push(r.iter().map(|v| -v).collect());
            labels.push(k % 2 != 0);
        }
        let curves = Curves::from_rows(&rows).unwrap();
        let r = solve_logistic_weights(
            &curves,
            &labels,
            &grid(4),
            ConstraintSet::SignFree,
            &SolverConfig::with_lambda(0.5),
        )
        .unwrap();
        assert_eq!(r.status, SolverStatus::Converged);
        assert!(r.intercept.abs() <= 1e-6, "{}", r.intercept);
    }

    #[test]
    fn perturbing_the_optimum_increases_the_objective() {
        let curves = toy_curves();
        let targets = [1.0, -0.5, 2.0, 0.3, -1.2, 0.7];
        let c = SolverConfig::with_lambda(0.3);
        let r = solve_ls_weights(&curves, &targets, &grid(3), ConstraintSet::SignFree, &c).unwrap();
        let problem = WeightProblem {
            curves: &curves,
            response: &targets,
            grid: grid(3),
            loss: Loss::LeastSquares,
            constraints: ConstraintSet::SignFree,
            lambda: 0.3,
        };
        for j in 0..3 {
            let mut w = r.w.clone();
            w[j] += 0.1;
            // Re-project onto mean(w) = 1.
            let shift = (w.iter().sum::<f64>() / 3.0) - 1.0;
            w.iter_mut().for_each(|v| *v -= shift);
            assert!(problem.objective(r.intercept, &w) > r.objective);
        }
    }

    #[test]
    fn uninformative_targets_give_uniform_weights() {
        // Every column has zero empirical covariance with the targets, and
        // each curve is flat so the data term is fixed once mean(w) = 1.
        let curves = Curves::from_rows(&[vec![1.0; 3], vec![1.0; 3], vec![-2.0; 3], vec![-2.0; 3]]).unwrap();
        let targets = [1.0, -1.0, 1.0, -1.0];
        let r = solve_ls_weights(
            &curves,
            &targets,
            &grid(3),
            ConstraintSet::SignFree,
            &SolverConfig::with_lambda(0.7),
        )
        .unwrap();
        for v in &r.w {
            assert!((v - 1.0).abs() < 1e-10, "{:?}", r.w);
        }
    }
}
