//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use mucart::fdata::{Curves, FunctionalCovariate, FunctionalDataset, Grid, Response};
use mucart::optim::ConstraintSet;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_curves(rng: &mut ChaCha8Rng, m: usize, p: usize) -> Curves<f64> {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let shift: f64 = rng.random_range(-1.0..1.0);
            (0..p).map(|_| shift + rng.random_range(-2.0..2.0)).collect()
        })
        .collect();
    Curves::from_rows(&rows).unwrap()
}

pub fn dataset(covariates: Vec<(Curves<f64>, Grid<f64>)>, response: Response<f64>) -> FunctionalDataset<f64> {
    let covs = covariates
        .into_iter()
        .enumerate()
        .map(|(q, (c, g))| FunctionalCovariate::new(format!("x{}", q + 1), g, c).unwrap())
        .collect();
    FunctionalDataset::new(covs, response).unwrap()
}

/// Loss of the weight-learning problems, written out from scratch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleLoss {
    Logistic,
    LeastSquares,
}

pub struct OracleProblem<'a> {
    /// Rows of `h * x_i`, prefixed by a 1 for the intercept.
    pub z: DMatrix<f64>,
    pub y: &'a [f64],
    pub loss: OracleLoss,
    pub lambda: f64,
    pub h: f64,
    pub constraints: ConstraintSet,
}

impl<'a> OracleProblem<'a> {
    pub fn new(curves: &Curves<f64>, y: &'a [f64], grid: &Grid<f64>, loss: OracleLoss, cs: ConstraintSet, lambda: f64) -> Self {
        let (m, p) = (curves.n_rows(), curves.n_cols());
        let h = grid.domain_length() / p as f64;
        let z = DMatrix::from_fn(m, p + 1, |i, j| if j == 0 { 1.0 } else { h * curves.row(i)[j - 1] });
        Self {
            z,
            y,
            loss,
            lambda,
            h,
            constraints: cs,
        }
    }

    pub fn p(&self) -> usize {
        self.z.ncols() - 1
    }

    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        let eta = &self.z * theta;
        let data: f64 = match self.loss {
            OracleLoss::Logistic => eta
                .iter()
                .zip(self.y)
                .map(|(&e, &y)| {
                    let sp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
                    sp - y * e
                })
                .sum(),
            OracleLoss::LeastSquares => eta.iter().zip(self.y).map(|(&e, &y)| (y - e).powi(2)).sum(),
        };
        let ridge: f64 = theta.rows(1, self.p()).iter().map(|w| w * w).sum();
        data + self.lambda * self.h * ridge
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let eta = &self.z * theta;
        let r = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(self.y).map(|(&e, &y)| match self.loss {
                OracleLoss::Logistic => 1.0 / (1.0 + (-e).exp()) - y,
                OracleLoss::LeastSquares => 2.0 * (e - y),
            }),
        );
        let mut g = self.z.transpose() * r;
        for j in 1..=self.p() {
            g[j] += 2.0 * self.lambda * self.h * theta[j];
        }
        g
    }

    /// Upper bound on the Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64 {
        let ztz = self.z.transpose() * &self.z;
        let top = ztz.symmetric_eigen().eigenvalues.max();
        let curvature = match self.loss {
            OracleLoss::Logistic => 0.25,
            OracleLoss::LeastSquares => 2.0,
        };
        curvature * top + 2.0 * self.lambda * self.h
    }

    /// Euclidean projection of `w` onto the feasible set.
    pub fn project(&self, w: &mut [f64]) {
        let p = w.len() as f64;
        let target = self.constraints.target_mean::<f64>() * p;
        match self.constraints {
            ConstraintSet::SignFree => {
                let shift = (w.iter().sum::<f64>() - target) / p;
                w.iter_mut().for_each(|v| *v -= shift);
            }
            ConstraintSet::NonNegative => project_simplex(w, target),
            ConstraintSet::NonPositive => {
                w.iter_mut().for_each(|v| *v = -*v);
                project_simplex(w, -target);
                w.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }

    /// Accelerated projected gradient with gradient-based adaptive restart.
    /// Stops once the gradient mapping `L * (y - P(y - grad/L))` is below
    /// `tol` in max-norm.
    pub fn solve(&self, tol: f64, max_iters: usize) -> (f64, Vec<f64>) {
        let p = self.p();
        let step = 1.0 / self.lipschitz();
        let mut x = DVector::from_element(p + 1, self.constraints.target_mean::<f64>());
        x[0] = 0.0;
        let mut y = x.clone();
        let mut t = 1.0f64;
        for _ in 0..max_iters {
            let g = self.gradient(&y);
            let mut next = &y - step * g;
            let mut w: Vec<f64> = next.rows(1, p).iter().copied().collect();
            self.project(&mut w);
            for j in 0..p {
                next[j + 1] = w[j];
            }
            if (&next - &y).amax() / step < tol {
                x = next;
                break;
            }
            if (&y - &next).dot(&(&next - &x)) > 0.0 {
                // momentum points uphill: restart from the new point
                t = 1.0;
                y = next.clone();
                x = next;
                continue;
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            y = &next + ((t - 1.0) / t_next) * (&next - &x);
            x = next;
            t = t_next;
        }
        (x[0], x.rows(1, p).iter().copied().collect())
    }

    /// Sign-free least squares through its KKT linear system.
    pub fn kkt_solve(&self) -> (f64, Vec<f64>) {
        assert_eq!(self.loss, OracleLoss::LeastSquares);
        assert_eq!(self.constraints, ConstraintSet::SignFree);
        let p = self.p();
        let n = p + 2;
        let mut a = DMatrix::zeros(n, n);
        let ztz = self.z.transpose() * &self.z;
        a.view_mut((0, 0), (p + 1, p + 1)).copy_from(&(2.0 * ztz));
        for j in 1..=p {
            a[(j, j)] += 2.0 * self.lambda * self.h;
            a[(j, p + 1)] = 1.0;
            a[(p + 1, j)] = 1.0;
        }
        let zty = self.z.transpose() * DVector::from_column_slice(self.y);
        let mut b = DVector::zeros(n);
        b.rows_mut(0, p + 1).copy_from(&(2.0 * zty));
        b[p + 1] = p as f64;
        let sol = a.lu().solve(&b).expect("nonsingular KKT system");
        (sol[0], sol.rows(1, p).iter().copied().collect())
    }
}

/// Projection onto `{w >= 0, sum(w) = mass}` by sorting.
pub fn project_simplex(w: &mut [f64], mass: f64) {
    let mut u: Vec<f64> = w.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumulative += uk;
        let candidate = (cumulative - mass) / (k + 1) as f64;
        if uk - candidate > 0.0 {
            tau = candidate;
        }
    }
    w.iter_mut().for_each(|v| *v = (*v - tau).max(0.0));
}

/// Node responses owned by the brute-force split oracle.
#[derive(Clone, Debug)]
pub enum OracleResponse {
    Labels(Vec<usize>, usize),
    Targets(Vec<f64>),
}

impl OracleResponse {
    /// Loss of the samples `members`, accumulated in the given order.
    pub fn loss(&self, members: &[usize]) -> f64 {
        match self {
            OracleResponse::Labels(l, k) => {
                let mut counts = vec![0usize; *k];
                for &i in members {
                    counts[l[i]] += 1;
                }
                let n = members.len() as f64;
                n - counts.iter().fold(0.0, |acc, &c| acc + (c * c) as f64) / n
            }
            OracleResponse::Targets(t) => {
                let n = members.len() as f64;
                let mean = members.iter().map(|&i| t[i]).sum::<f64>() / n;
                members.iter().fold(0.0, |acc, &i| acc + (t[i] - mean).powi(2))
            }
        }
    }
}

/// Best split of a set of columns by trying every "value <= v" partition.
///
/// Returns `(column, left members, impurity)`; ties keep the earliest column
/// and then the smallest threshold.
pub fn brute_force_split(columns: &[Vec<f64>], response: &OracleResponse, min_leaf: usize) -> Option<(usize, Vec<usize>, f64)> {
    let mut best: Option<(usize, Vec<usize>, f64)> = None;
    for (c, values) in columns.iter().enumerate() {
        let m = values.len();
        let mut distinct: Vec<f64> = values.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        for &v in &distinct[..distinct.len().saturating_sub(1)] {
            // members in (value, index) order
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
            let left: Vec<usize> = order.iter().copied().filter(|&i| values[i] <= v).collect();
            let right: Vec<usize> = order.iter().copied().filter(|&i| values[i] > v).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let impurity = response.loss(&left) + response.loss(&right);
            if best.as_ref().is_none_or(|b| impurity < b.2) {
                let mut members = left;
                members.sort_unstable();
                best = Some((c, members, impurity));
            }
        }
    }
    best
}

/// Comparison of one interior-point solve against the oracles.
#[derive(Clone, Debug)]
pub struct SolverCase {
    pub converged: bool,
    pub objective_gap: f64,
    pub w_gap: f64,
    pub violation: f64,
    /// Max-norm distance to the KKT linear solve (sign-free least squares only).
    pub kkt_gap: Option<f64>,
    pub status: String,
}

/// Draws a random instance with `p <= 10`, `M <= 20` and compares the solver
/// with the projected-gradient oracle.
pub fn solver_case(seed: u64, loss: OracleLoss, cs: ConstraintSet) -> SolverCase {
    use mucart::optim::{solve_logistic_weights, solve_ls_weights, SolverConfig, SolverStatus};
    let mut r = rng(seed);
    let p = r.random_range(2..=10);
    let m = r.random_range(6..=20);
    let start: f64 = r.random_range(-1.0..1.0);
    let grid = Grid::new(start, start + r.random_range(0.5..3.0), p).unwrap();
    let curves = random_curves(&mut r, m, p);
    let lambda = 10f64.powf(r.random_range(-1.5..0.7));
    let config = SolverConfig::with_lambda(lambda);
    let (result, y): (_, Vec<f64>) = match loss {
        OracleLoss::Logistic => {
            let mut labels: Vec<bool> = (0..m).map(|_| r.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let y = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
            (solve_logistic_weights(&curves, &labels, &grid, cs, &config).unwrap(), y)
        }
        OracleLoss::LeastSquares => {
            let y: Vec<f64> = (0..m).map(|_| r.random_range(-3.0..3.0)).collect();
            (solve_ls_weights(&curves, &y, &grid, cs, &config).unwrap(), y)
        }
    };
    let problem = OracleProblem::new(&curves, &y, &grid, loss, cs, lambda);
    let (w0, w) = problem.solve(1e-10, 2_000_000);
    let mut theta_oracle = DVector::from_element(p + 1, 0.0);
    let mut theta_ours = DVector::from_element(p + 1, 0.0);
    theta_oracle[0] = w0;
    theta_ours[0] = result.intercept;
    for j in 0..p {
        theta_oracle[j + 1] = w[j];
        theta_ours[j + 1] = result.w[j];
    }
    let f_oracle = problem.objective(&theta_oracle);
    let f_ours = problem.objective(&theta_ours);
    let w_gap = result.w.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let kkt_gap = (loss == OracleLoss::LeastSquares && cs == ConstraintSet::SignFree).then(|| {
        let (k0, kw) = problem.kkt_solve();
        kw.iter()
            .zip(&result.w)
            .map(|(a, b)| (a - b).abs())
            .fold((k0 - result.intercept).abs(), f64::max)
    });
    SolverCase {
        converged: result.status == SolverStatus::Converged,
        objective_gap: (f_ours - f_oracle).abs() / f_oracle.abs().max(1.0),
        w_gap,
        violation: mucart::optim::constraint_violation(&result.w, cs),
        kkt_gap,
        status: format!(
            "{:?} kkt {:e} after {} Newton steps",
            result.status, result.kkt_residual, result.newton_iters
        ),
    }
}

/// Outcome of comparing the split search with brute-force enumeration on one
/// random node.
#[derive(Clone, Debug)]
pub struct SplitCase {
    pub measure_match: bool,
    pub axis_match: bool,
    pub detail: String,
}

fn random_node_weights(r: &mut ChaCha8Rng, q_count: usize, p: usize) -> mucart::weights::NodeWeights<f64> {
    use mucart::weights::{NodeWeight, NodeWeights, WeightKind};
    let covariates = (0..q_count)
        .map(|_| {
            let kinds: Vec<WeightKind> = WeightKind::ALL
                .into_iter()
                .filter(|&k| k == WeightKind::Uniform || r.random_bool(0.8))
                .collect();
            kinds
                .into_iter()
                .map(|kind| {
                    let values = match kind {
                        WeightKind::Uniform => vec![1.0; p],
                        WeightKind::Sgn => (0..p).map(|_| r.random_range(-2.0..2.0)).collect(),
                        _ => (0..p)
                            .map(|_| if r.random_bool(0.2) { 0.0 } else { r.random_range(0.0..2.0) })
                            .collect(),
                    };
                    NodeWeight { kind, values }
                })
                .collect()
        })
        .collect();
    NodeWeights {
        covariates,
        dropped: Vec::new(),
    }
}

/// Random node with `M <= 40`; even seeds are classification, odd regression.
pub fn split_case(seed: u64) -> SplitCase {
    use mucart::features::extract_features;
    use mucart::split::{axis_best_split, best_split, NodeResponse};
    let mut r = rng(seed);
    let m = r.random_range(4..=40);
    let p = r.random_range(2..=6);
    let q_count = r.random_range(1..=2);
    let coarse = r.random_bool(0.3);
    let grids: Vec<Grid<f64>> = (0..q_count)
        .map(|_| Grid::new(0.0, r.random_range(0.5..2.0), p).unwrap())
        .collect();
    let curves: Vec<Curves<f64>> = (0..q_count)
        .map(|_| {
            let c = random_curves(&mut r, m, p);
            if coarse {
                // duplicated values exercise the tie handling
                Curves::from_flat(m, p, c.as_flat().iter().map(|v| v.round()).collect()).unwrap()
            } else {
                c
            }
        })
        .collect();
    let min_leaf = r.random_range(1..=(m / 4).max(1));
    let weights = random_node_weights(&mut r, q_count, p);
    let (oracle_response, labels, targets);
    let response = if seed.is_multiple_of(2) {
        let k = r.random_range(2..=3);
        labels = (0..m).map(|_| r.random_range(0..k)).collect::<Vec<usize>>();
        oracle_response = OracleResponse::Labels(labels.clone(), k);
        NodeResponse::Labels {
            labels: &labels,
            n_classes: k,
        }
    } else {
        targets = (0..m).map(|_| r.random_range(-5.0..5.0)).collect::<Vec<f64>>();
        oracle_response = OracleResponse::Targets(targets.clone());
        NodeResponse::Targets(&targets)
    };
    let kind = response.loss_kind();

    // every (covariate, weight, feature) column in canonical order
    let mut columns = Vec::new();
    let mut ids = Vec::new();
    for q in 0..q_count {
        for w in &weights.covariates[q] {
            let nf = extract_features(&curves[q], &grids[q], w.kind, &w.values, response.node_labels()).unwrap();
            for col in nf.columns {
                ids.push((q, w.kind, col.feature));
                columns.push(col.values);
            }
        }
    }
    let ours = best_split(&curves, &grids, &weights, &response, kind, min_leaf).unwrap();
    let oracle = brute_force_split(&columns, &oracle_response, min_leaf);
    let mut detail = String::new();
    let measure_match = match (&ours, &oracle) {
        (None, None) => true,
        (Some(s), Some((c, members, impurity))) => {
            let col = ids
                .iter()
                .position(|&id| id == (s.covariate, s.weight_kind, s.feature))
                .expect("chosen column exists");
            let left: Vec<usize> = (0..m).filter(|&i| columns[col][i] <= s.threshold).collect();
            let ok = col == *c && &left == members && s.impurity == *impurity && s.left_count == left.len();
            if !ok {
                detail = format!("measure: ours col {col} imp {} vs oracle col {c} imp {impurity}", s.impurity);
            }
            ok
        }
        _ => {
            detail = format!("measure: ours {:?} vs oracle {:?}", ours.is_some(), oracle.is_some());
            false
        }
    };

    let axis_columns: Vec<Vec<f64>> = curves
        .iter()
        .flat_map(|c| (0..p).map(move |j| c.rows().map(|row| row[j]).collect::<Vec<f64>>()))
        .collect();
    let ours = axis_best_split(&curves, &response, kind, min_leaf).unwrap();
    let oracle = brute_force_split(&axis_columns, &oracle_response, min_leaf);
    let axis_match = match (&ours, &oracle) {
        (None, None) => true,
        (Some(s), Some((c, members, impurity))) => {
            let col = s.covariate * p + s.grid_index;
            let left: Vec<usize> = (0..m).filter(|&i| axis_columns[col][i] <= s.threshold).collect();
            let ok = col == *c && &left == members && s.impurity == *impurity;
            if !ok {
                detail += &format!(" axis: ours col {col} imp {} vs oracle col {c} imp {impurity}", s.impurity);
            }
            ok
        }
        _ => false,
    };
    SplitCase {
        measure_match,
        axis_match,
        detail,
    }
}

/// Worst deviations of the feature identities over one random case.
#[derive(Clone, Copy, Debug, Default)]
pub struct FeatureCase {
    pub self_cosine: f64,
    pub antipodal_cosine: f64,
    /// Most negative weighted variance under a nonnegative weight (0 if none).
    pub negative_variance: f64,
    pub mu_linearity: f64,
    pub uniform_mean: f64,
    pub uniform_variance: f64,
    pub uniform_cosine: f64,
}

impl FeatureCase {
    pub fn worst(&self) -> f64 {
        [
            self.self_cosine,
            self.antipodal_cosine,
            self.negative_variance,
            self.mu_linearity,
            self.uniform_mean,
            self.uniform_variance,
            self.uniform_cosine,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Checks the feature identities on a random curve pair, weight and grid.
pub fn feature_case(seed: u64) -> FeatureCase {
    use mucart::features::{f_mu, f_var, rho_w};
    let mut r = rng(seed);
    let p = r.random_range(2..=50);
    let start = r.random_range(-5.0..5.0);
    let grid = Grid::new(start, start + r.random_range(0.1..10.0), p).unwrap();
    let scale = 10f64.powf(r.random_range(-2.0..2.0));
    let mut x: Vec<f64> = (0..p).map(|_| scale * r.random_range(-1.0..1.0)).collect();
    let z: Vec<f64> = (0..p).map(|_| r.random_range(-3.0..3.0)).collect();
    x[0] += scale; // keep the weighted norm away from zero
    let mut w: Vec<f64> = (0..p)
        .map(|_| if r.random_bool(0.2) { 0.0 } else { r.random_range(0.0..3.0) })
        .collect();
    w[0] = w[0].max(0.5);
    let mass = w.iter().sum::<f64>() / p as f64;
    w.iter_mut().for_each(|v| *v /= mass);
    let ones = vec![1.0; p];
    let (a, b) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));

    let neg_x: Vec<f64> = x.iter().map(|v| -v).collect();
    let combo: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| a * xi + b * zi).collect();
    let h = grid.domain_length() / p as f64;
    let mean = x.iter().sum::<f64>() / p as f64;
    let var = h * x.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let xz: f64 = x.iter().zip(&z).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mu = |v: &[f64], w: &[f64]| f_mu(v, w, &grid).unwrap();
    FeatureCase {
        self_cosine: (rho_w(&x, &x, &w, &grid).unwrap() - 1.0).abs(),
        antipodal_cosine: (rho_w(&x, &neg_x, &w, &grid).unwrap() + 1.0).abs(),
        negative_variance: (-f_var(&x, &w, &grid).unwrap()).max(0.0),
        mu_linearity: rel(mu(&combo, &w), a * mu(&x, &w) + b * mu(&z, &w)) / scale.max(1.0),
        uniform_mean: rel(mu(&x, &ones), mean),
        uniform_variance: rel(f_var(&x, &ones, &grid).unwrap(), var),
        uniform_cosine: (rho_w(&x, &z, &ones, &grid).unwrap() - xz / (nx * nz)).abs(),
    }
}
