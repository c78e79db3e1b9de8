//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//! minimize   ½ Uᵀ H U + Uᵀ g
//! subject to l ≤ C U ≤ u
//! ```
//!
//! with the operator-splitting (ADMM) iteration popularized by OSQP:
//!
//! ```text
//! (H + εI + Cᵀ ρ C) x̃ = ε x − g + Cᵀ(ρ z − y)
//! z̃ = C x̃
//! x  ← α x̃ + (1 − α) x
//! z⁺ = Π[l,u](α z̃ + (1 − α) z + y / ρ)
//! y  ← y + ρ (α z̃ + (1 − α) z − z⁺)
//! ```
//!
//! The iteration runs on a Ruiz-equilibrated copy of the problem; residuals
//! and the termination test are always evaluated on the original data. `ρ`
//! is a per-row diagonal fixed for the whole solve (`0.1·trace(H̄)/n` on the
//! scaled Hessian, stiffer on equality rows). The KKT matrix is factored once
//! and cached across solves that share `H` and `C`. After the iteration
//! stops, an active-set polish step solves the equality-constrained KKT
//! system on the detected active rows and keeps the result if it is at least
//! as accurate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Penalty multiplier applied to equality rows.
const EQUALITY_RHO_SCALE: f64 = 1e3;
/// Penalty for rows that are unbounded on both sides.
const FREE_ROW_RHO: f64 = 1e-6;
/// Iterations without residual improvement before the infeasibility
/// certificate is evaluated.
const STAGNATION_WINDOW: usize = 1000;
const INFEASIBILITY_TOL: f64 = 1e-5;

/// `min ½UᵀHU + Uᵀg  s.t.  l ≤ CU ≤ u`
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    /// Problem with no constraint rows.
    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            c: DMatrix::zeros(0, n),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.g.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.c.nrows()
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.g.dot(u)
    }

    /// Largest bound violation of `CU`.
    pub fn constraint_violation(&self, u: &DVector<f64>) -> f64 {
        let cu = &self.c * u;
        (0..cu.len())
            .map(|i| (self.lower[i] - cu[i]).max(cu[i] - self.upper[i]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// `‖HU + g + Cᵀλ‖∞`
    pub fn stationarity(&self, u: &DVector<f64>, multipliers: &DVector<f64>) -> f64 {
        (&self.h * u + &self.g + self.c.transpose() * multipliers).amax()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let m = self.num_constraints();
        let dims = [
            ("hessian rows", n, self.h.nrows()),
            ("hessian cols", n, self.h.ncols()),
            ("constraint cols", n, self.c.ncols()),
            ("lower bounds", m, self.lower.len()),
            ("upper bounds", m, self.upper.len()),
        ];
        for (what, expected, got) in dims {
            if expected != got {
                return Err(Error::DimensionMismatch { what, expected, got });
            }
        }
        let asymmetry = (&self.h - self.h.transpose()).amax();
        if !(asymmetry <= 1e-9) {
            return Err(Error::NonSymmetric { asymmetry });
        }
        if self.g.iter().chain(self.c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite entry in g or C".into()));
        }
        for row in 0..m {
            let (lower, upper) = (self.lower[row], self.upper[row]);
            if lower.is_nan() || upper.is_nan() || lower > upper {
                return Err(Error::InvertedBounds { row, lower, upper });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    MaxIters,
    PrimalInfeasible,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Solved => "solved",
            QpStatus::MaxIters => "max_iters",
            QpStatus::PrimalInfeasible => "primal_infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    /// Constraint multipliers, one per row of `C`.
    pub multipliers: DVector<f64>,
    /// Splitting variable `z ≈ CU`, kept for warm starts.
    pub z: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
}

/// Initial iterate for [`QpSolver::solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub u: DVector<f64>,
    pub z: Option<DVector<f64>>,
    pub multipliers: Option<DVector<f64>>,
}

impl WarmStart {
    pub fn primal(u: DVector<f64>) -> Self {
        Self {
            u,
            z: None,
            multipliers: None,
        }
    }
}

impl From<&QpSolution> for WarmStart {
    fn from(sol: &QpSolution) -> Self {
        Self {
            u: sol.u.clone(),
            z: Some(sol.z.clone()),
            multipliers: Some(sol.multipliers.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QpSettings {
    /// Stop when `max(primal_residual, dual_residual) < tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Over-relaxation.
    pub alpha: f64,
    /// Overrides the default `0.1·trace(H)/n` penalty.
    pub rho: Option<f64>,
    /// Diagonal regularization of the KKT matrix.
    pub sigma: f64,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 10_000,
            alpha: 1.6,
            rho: None,
            sigma: 1e-9,
            polish: true,
        }
    }
}

const RUIZ_ITERS: usize = 15;

// Ruiz equilibration of the KKT matrix [[H, Cᵀ], [C, 0]] plus a cost scale:
// H̄ = c·D H D, ḡ = c·D g, C̄ = E C D, bounds E l, E u.
struct Scaling {
    d: DVector<f64>,
    e: DVector<f64>,
    cost: f64,
}

impl Scaling {
    fn identity(n: usize, m: usize) -> Self {
        Self {
            d: DVector::from_element(n, 1.0),
            e: DVector::from_element(m, 1.0),
            cost: 1.0,
        }
    }

    fn compute(h: &DMatrix<f64>, c: &DMatrix<f64>) -> Self {
        let (n, m) = (h.nrows(), c.nrows());
        let mut s = Self::identity(n, m);
        let mut hs = h.clone();
        let mut cs = c.clone();
        let limit = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
        for _ in 0..RUIZ_ITERS {
            let dx = DVector::from_fn(n, |j, _| {
                let col = hs.column(j).amax().max(if m > 0 { cs.column(j).amax() } else { 0.0 });
                1.0 / limit(col).sqrt()
            });
            let dz = DVector::from_fn(m, |i, _| 1.0 / limit(cs.row(i).amax()).sqrt());
            for j in 0..n {
                for i in 0..n {
                    hs[(i, j)] *= dx[i] * dx[j];
                }
                for i in 0..m {
                    cs[(i, j)] *= dz[i] * dx[j];
                }
            }
            s.d.component_mul_assign(&dx);
            s.e.component_mul_assign(&dz);
        }
        let mean_col = if n > 0 {
            (0..n).map(|j| hs.column(j).amax()).sum::<f64>() / n as f64
        } else {
            1.0
        };
        s.cost = 1.0 / limit(mean_col);
        s
    }
}

struct Factorization {
    h: DMatrix<f64>,
    c: DMatrix<f64>,
    rho: DVector<f64>,
    scaling: Scaling,
    scaled_h: DMatrix<f64>,
    scaled_c: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// ADMM solver holding a cached KKT factorization.
///
/// Not re-entrant; give each thread its own instance.
pub struct QpSolver {
    pub settings: QpSettings,
    cache: Option<Factorization>,
    factorizations: usize,
}

impl std::fmt::Debug for QpSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QpSolver")
            .field("settings", &self.settings)
            .field("factorizations", &self.factorizations)
            .finish_non_exhaustive()
    }
}

impl Default for QpSolver {
    fn default() -> Self {
        Self::new(QpSettings::default())
    }
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self {
            settings,
            cache: None,
            factorizations: 0,
        }
    }

    /// Number of KKT factorizations performed so far.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    fn row_rho(&self, problem: &QpProblem, base: f64) -> DVector<f64> {
        DVector::from_fn(problem.num_constraints(), |i, _| {
            let (l, u) = (problem.lower[i], problem.upper[i]);
            if l == u {
                EQUALITY_RHO_SCALE * base
            } else if l == f64::NEG_INFINITY && u == f64::INFINITY {
                FREE_ROW_RHO
            } else {
                base
            }
        })
    }

    fn factor(&mut self, problem: &QpProblem) -> Result<()> {
        if let Some(f) = &self.cache {
            if f.h == problem.h && f.c == problem.c && f.rho == self.row_rho(problem, base_rho(&self.settings, &f.scaled_h)) {
                return Ok(());
            }
        }
        let n = problem.num_vars();
        let m = problem.num_constraints();
        let scaling = Scaling::compute(&problem.h, &problem.c);
        let scaled_h = DMatrix::from_fn(n, n, |i, j| scaling.cost * scaling.d[i] * problem.h[(i, j)] * scaling.d[j]);
        let scaled_c = DMatrix::from_fn(m, n, |i, j| scaling.e[i] * problem.c[(i, j)] * scaling.d[j]);
        let rho = self.row_rho(problem, base_rho(&self.settings, &scaled_h));

        let mut kkt = scaled_h.clone();
        for i in 0..n {
            kkt[(i, i)] += self.settings.sigma;
        }
        let rc = DMatrix::from_fn(m, n, |i, j| rho[i] * scaled_c[(i, j)]);
        kkt += scaled_c.transpose() * rc;
        let chol = Cholesky::new(kkt).ok_or(Error::Factorization)?;
        self.factorizations += 1;
        self.cache = Some(Factorization {
            h: problem.h.clone(),
            c: problem.c.clone(),
            rho,
            scaling,
            scaled_h,
            scaled_c,
            chol,
        });
        Ok(())
    }

    /// Solves `problem`, optionally starting from `warm_start`.
    pub fn solve(&mut self, problem: &QpProblem, warm_start: Option<&WarmStart>) -> Result<QpSolution> {
        problem.validate()?;
        let n = problem.num_vars();
        let m = problem.num_constraints();
        if let Some(ws) = warm_start {
            if ws.u.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "warm start",
                    expected: n,
                    got: ws.u.len(),
                });
            }
        }
        self.factor(problem)?;
        let QpSettings {
            tol,
            max_iters,
            alpha,
            sigma,
            ..
        } = self.settings;
        let f = self.cache.as_ref().expect("factored above");
        let Scaling { d, e, cost } = &f.scaling;
        let cost = *cost;
        let rho = &f.rho;

        // scaled data
        let g = DVector::from_fn(n, |i, _| cost * d[i] * problem.g[i]);
        let lower = DVector::from_fn(m, |i, _| e[i] * problem.lower[i]);
        let upper = DVector::from_fn(m, |i, _| e[i] * problem.upper[i]);
        let c = &f.scaled_c;
        let ct = c.transpose();
        let project = |v: &DVector<f64>| DVector::from_fn(m, |i, _| v[i].clamp(lower[i], upper[i]));

        // iterates live in the scaled space; these map them back
        let unscale_x = |x: &DVector<f64>| x.component_mul(d);
        let unscale_z = |z: &DVector<f64>| z.component_div(e);
        let unscale_y = |y: &DVector<f64>| y.component_mul(e) / cost;

        let mut x = DVector::zeros(n);
        let mut z = project(&DVector::zeros(m));
        let mut y = DVector::zeros(m);
        if let Some(ws) = warm_start {
            x = ws.u.component_div(d);
            z = match &ws.z {
                Some(z0) if z0.len() == m => project(&z0.component_mul(e)),
                _ => project(&(c * &x)),
            };
            if let Some(y0) = ws.multipliers.as_ref().filter(|y0| y0.len() == m) {
                y = y0.component_div(e) * cost;
            }
        }

        let pct = problem.c.transpose();
        let residuals = |x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>| {
            let (xu, yu) = (unscale_x(x), unscale_y(y));
            let primal = if m == 0 { 0.0 } else { (&problem.c * &xu - unscale_z(z)).amax() };
            let dual = (&problem.h * &xu + &problem.g + &pct * yu).amax();
            (primal, dual)
        };

        let (mut primal, mut dual) = residuals(&x, &z, &y);
        let mut best = (primal.max(dual), x.clone(), z.clone(), y.clone(), primal, dual);
        let mut status = QpStatus::MaxIters;
        let mut iterations = 0;
        let mut stagnant = 0usize;

        if primal.max(dual) < tol {
            status = QpStatus::Solved;
        } else {
            for k in 1..=max_iters {
                iterations = k;
                let rhs = sigma * &x - &g + &ct * (rho.component_mul(&z) - &y);
                let x_tilde = f.chol.solve(&rhs);
                let z_tilde = c * &x_tilde;

                let x_next = alpha * &x_tilde + (1.0 - alpha) * &x;
                let z_relaxed = alpha * &z_tilde + (1.0 - alpha) * &z;
                let z_next = project(&(&z_relaxed + y.component_div(rho)));
                let y_next = &y + rho.component_mul(&(&z_relaxed - &z_next));
                let delta_y = unscale_y(&(&y_next - &y));

                x = x_next;
                z = z_next;
                y = y_next;

                (primal, dual) = residuals(&x, &z, &y);
                let merit = primal.max(dual);
                if merit < best.0 {
                    if merit < 0.999 * best.0 {
                        stagnant = 0;
                    } else {
                        stagnant += 1;
                    }
                    best = (merit, x.clone(), z.clone(), y.clone(), primal, dual);
                } else {
                    stagnant += 1;
                }
                if merit < tol {
                    status = QpStatus::Solved;
                    break;
                }
                if stagnant >= STAGNATION_WINDOW && infeasibility_certificate(problem, &delta_y) {
                    status = QpStatus::PrimalInfeasible;
                    break;
                }
            }
        }

        if status != QpStatus::Solved {
            // fall back to the best iterate seen
            (_, x, z, y, primal, dual) = best;
        }
        let mut x = unscale_x(&x);
        let mut z = unscale_z(&z);
        let mut y = unscale_y(&y);

        let mut polished = false;
        if self.settings.polish && status != QpStatus::PrimalInfeasible {
            // penalty seen by the original rows
            let rho_orig = DVector::from_fn(m, |i, _| rho[i] * e[i] * e[i] / cost);
            if let Some((xp, yp)) = polish(problem, &z, &y, &rho_orig) {
                let cx = &problem.c * &xp;
                let zp = DVector::from_fn(m, |i, _| cx[i].clamp(problem.lower[i], problem.upper[i]));
                let pp = problem.constraint_violation(&xp);
                let dp = problem.stationarity(&xp, &yp);
                if pp.max(dp) <= primal.max(dual) || pp.max(dp) < tol {
                    x = xp;
                    z = zp;
                    y = yp;
                    primal = pp;
                    dual = dp;
                    polished = true;
                    if primal.max(dual) < tol {
                        status = QpStatus::Solved;
                    }
                }
            }
        }

        Ok(QpSolution {
            objective: problem.objective(&x),
            u: x,
            multipliers: y,
            z,
            iterations,
            status,
            primal_residual: primal,
            dual_residual: dual,
            polished,
        })
    }
}

fn base_rho(settings: &QpSettings, scaled_h: &DMatrix<f64>) -> f64 {
    if let Some(rho) = settings.rho {
        return rho;
    }
    let n = scaled_h.nrows().max(1) as f64;
    let rho = 0.1 * scaled_h.trace() / n;
    if rho > 0.0 && rho.is_finite() {
        rho
    } else {
        0.1
    }
}

// A dual step δy with Cᵀδy ≈ 0 and uᵀδy⁺ + lᵀδy⁻ < 0 proves {l ≤ CU ≤ u} empty.
fn infeasibility_certificate(problem: &QpProblem, delta_y: &DVector<f64>) -> bool {
    let norm = delta_y.amax();
    if norm <= 0.0 {
        return false;
    }
    let eps = INFEASIBILITY_TOL * norm;
    if (problem.c.transpose() * delta_y).amax() > eps {
        return false;
    }
    let mut support = 0.0;
    for (i, &dy) in delta_y.iter().enumerate() {
        if dy > 0.0 {
            support += problem.upper[i] * dy;
        } else if dy < 0.0 {
            support += problem.lower[i] * dy;
        }
    }
    support < -eps
}

// Solve the KKT system restricted to the rows the ADMM iterate marks active.
fn polish(
    problem: &QpProblem,
    z: &DVector<f64>,
    y: &DVector<f64>,
    rho: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    const DELTA: f64 = 1e-9;
    let n = problem.num_vars();
    let mut active = Vec::new();
    for i in 0..problem.num_constraints() {
        let (l, u) = (problem.lower[i], problem.upper[i]);
        if l == u {
            active.push((i, u));
        } else if z[i] - l < -y[i] / rho[i] {
            active.push((i, l));
        } else if u - z[i] < y[i] / rho[i] {
            active.push((i, u));
        }
    }
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&problem.h);
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&problem.g));
    for (j, &(row, bound)) in active.iter().enumerate() {
        for col in 0..n {
            let v = problem.c[(row, col)];
            kkt[(n + j, col)] = v;
            kkt[(col, n + j)] = v;
        }
        rhs[n + j] = bound;
    }
    let mut regularized = kkt.clone();
    for i in 0..n {
        regularized[(i, i)] += DELTA;
    }
    for i in n..dim {
        regularized[(i, i)] -= DELTA;
    }
    let lu = regularized.lu();
    let mut sol = lu.solve(&rhs)?;
    // iterative refinement against the unregularized system
    for _ in 0..5 {
        let r = &rhs - &kkt * &sol;
        sol += lu.solve(&r)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let xp = sol.rows(0, n).into_owned();
    let mut yp = DVector::zeros(problem.num_constraints());
    for (j, &(row, _)) in active.iter().enumerate() {
        yp[row] = sol[n + j];
    }
    // multipliers must have the sign of the bound they act on
    for &(row, bound) in &active {
        let (l, u) = (problem.lower[row], problem.upper[row]);
        if l != u && ((bound == l && yp[row] > 0.0) || (bound == u && yp[row] < 0.0)) {
            return None;
        }
    }
    Some((xp, yp))
}
