//! Log-barrier interior-point solver for geometric programs.
//!
//! The program is transformed with `y = log x`: the objective and inequality
//! constraints become convex log-sum-exp functions and monomial equalities
//! become affine rows. A feasibility phase (minimizing the maximum
//! constraint violation) runs first whenever the starting point is not
//! strictly feasible; the main phase follows the central path with damped
//! Newton steps until the duality-gap estimate and the stationarity residual
//! are below the requested tolerance.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::posynomial::{Posynomial, VarId};

use super::{GeometricProgram, GpError, SolverStats};

const MAX_INNER: usize = 200;
const MAX_OUTER: usize = 80;
const BARRIER_GROWTH: f64 = 20.0;
const FEASIBLE_MARGIN: f64 = 1e-10;
/// Phase one stops early once every constraint has at least this much slack.
const COMFORTABLE_MARGIN: f64 = 1e-3;

/// A posynomial lowered to `(log c_i, [(var index, exponent)])` terms.
struct Compiled {
    terms: Vec<(f64, Vec<(usize, f64)>)>,
}

fn compile(p: &Posynomial, index: &BTreeMap<VarId, usize>) -> Result<Compiled, GpError> {
    let mut terms = Vec::with_capacity(p.terms().len());
    for m in p.terms() {
        let mut es = Vec::new();
        for (v, a) in m.exponents() {
            let i = *index
                .get(v)
                .ok_or_else(|| GpError::UnregisteredVariable(v.name().to_string()))?;
            es.push((i, a));
        }
        terms.push((m.coeff().ln(), es));
    }
    Ok(Compiled { terms })
}

impl Compiled {
    fn value(&self, y: &DVector<f64>) -> f64 {
        let mut smax = f64::NEG_INFINITY;
        let mut s = Vec::with_capacity(self.terms.len());
        for (lc, es) in &self.terms {
            let mut v = *lc;
            for (i, a) in es {
                v += a * y[*i];
            }
            smax = smax.max(v);
            s.push(v);
        }
        smax + s.iter().map(|v| (v - smax).exp()).sum::<f64>().ln()
    }

    /// Value, gradient, and Hessian of `log sum exp` at `y`.
    fn value_grad_hess(&self, y: &DVector<f64>, n: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
        let mut smax = f64::NEG_INFINITY;
        let mut s = Vec::with_capacity(self.terms.len());
        for (lc, es) in &self.terms {
            let mut v = *lc;
            for (i, a) in es {
                v += a * y[*i];
            }
            smax = smax.max(v);
            s.push(v);
        }
        let mut wsum = 0.0;
        let weights: Vec<f64> = s
            .iter()
            .map(|v| {
                let e = (v - smax).exp();
                wsum += e;
                e
            })
            .collect();
        let value = smax + wsum.ln();
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for ((_, es), w) in self.terms.iter().zip(&weights) {
            let p = w / wsum;
            for (i, ai) in es {
                grad[*i] += ai * p;
                for (j, aj) in es {
                    hess[(*i, *j)] += p * ai * aj;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                hess[(i, j)] -= grad[i] * grad[j];
            }
        }
        (value, grad, hess)
    }
}

/// Solves the KKT system `[H A'; A 0] [dy; w] = [-g; r_eq]`.
/// Falls back to progressively larger Tikhonov ridges if factorization fails.
fn solve_kkt(
    hess: &DMatrix<f64>,
    eq_a: Option<&DMatrix<f64>>,
    neg_grad: &DVector<f64>,
    eq_resid: Option<&DVector<f64>>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = hess.nrows();
    let p = eq_a.map(|a| a.nrows()).unwrap_or(0);
    let scale = hess.diagonal().amax().max(1.0);
    for ridge_pow in 0..8 {
        let ridge = if ridge_pow == 0 {
            0.0
        } else {
            scale * 1e-14 * 10f64.powi(ridge_pow)
        };
        let mut kkt = DMatrix::zeros(n + p, n + p);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = hess[(i, j)];
            }
            kkt[(i, i)] += ridge;
        }
        if let Some(a) = eq_a {
            for r in 0..p {
                for j in 0..n {
                    kkt[(n + r, j)] = a[(r, j)];
                    kkt[(j, n + r)] = a[(r, j)];
                }
            }
        }
        let mut rhs = DVector::zeros(n + p);
        for i in 0..n {
            rhs[i] = neg_grad[i];
        }
        if let Some(r) = eq_resid {
            for i in 0..p {
                rhs[n + i] = r[i];
            }
        }
        if let Some(sol) = kkt.lu().solve(&rhs) {
            if sol.iter().all(|x| x.is_finite()) {
                let dy = DVector::from_iterator(n, (0..n).map(|i| sol[i]));
                let w = DVector::from_iterator(p, (0..p).map(|i| sol[n + i]));
                return Some((dy, w));
            }
        }
    }
    None
}

struct Problem {
    n: usize,
    objective: Compiled,
    ineq: Vec<Compiled>,
    labels: Vec<String>,
    eq_a: Option<DMatrix<f64>>,
    eq_b: Option<DVector<f64>>,
}

impl Problem {
    fn constraint_values(&self, y: &DVector<f64>) -> Vec<f64> {
        self.ineq.iter().map(|c| c.value(y)).collect()
    }

    fn most_violated(&self, y: &DVector<f64>) -> (String, f64) {
        let vals = self.constraint_values(y);
        let (idx, v) = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v))
            .unwrap_or((0, 0.0));
        let label = self
            .labels
            .get(idx)
            .cloned()
            .unwrap_or_else(|| format!("constraint #{idx}"));
        // report the violation in original units: q(x) <= 1
        (label, v.exp() - 1.0)
    }
}

/// Entry point used by [`super::solve`].
pub(super) fn solve_gp(
    gp: &GeometricProgram,
    tol: f64,
) -> Result<(BTreeMap<VarId, f64>, SolverStats), GpError> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(GpError::BadConfig(format!("tolerance {tol} must be positive")));
    }
    let n = gp.variables.len();
    if n == 0 {
        return Err(GpError::BadConfig("program has no variables".into()));
    }
    let index: BTreeMap<VarId, usize> = gp
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.id.clone(), i))
        .collect();

    let objective = compile(&gp.objective, &index)?;
    let ineq = gp
        .ineq
        .iter()
        .map(|p| compile(p, &index))
        .collect::<Result<Vec<_>, _>>()?;
    let labels = if gp.ineq_labels.len() == gp.ineq.len() {
        gp.ineq_labels.clone()
    } else {
        (0..gp.ineq.len()).map(|i| format!("constraint #{i}")).collect()
    };

    let (eq_a, eq_b) = if gp.eq.is_empty() {
        (None, None)
    } else {
        let p = gp.eq.len();
        let mut a = DMatrix::zeros(p, n);
        let mut b = DVector::zeros(p);
        for (r, mono) in gp.eq.iter().enumerate() {
            for (v, e) in mono.exponents() {
                let i = *index
                    .get(v)
                    .ok_or_else(|| GpError::UnregisteredVariable(v.name().to_string()))?;
                a[(r, i)] = e;
            }
            b[r] = -mono.coeff().ln();
        }
        (Some(a), Some(b))
    };

    let problem = Problem {
        n,
        objective,
        ineq,
        labels,
        eq_a,
        eq_b,
    };

    // start at the log-space box midpoint; 1.0 for unbounded variables
    let mut y = DVector::zeros(n);
    for (i, v) in gp.variables.iter().enumerate() {
        y[i] = match (v.lower, v.upper) {
            (Some(l), Some(u)) => 0.5 * (l.ln() + u.ln()),
            (Some(l), None) => l.ln() + 1.0,
            (None, Some(u)) => u.ln() - 1.0,
            (None, None) => 0.0,
        };
    }
    let mut iterations = 0usize;
    let mut merit_monotone = true;

    if let (Some(a), Some(b)) = (&problem.eq_a, &problem.eq_b) {
        // project onto the affine equality manifold
        let r = a * &y - b;
        let aat = a * a.transpose();
        let corr = aat
            .lu()
            .solve(&r)
            .ok_or_else(|| GpError::BadConfig("degenerate equality constraints".into()))?;
        y -= a.transpose() * corr;
        let resid = (a * &y - b).amax();
        if resid > 1e-8 {
            return Err(GpError::Infeasible {
                constraint: "inconsistent monomial equality constraints".into(),
                violation: resid,
            });
        }
    }

    if !problem.ineq.is_empty() {
        let q0 = problem.constraint_values(&y);
        let worst = q0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if worst >= -FEASIBLE_MARGIN {
            y = phase_one(&problem, y, &mut iterations, &mut merit_monotone)?;
        }
    }

    let stats = phase_two(&problem, &mut y, tol, &mut iterations, &mut merit_monotone)?;

    let assignment: BTreeMap<VarId, f64> = gp
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.id.clone(), y[i].exp()))
        .collect();
    Ok((assignment, stats))
}

/// Minimizes an auxiliary slack `s` with barrier `-sum log(s - Q_i(y))` until
/// a strictly feasible point appears or infeasibility is certified.
fn phase_one(
    problem: &Problem,
    mut y: DVector<f64>,
    iterations: &mut usize,
    merit_monotone: &mut bool,
) -> Result<DVector<f64>, GpError> {
    let n = problem.n;
    let m = problem.ineq.len();
    let mut s = problem
        .constraint_values(&y)
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    let mut t = 1.0;

    for _ in 0..MAX_OUTER {
        // Newton-center t*s - sum log(s - q_i) over (y, s)
        for _ in 0..MAX_INNER {
            let mut grad_y = DVector::zeros(n);
            let mut grad_s = t;
            let mut hess_yy = DMatrix::zeros(n, n);
            let mut hess_ys = DVector::zeros(n);
            let mut hess_ss = 0.0;
            let mut worst = f64::NEG_INFINITY;
            for c in &problem.ineq {
                let (q, g, h) = c.value_grad_hess(&y, n);
                worst = worst.max(q);
                let r = s - q;
                grad_y += &g / r;
                grad_s -= 1.0 / r;
                hess_yy += &h / r + &g * g.transpose() / (r * r);
                hess_ys += &g * (-1.0 / (r * r));
                // d2/ds2 of -log(s - q) is 1/r^2
                hess_ss += 1.0 / (r * r);
            }
            if worst < -COMFORTABLE_MARGIN {
                return Ok(y);
            }
            // assemble augmented system over (y, s)
            let mut hess = DMatrix::zeros(n + 1, n + 1);
            for i in 0..n {
                for j in 0..n {
                    hess[(i, j)] = hess_yy[(i, j)];
                }
                hess[(i, n)] = hess_ys[i];
                hess[(n, i)] = hess_ys[i];
            }
            hess[(n, n)] = hess_ss;
            let mut grad = DVector::zeros(n + 1);
            for i in 0..n {
                grad[i] = grad_y[i];
            }
            grad[n] = grad_s;
            let eq_ext = problem.eq_a.as_ref().map(|a| {
                let mut ext = DMatrix::zeros(a.nrows(), n + 1);
                for r in 0..a.nrows() {
                    for j in 0..n {
                        ext[(r, j)] = a[(r, j)];
                    }
                }
                ext
            });
            let (dz, _) = solve_kkt(&hess, eq_ext.as_ref(), &(-&grad), None)
                .ok_or(GpError::NonConvergence { residual: f64::NAN })?;
            let decrement = -grad.dot(&dz);
            if decrement / 2.0 <= 1e-14 {
                break;
            }
            // backtracking: keep s - q positive and require Armijo decrease
            let merit = |yv: &DVector<f64>, sv: f64| -> f64 {
                let mut val = t * sv;
                for c in &problem.ineq {
                    let r = sv - c.value(yv);
                    if r <= 0.0 {
                        return f64::INFINITY;
                    }
                    val -= r.ln();
                }
                val
            };
            let m0 = merit(&y, s);
            let mut alpha = 1.0;
            let gtd = grad.dot(&dz);
            let mut accepted = false;
            while alpha > 1e-14 {
                let y_try =
                    DVector::from_iterator(n, (0..n).map(|i| y[i] + alpha * dz[i]));
                let s_try = s + alpha * dz[n];
                let m_try = merit(&y_try, s_try);
                if m_try <= m0 + 1e-4 * alpha * gtd {
                    if m_try > m0 + 1e-12 * m0.abs().max(1.0) {
                        *merit_monotone = false;
                    }
                    y = y_try;
                    s = s_try;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            *iterations += 1;
            if !accepted {
                break;
            }
        }
        let worst = problem
            .constraint_values(&y)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if worst < -FEASIBLE_MARGIN {
            return Ok(y);
        }
        if (m as f64) / t < 1e-12 {
            break;
        }
        t *= BARRIER_GROWTH;
    }
    let (constraint, violation) = problem.most_violated(&y);
    Err(GpError::Infeasible {
        constraint,
        violation,
    })
}

/// Follows the central path of the barrier problem
/// `t * F0(y) - sum log(-Q_i(y))` subject to the affine equalities.
fn phase_two(
    problem: &Problem,
    y: &mut DVector<f64>,
    tol: f64,
    iterations: &mut usize,
    merit_monotone: &mut bool,
) -> Result<SolverStats, GpError> {
    let n = problem.n;
    let m = problem.ineq.len();
    let mut t = 1.0;
    for outer in 0..MAX_OUTER {
        for _ in 0..MAX_INNER {
            let (_, g0, h0) = problem.objective.value_grad_hess(y, n);
            let mut grad = &g0 * t;
            let mut hess = &h0 * t;
            let mut domain_ok = true;
            for c in &problem.ineq {
                let (q, g, h) = c.value_grad_hess(y, n);
                if q >= 0.0 {
                    domain_ok = false;
                    break;
                }
                let r = -q;
                grad += &g / r;
                hess += &h / r + &g * g.transpose() / (r * r);
            }
            if !domain_ok {
                // should not happen: line search preserves strict feasibility
                return Err(GpError::NonConvergence { residual: f64::NAN });
            }
            let eq_resid = problem
                .eq_a
                .as_ref()
                .zip(problem.eq_b.as_ref())
                .map(|(a, b)| -(a * &*y - b));
            let (dy, w) = solve_kkt(&hess, problem.eq_a.as_ref(), &(-&grad), eq_resid.as_ref())
                .ok_or(GpError::NonConvergence { residual: f64::NAN })?;
            // stationarity of the centered problem, scaled back to the
            // original objective
            let mut stat = grad.clone();
            if let Some(a) = &problem.eq_a {
                stat += a.transpose() * &w;
            }
            let stat_res = stat.amax() / t;
            let decrement = -grad.dot(&dy);
            if stat_res <= 0.05 * tol || decrement / 2.0 <= 1e-16 {
                break;
            }
            let merit = |yv: &DVector<f64>| -> f64 {
                let mut val = t * problem.objective.value(yv);
                for c in &problem.ineq {
                    let q = c.value(yv);
                    if q >= 0.0 {
                        return f64::INFINITY;
                    }
                    val -= (-q).ln();
                }
                val
            };
            let m0 = merit(y);
            let gtd = grad.dot(&dy);
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-14 {
                let y_try = &*y + &dy * alpha;
                let m_try = merit(&y_try);
                if m_try <= m0 + 1e-4 * alpha * gtd {
                    if m_try > m0 + 1e-12 * m0.abs().max(1.0) {
                        *merit_monotone = false;
                    }
                    *y = y_try;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            *iterations += 1;
            if !accepted {
                break;
            }
        }
        let gap = if m == 0 { 0.0 } else { m as f64 / t };
        if gap <= 0.5 * tol {
            let kkt_residual = kkt_certificate(problem, y, gap, t);
            if kkt_residual > tol && outer + 1 < MAX_OUTER {
                t *= BARRIER_GROWTH;
                continue;
            }
            if kkt_residual > tol {
                return Err(GpError::NonConvergence {
                    residual: kkt_residual,
                });
            }
            return Ok(SolverStats {
                iterations: *iterations,
                kkt_residual,
                objective: problem.objective.value(y).exp(),
                merit_monotone: *merit_monotone,
            });
        }
        t *= BARRIER_GROWTH;
    }
    Err(GpError::NonConvergence { residual: f64::NAN })
}

/// Constraints with less log-space slack than this are treated as active in
/// the KKT certificate.
const ACTIVE_SLACK: f64 = 1e-4;

/// First-order optimality residual at `y`.
///
/// Inactive constraints keep their barrier multipliers `1/(t(-q_i))`, whose
/// floating-point error is negligible at O(1) slack. Active constraints
/// cannot: their slack is computed by subtraction near the boundary and the
/// barrier multiplier loses all precision at large `t`. A valid certificate
/// only needs *some* nonnegative multipliers, so the active multipliers are
/// recomputed by sign-constrained least squares against the stationarity
/// residual; complementarity is then measured with the multipliers actually
/// used, against slacks in original units.
fn kkt_certificate(problem: &Problem, y: &DVector<f64>, gap: f64, t: f64) -> f64 {
    let n = problem.n;
    let m = problem.ineq.len();
    let p = problem.eq_a.as_ref().map(|a| a.nrows()).unwrap_or(0);
    let (_, g0, _) = problem.objective.value_grad_hess(y, n);

    let mut q_vals = Vec::with_capacity(m);
    let mut grads = Vec::with_capacity(m);
    let mut primal = 0.0f64;
    for c in &problem.ineq {
        let (q, g, _) = c.value_grad_hess(y, n);
        primal = primal.max(q.exp() - 1.0);
        q_vals.push(q);
        grads.push(g);
    }
    let mut eq_violation = 0.0;
    if let (Some(a), Some(b)) = (&problem.eq_a, &problem.eq_b) {
        eq_violation = (a * y - b).amax();
    }

    let mut lambda = vec![0.0; m];
    let mut base = g0.clone();
    let mut active = Vec::new();
    for i in 0..m {
        if -q_vals[i] > ACTIVE_SLACK {
            lambda[i] = 1.0 / (t * (-q_vals[i]));
            base += &grads[i] * lambda[i];
        } else {
            active.push(i);
        }
    }

    // sign-constrained least squares for the active multipliers (nu free)
    let mut kept = active;
    let mut stat_res;
    loop {
        let cols = kept.len() + p;
        if cols == 0 {
            stat_res = base.amax();
            break;
        }
        let mut c_mat = DMatrix::zeros(n, cols);
        for (col, &i) in kept.iter().enumerate() {
            for row in 0..n {
                c_mat[(row, col)] = grads[i][row];
            }
        }
        if let Some(a) = &problem.eq_a {
            for r in 0..p {
                for row in 0..n {
                    c_mat[(row, kept.len() + r)] = a[(r, row)];
                }
            }
        }
        let svd = c_mat.clone().svd(true, true);
        let z = match svd.solve(&(-&base), 1e-13) {
            Ok(z) => z,
            Err(_) => {
                stat_res = base.amax();
                break;
            }
        };
        let worst_negative = kept
            .iter()
            .enumerate()
            .filter(|(col, _)| z[*col] < -1e-10)
            .min_by(|a, b| z[a.0].total_cmp(&z[b.0]))
            .map(|(col, _)| col);
        match worst_negative {
            Some(col) => {
                kept.remove(col);
            }
            None => {
                for (col, &i) in kept.iter().enumerate() {
                    lambda[i] = z[col].max(0.0);
                }
                stat_res = (&base + c_mat * z).amax();
                break;
            }
        }
    }

    // complementarity in original units: lambda_i * (1 - q_i(x))
    let mut comp = 0.0f64;
    for i in 0..m {
        comp = comp.max(lambda[i] * (1.0 - q_vals[i].exp()).abs());
    }

    stat_res.max(gap).max(primal.max(0.0)).max(eq_violation).max(comp)
}
