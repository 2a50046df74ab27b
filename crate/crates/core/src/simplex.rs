//! Dense two-phase simplex for small ranged linear programs.
//!
//! Solves `max c'x` subject to `L_i <= a_i'x <= U_i` and `0 <= x_j <= u_j`.
//! Each ranged row becomes an equality with a bounded slack, and nonbasic
//! variables may rest at either bound, so the tableau stays at one row per
//! constraint. Phase 1 drives artificial residuals to zero; Dantzig pricing
//! with a Bland fallback guards against cycling.
//!
//! Written for the decoy-state yield programs (a couple hundred variables,
//! nine rows); no sparsity, no scaling heroics.

#[derive(Debug, Clone)]
pub struct RangedLp {
    pub num_vars: usize,
    /// Row-major `rows x num_vars` coefficients.
    pub coeffs: Vec<f64>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    /// Per-variable upper bounds (lower bounds are zero).
    pub var_upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpError {
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl std::fmt::Display for LpError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpError::Infeasible => write!(f, "infeasible"),
            LpError::Unbounded => write!(f, "unbounded"),
            LpError::IterationLimit => write!(f, "iteration limit reached"),
        }
    }
}

const EPS_PIVOT: f64 = 1e-11;
const EPS_COST: f64 = 1e-10;
const EPS_FEAS: f64 = 1e-9;

#[derive(Clone, Copy, PartialEq, Eq)]
enum VStat {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau {
    rows: usize,
    cols: usize, // structural + slack + artificial
    a: Vec<f64>, // rows x cols
    rhs: Vec<f64>,
    ub: Vec<f64>,
    status: Vec<VStat>,
    basis: Vec<usize>,
    allowed: Vec<bool>,
    d: Vec<f64>, // reduced costs
}

impl Tableau {
    fn at(&self, r: usize, j: usize) -> f64 {
        self.a[r * self.cols + j]
    }

    /// Values of the basic variables given the nonbasic bound pattern.
    fn basic_values(&self) -> Vec<f64> {
        let mut xb = self.rhs.clone();
        for j in 0..self.cols {
            if self.status[j] == VStat::AtUpper {
                let u = self.ub[j];
                for r in 0..self.rows {
                    xb[r] -= self.at(r, j) * u;
                }
            }
        }
        xb
    }

    fn reduced_costs_from(&mut self, c: &[f64]) {
        // d_j = c_j - sum_r c_B(r) * a̅_r_j
        self.d.copy_from_slice(c);
        for r in 0..self.rows {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                for j in 0..self.cols {
                    self.d[j] -= cb * self.at(r, j);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let cols = self.cols;
        let piv = self.a[r * cols + e];
        let inv = 1.0 / piv;
        for j in 0..cols {
            self.a[r * cols + j] *= inv;
        }
        self.rhs[r] *= inv;
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let factor = self.a[i * cols + e];
            if factor != 0.0 {
                for j in 0..cols {
                    self.a[i * cols + j] -= factor * self.a[r * cols + j];
                }
                self.rhs[i] -= factor * self.rhs[r];
            }
        }
        let dfac = self.d[e];
        if dfac != 0.0 {
            for j in 0..cols {
                self.d[j] -= dfac * self.a[r * cols + j];
            }
        }
    }

    /// Run simplex iterations until optimal for the current reduced costs.
    fn optimize(&mut self) -> Result<(), LpError> {
        let max_iter = 2000 + 200 * (self.rows + self.cols);
        let mut stall = 0usize;
        for _ in 0..max_iter {
            let bland = stall > 2 * (self.rows + self.cols);
            let xb = self.basic_values();

            // entering variable
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..self.cols {
                if !self.allowed[j] || self.status[j] == VStat::Basic {
                    continue;
                }
                let d = self.d[j];
                let improving = match self.status[j] {
                    VStat::AtLower => d > EPS_COST,
                    VStat::AtUpper => d < -EPS_COST,
                    VStat::Basic => false,
                };
                if improving {
                    if bland {
                        enter = Some((j, d));
                        break;
                    }
                    if enter.map_or(true, |(_, best)| d.abs() > best.abs()) {
                        enter = Some((j, d));
                    }
                }
            }
            let Some((e, _)) = enter else {
                return Ok(());
            };
            let dir = if self.status[e] == VStat::AtLower {
                1.0
            } else {
                -1.0
            };

            // ratio test: t is how far x_e moves from its bound
            let mut t_limit = self.ub[e]; // bound-to-bound flip
            let mut leave: Option<(usize, VStat)> = None;
            for r in 0..self.rows {
                let rate = -dir * self.at(r, e);
                if rate.abs() <= EPS_PIVOT {
                    continue;
                }
                let (t_r, hits) = if rate < 0.0 {
                    (xb[r].max(0.0) / -rate, VStat::AtLower)
                } else {
                    let headroom = (self.ub[self.basis[r]] - xb[r]).max(0.0);
                    (headroom / rate, VStat::AtUpper)
                };
                let better = match leave {
                    None => t_r < t_limit - 1e-15,
                    Some((r_old, _)) => {
                        t_r < t_limit - 1e-15
                            || (t_r <= t_limit + 1e-15 && self.basis[r] < self.basis[r_old])
                    }
                };
                if better {
                    t_limit = t_r.min(t_limit);
                    leave = Some((r, hits));
                }
            }

            if t_limit.is_infinite() {
                return Err(LpError::Unbounded);
            }
            if t_limit > 1e-13 {
                stall = 0;
            } else {
                stall += 1;
            }

            match leave {
                None => {
                    // bound flip, no basis change
                    self.status[e] = if dir > 0.0 {
                        VStat::AtUpper
                    } else {
                        VStat::AtLower
                    };
                }
                Some((r, leave_to)) => {
                    let out = self.basis[r];
                    self.pivot(r, e);
                    self.status[out] = leave_to;
                    self.status[e] = VStat::Basic;
                    self.basis[r] = e;
                }
            }
        }
        Err(LpError::IterationLimit)
    }
}

/// Maximize `objective . x` over the ranged LP.
pub fn maximize(lp: &RangedLp, objective: &[f64]) -> Result<LpSolution, LpError> {
    let m = lp.row_lower.len();
    let n = lp.num_vars;
    assert_eq!(lp.coeffs.len(), m * n);
    assert_eq!(objective.len(), n);
    assert_eq!(lp.var_upper.len(), n);
    assert_eq!(lp.row_upper.len(), m);

    let cols = n + 2 * m;
    let mut t = Tableau {
        rows: m,
        cols,
        a: vec![0.0; m * cols],
        rhs: vec![0.0; m],
        ub: vec![0.0; cols],
        status: vec![VStat::AtLower; cols],
        basis: vec![0; m],
        allowed: vec![true; cols],
        d: vec![0.0; cols],
    };
    t.ub[..n].copy_from_slice(&lp.var_upper);
    let mut phase1 = vec![0.0; cols];
    let mut need_phase1 = false;

    for r in 0..m {
        if lp.row_lower[r] > lp.row_upper[r] + 1e-12 {
            return Err(LpError::Infeasible);
        }
        for j in 0..n {
            t.a[r * cols + j] = lp.coeffs[r * n + j];
        }
        let slack = n + r;
        t.a[r * cols + slack] = 1.0;
        t.ub[slack] = (lp.row_upper[r] - lp.row_lower[r]).max(0.0);
        t.rhs[r] = lp.row_upper[r];
        // with all structurals at zero the slack would need value row_upper
        if lp.row_lower[r] > 0.0 {
            // slack pinned at its upper bound; artificial absorbs row_lower
            t.status[slack] = VStat::AtUpper;
            let art = n + m + r;
            t.a[r * cols + art] = 1.0;
            t.ub[art] = f64::INFINITY;
            t.basis[r] = art;
            t.status[art] = VStat::Basic;
            phase1[art] = -1.0;
            need_phase1 = true;
        } else if lp.row_upper[r] < 0.0 {
            // negate the row so the artificial enters with +1 in a
            // normalized basis column
            for j in 0..cols {
                t.a[r * cols + j] = -t.a[r * cols + j];
            }
            t.rhs[r] = -t.rhs[r];
            let art = n + m + r;
            t.a[r * cols + art] = 1.0;
            t.ub[art] = f64::INFINITY;
            t.basis[r] = art;
            t.status[art] = VStat::Basic;
            phase1[art] = -1.0;
            need_phase1 = true;
        } else {
            t.basis[r] = slack;
            t.status[slack] = VStat::Basic;
        }
    }

    if need_phase1 {
        t.reduced_costs_from(&phase1);
        t.optimize()?;
        let xb = t.basic_values();
        let infeas: f64 = (0..m)
            .filter(|&r| t.basis[r] >= n + m)
            .map(|r| xb[r].abs())
            .sum();
        if infeas > EPS_FEAS {
            return Err(LpError::Infeasible);
        }
        // pivot lingering artificials out where possible, then freeze them
        for r in 0..m {
            if t.basis[r] >= n + m {
                if let Some(j) = (0..n + m)
                    .find(|&j| t.status[j] != VStat::Basic && t.at(r, j).abs() > 1e-8)
                {
                    let out = t.basis[r];
                    t.pivot(r, j);
                    t.status[out] = VStat::AtLower;
                    t.status[j] = VStat::Basic;
                    t.basis[r] = j;
                }
            }
        }
        for j in n + m..cols {
            t.allowed[j] = false;
            if t.status[j] != VStat::Basic {
                t.ub[j] = 0.0;
            }
        }
    }

    let mut full_obj = vec![0.0; cols];
    full_obj[..n].copy_from_slice(objective);
    t.reduced_costs_from(&full_obj);
    t.optimize()?;

    // assemble the structural solution
    let xb = t.basic_values();
    let mut x = vec![0.0; n];
    for j in 0..n {
        x[j] = match t.status[j] {
            VStat::AtLower => 0.0,
            VStat::AtUpper => t.ub[j],
            VStat::Basic => 0.0, // filled below
        };
    }
    for r in 0..m {
        if t.basis[r] < n {
            x[t.basis[r]] = xb[r].clamp(0.0, lp.var_upper[t.basis[r]]);
        }
    }
    let objective_value = x.iter().zip(objective).map(|(xi, ci)| xi * ci).sum();
    Ok(LpSolution {
        objective: objective_value,
        x,
    })
}

/// Minimize `objective . x` (negated maximize).
pub fn minimize(lp: &RangedLp, objective: &[f64]) -> Result<LpSolution, LpError> {
    let neg: Vec<f64> = objective.iter().map(|c| -c).collect();
    let sol = maximize(lp, &neg)?;
    Ok(LpSolution {
        objective: -sol.objective,
        x: sol.x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feasibility_check(lp: &RangedLp, x: &[f64]) {
        for r in 0..lp.row_lower.len() {
            let v: f64 = (0..lp.num_vars)
                .map(|j| lp.coeffs[r * lp.num_vars + j] * x[j])
                .sum();
            assert!(
                v >= lp.row_lower[r] - 1e-7 && v <= lp.row_upper[r] + 1e-7,
                "row {r}: {v} outside [{}, {}]",
                lp.row_lower[r],
                lp.row_upper[r]
            );
        }
        for (j, &xj) in x.iter().enumerate() {
            assert!(xj >= -1e-9 && xj <= lp.var_upper[j] + 1e-9);
        }
    }

    #[test]
    fn textbook_lp() {
        // max 3x + 2y, x + y <= 4, x + 3y <= 6, 0 <= x,y <= 10 -> (4, 0)
        let lp = RangedLp {
            num_vars: 2,
            coeffs: vec![1.0, 1.0, 1.0, 3.0],
            row_lower: vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
            row_upper: vec![4.0, 6.0],
            var_upper: vec![10.0, 10.0],
        };
        let sol = maximize(&lp, &[3.0, 2.0]).unwrap();
        assert_relative_eq!(sol.objective, 12.0, max_relative = 1e-9);
        feasibility_check(&lp, &sol.x);
    }

    #[test]
    fn ranged_rows_and_upper_bounds() {
        // max x + y with 1 <= x + y <= 1.5, x <= 0.7, y <= 0.6
        let lp = RangedLp {
            num_vars: 2,
            coeffs: vec![1.0, 1.0],
            row_lower: vec![1.0],
            row_upper: vec![1.5],
            var_upper: vec![0.7, 0.6],
        };
        let sol = maximize(&lp, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(sol.objective, 1.3, max_relative = 1e-9);
        let sol = minimize(&lp, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(sol.objective, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn equality_rows() {
        // x + y = 1 exactly; max x with x <= 0.25
        let lp = RangedLp {
            num_vars: 2,
            coeffs: vec![1.0, 1.0],
            row_lower: vec![1.0],
            row_upper: vec![1.0],
            var_upper: vec![0.25, 1.0],
        };
        let sol = maximize(&lp, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(sol.objective, 0.25, max_relative = 1e-9);
        assert_relative_eq!(sol.x[1], 0.75, max_relative = 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        // x + y >= 3 with x, y <= 1
        let lp = RangedLp {
            num_vars: 2,
            coeffs: vec![1.0, 1.0],
            row_lower: vec![3.0],
            row_upper: vec![10.0],
            var_upper: vec![1.0, 1.0],
        };
        assert_eq!(maximize(&lp, &[1.0, 0.0]), Err(LpError::Infeasible));
    }

    #[test]
    fn random_lps_feasible_and_bounded_by_witness() {
        // Build LPs from a known witness point: the optimum can never be
        // worse than the witness, and the returned point must be feasible.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let n = rng.random_range(3..20);
            let m = rng.random_range(2..8);
            let witness: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let coeffs: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut row_lower = vec![0.0; m];
            let mut row_upper = vec![0.0; m];
            for r in 0..m {
                let v: f64 = (0..n).map(|j| coeffs[r * n + j] * witness[j]).sum();
                row_lower[r] = v - rng.random_range(0.0..0.5);
                row_upper[r] = v + rng.random_range(0.0..0.5);
            }
            let lp = RangedLp {
                num_vars: n,
                coeffs,
                row_lower,
                row_upper,
                var_upper: vec![1.0; n],
            };
            let obj: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let witness_obj: f64 = witness.iter().zip(&obj).map(|(x, c)| x * c).sum();
            let sol = maximize(&lp, &obj).expect("witness point exists");
            assert!(sol.objective >= witness_obj - 1e-7);
            feasibility_check(&lp, &sol.x);
            let sol_min = minimize(&lp, &obj).unwrap();
            assert!(sol_min.objective <= witness_obj + 1e-7);
            feasibility_check(&lp, &sol_min.x);
        }
    }
}
