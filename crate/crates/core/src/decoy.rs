//! Analytical 4-intensity decoy-state bounds on the weighted yields.
//!
//! The eavesdropper-information estimate consumes upper bounds on
//! `q_nm = p_n^mu p_m^mu Y_nm` for photon pairs with `n + m <= 2` and a
//! lower bound on their sum, where `Y_nm` is the click probability for Fock
//! inputs `|n>, |m>`. Observed decoy gains constrain the yields linearly;
//! this module derives the bounds two ways:
//!
//! * [`analytic_q_bounds`] — closed-form three-intensity eliminations. The
//!   ratio constructions are Cramer solutions of truncated photon-number
//!   systems; every denominator is a generalized Vandermonde determinant of
//!   the Poisson coefficient rows, evaluated in factored form so its sign is
//!   manifest whenever `mu > nu > omega`.
//! * [`lp_q_bounds`] — a truncated linear program over all yields up to a
//!   photon cutoff, with explicit tail slack. Tighter by construction and
//!   used as the cross-check for the closed forms.
//!
//! [`synth_gains_from_yields`] inverts the gain equations for a known yield
//! table and generates the ground-truth scenarios both routes are validated
//! against.

use crate::channel::{GainSet, PairTable, Setting, DECOY_PAIRS};
use crate::error::{Error, Result};
use crate::simplex::{self, LpError, RangedLp};
use crate::statistics::GainIntervals;

/// Default photon-number cutoff for the series oracle and the LP. Poisson
/// mass beyond ten photons is below 1e-8 for intensities up to one.
pub const DEFAULT_CUTOFF: usize = 10;

/// Poisson photon-number probability `e^(-x) x^n / n!`.
///
/// Computed by the multiplicative recurrence for small `n` and in the log
/// domain above it.
pub fn poisson_pn(x: f64, n: usize) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("negative intensity: {x}")));
    }
    if x == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    if n <= 32 {
        let mut p = (-x).exp();
        for k in 1..=n {
            p *= x / k as f64;
        }
        Ok(p)
    } else {
        let ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
        Ok((n as f64 * x.ln() - x - ln_fact).exp())
    }
}

/// Upper tail `sum_{n >= n0} e^(-x) x^n / n!`, in complement form so no
/// series truncation error enters.
pub fn poisson_tail(x: f64, n0: usize) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("negative intensity: {x}")));
    }
    if n0 == 0 {
        return Ok(1.0);
    }
    let mut head = 0.0;
    let mut p = (-x).exp();
    for k in 0..n0 {
        if k > 0 {
            p *= x / k as f64;
        }
        head += p;
    }
    Ok((1.0 - head).max(0.0))
}

/// Poisson coefficients of the three decoy intensities, truncated at
/// `cutoff` with exact tails.
///
/// `a`, `b`, `c` hold `p_n` for `n = 0..cutoff` of `mu`, `nu`, `omega`; the
/// tails are `sum_{n >= cutoff}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonCoeffs {
    pub mu: f64,
    pub nu: f64,
    pub omega: f64,
    pub cutoff: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub a_tail: f64,
    pub b_tail: f64,
    pub c_tail: f64,
}

impl PoissonCoeffs {
    pub fn new(mu: f64, nu: f64, omega: f64, cutoff: usize) -> Result<Self> {
        if !(mu > nu && nu > omega && omega > 0.0) {
            return Err(Error::Domain(format!(
                "intensities must satisfy mu > nu > omega > 0, got {mu} > {nu} > {omega}"
            )));
        }
        if cutoff < 4 {
            return Err(Error::Domain("cutoff must be at least 4".into()));
        }
        let series = |x: f64| -> Result<Vec<f64>> {
            (0..cutoff).map(|n| poisson_pn(x, n)).collect()
        };
        Ok(Self {
            mu,
            nu,
            omega,
            cutoff,
            a: series(mu)?,
            b: series(nu)?,
            c: series(omega)?,
            a_tail: poisson_tail(mu, cutoff)?,
            b_tail: poisson_tail(nu, cutoff)?,
            c_tail: poisson_tail(omega, cutoff)?,
        })
    }
}

/// Ground-truth yield table `Y_nm` for `0 <= n, m <= cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldTable {
    pub cutoff: usize,
    y: Vec<f64>,
}

impl YieldTable {
    pub fn from_fn(cutoff: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let side = cutoff + 1;
        let mut y = Vec::with_capacity(side * side);
        for n in 0..side {
            for m in 0..side {
                let v = f(n, m);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!("yield Y_{n}{m} = {v} outside [0, 1]")));
                }
                y.push(v);
            }
        }
        Ok(Self { cutoff, y })
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.y[n * (self.cutoff + 1) + m]
    }
}

/// Bounds on the weighted yields: six upper bounds and the lower bound on
/// their sum, all clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct QBounds {
    pub q00_u: f64,
    pub q10_u: f64,
    pub q01_u: f64,
    pub q20_u: f64,
    pub q02_u: f64,
    pub q11_u: f64,
    pub qsum_l: f64,
}

/// Gains a yield table generates: `Q_xy = sum p_n^x p_m^y Y_nm` over the
/// truncated table, for the nine decoy pairs. Pair counts and code-mode
/// fields are zeroed; this is oracle plumbing, not a channel model.
pub fn synth_gains_from_yields(
    yt: &YieldTable,
    intensities: (f64, f64, f64),
) -> Result<GainSet> {
    let (mu, nu, omega) = intensities;
    let coeffs = PoissonCoeffs::new(mu, nu, omega, yt.cutoff + 1)?;
    let side = yt.cutoff + 1;
    let vec_for = |s: Setting| -> Vec<f64> {
        match s {
            Setting::Mu => coeffs.a[..side].to_vec(),
            Setting::Nu => coeffs.b[..side].to_vec(),
            Setting::Omega => coeffs.c[..side].to_vec(),
            Setting::Vacuum => {
                let mut v = vec![0.0; side];
                v[0] = 1.0;
                v
            }
        }
    };
    let mut decoy_gains = PairTable::default();
    for (i, &(sx, sy)) in DECOY_PAIRS.iter().enumerate() {
        let px = vec_for(sx);
        let py = vec_for(sy);
        let mut q = 0.0;
        for n in 0..side {
            if px[n] == 0.0 {
                continue;
            }
            for m in 0..side {
                q += px[n] * py[m] * yt.get(n, m);
            }
        }
        decoy_gains.values[i] = q;
    }
    Ok(GainSet {
        q_code: 0.0,
        e_code: 0.5,
        code_degenerate: true,
        decoy_gains,
        pair_counts: PairTable::default(),
        code_count: 0,
    })
}

// ---------------------------------------------------------------------------
// Factored determinant helpers
// ---------------------------------------------------------------------------

/// 2x2 minor of Poisson rows for intensities `u > w` and photon columns
/// `(k, k+1)`: `p_k(w) p_{k+1}(u) - p_{k+1}(w) p_k(u)
///            = e^(-u-w) (uw)^k (u - w) / (k! (k+1)!)`.
fn pair_minor(u: f64, w: f64, k: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    (-(u + w)).exp() * (u * w).powi(k as i32) * (u - w) / (fact(k) * fact(k + 1))
}

/// 3x3 determinant of Poisson rows (mu, nu, omega) over photon columns
/// 1..3, positive orientation:
/// `e^(-mu-nu-omega) mu nu omega (mu-nu)(mu-omega)(nu-omega) / 12`.
fn triple_det(mu: f64, nu: f64, omega: f64) -> f64 {
    (-(mu + nu + omega)).exp() * mu * nu * omega * (mu - nu) * (mu - omega) * (nu - omega) / 12.0
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Analytical bounds
// ---------------------------------------------------------------------------

/// Closed-form decoy-state bounds at exactly known intensities.
///
/// * `q00 = a0^2 Q_oo` (exact; the vacuum-vacuum gain is `Y_00`).
/// * `q10+/q01+`: Cramer solution of the single-photon column system built
///   from `K_i = Q_xo - p_0^x Q_oo`, with the ratio-monotonicity
///   inequalities providing the directions.
/// * `q20+/q02+`: two-constraint elimination with `H_1` and the
///   tail-corrected `L_3`.
/// * `q11+ = Q_mumu - a0 (Q_muo + Q_omu) + a0^2 Q_oo`.
/// * `qsum- = qt1- + qt2-`, the vacuum+single-photon mass minus tails plus
///   a Cramer lower bound on `Y_11`.
///
/// `K` and `L_3` are clamped at zero (the true combinations are sums of
/// nonnegative yield terms), which keeps the all-gains-zero scenario at
/// exactly zero bounds.
pub fn analytic_q_bounds(gains: &GainSet, coeffs: &PoissonCoeffs) -> Result<QBounds> {
    let (a, b, c) = (&coeffs.a, &coeffs.b, &coeffs.c);
    let q = |x: Setting, y: Setting| gains.decoy_gains.get(x, y);
    let q_oo = q(Setting::Vacuum, Setting::Vacuum);

    // exact complements: sum_{n>=3} p_n = 1 - p0 - p1 - p2
    let tail3_a = (1.0 - a[0] - a[1] - a[2]).max(0.0);
    let tail3_c = (1.0 - c[0] - c[1] - c[2]).max(0.0);

    let q00_u = clamp01(a[0] * a[0] * q_oo);

    // single-photon ratio construction
    let m_ac = pair_minor(coeffs.mu, coeffs.omega, 2); // c2 a3 - c3 a2
    let m_bc = pair_minor(coeffs.nu, coeffs.omega, 2); // -(b2 c3 - b3 c2)
    let m_ab = pair_minor(coeffs.mu, coeffs.nu, 2); // -(a2 b3 - a3 b2)
    let den3 = triple_det(coeffs.mu, coeffs.nu, coeffs.omega);
    if den3 <= 0.0 {
        return Err(Error::EstimationInfeasible {
            bound: "q10/q01",
            detail: format!("three-intensity determinant {den3} not positive"),
        });
    }
    let single_photon = |qx: f64, qn: f64, qw: f64| -> f64 {
        let k1 = (qx - a[0] * q_oo).max(0.0);
        let k2 = (qn - b[0] * q_oo).max(0.0);
        let k3 = (qw - c[0] * q_oo).max(0.0);
        let num = k1 * m_bc + k3 * m_ab - k2 * m_ac;
        clamp01(a[0] * a[1] * num / den3)
    };
    let q10_u = single_photon(
        q(Setting::Mu, Setting::Vacuum),
        q(Setting::Nu, Setting::Vacuum),
        q(Setting::Omega, Setting::Vacuum),
    );
    let q01_u = single_photon(
        q(Setting::Vacuum, Setting::Mu),
        q(Setting::Vacuum, Setting::Nu),
        q(Setting::Vacuum, Setting::Omega),
    );

    // two-photon elimination
    let den2 = pair_minor(coeffs.mu, coeffs.omega, 1); // a2 c1 - a1 c2
    if den2 <= 0.0 {
        return Err(Error::EstimationInfeasible {
            bound: "q20/q02",
            detail: format!("mu/omega minor {den2} not positive"),
        });
    }
    let two_photon = |qx: f64, qw: f64| -> f64 {
        let h1 = qx - a[0] * q_oo;
        let l3 = (qw - c[0] * q_oo - tail3_c).max(0.0);
        clamp01(a[0] * a[2] * (h1 * c[1] - l3 * a[1]) / den2)
    };
    let q20_u = two_photon(
        q(Setting::Mu, Setting::Vacuum),
        q(Setting::Omega, Setting::Vacuum),
    );
    let q02_u = two_photon(
        q(Setting::Vacuum, Setting::Mu),
        q(Setting::Vacuum, Setting::Omega),
    );

    let q_mu_o = q(Setting::Mu, Setting::Vacuum);
    let q_o_mu = q(Setting::Vacuum, Setting::Mu);
    let q_mm = q(Setting::Mu, Setting::Mu);
    let q_nn = q(Setting::Nu, Setting::Nu);
    let q_nu_o = q(Setting::Nu, Setting::Vacuum);
    let q_o_nu = q(Setting::Vacuum, Setting::Nu);

    let q11_u = clamp01(q_mm - a[0] * (q_mu_o + q_o_mu) + a[0] * a[0] * q_oo);

    // lower bound on the low-photon mass
    let qt1 = (a[0] * (q_o_mu + q_mu_o - 2.0 * tail3_a) - a[0] * a[0] * q_oo).max(0.0);
    let t1 = q_mm - a[0] * (q_o_mu + q_mu_o) + a[0] * a[0] * q_oo;
    let t2 = q_nn - b[0] * (q_o_nu + q_nu_o) + b[0] * b[0] * q_oo;
    let den_t2 = a[1] * b[1] * pair_minor(coeffs.mu, coeffs.nu, 1); // a1 b1 (a2 b1 - a1 b2)
    if den_t2 <= 0.0 {
        return Err(Error::EstimationInfeasible {
            bound: "qsum",
            detail: format!("mu/nu minor {den_t2} not positive"),
        });
    }
    let y11_l = clamp01((t2 * a[1] * a[2] - t1 * b[1] * b[2]) / den_t2);
    let qt2 = a[1] * a[1] * y11_l;

    Ok(QBounds {
        q00_u,
        q10_u,
        q01_u,
        q20_u,
        q02_u,
        q11_u,
        qsum_l: (qt1 + qt2).min(1.0),
    })
}

// ---------------------------------------------------------------------------
// Linear-programming bounds
// ---------------------------------------------------------------------------

/// LP bounds on the weighted yields over all `Y_nm` with `n, m <= cutoff`.
///
/// Constraints per decoy pair: `Q- - tail_slack <= sum p_n^x p_m^y Y_nm <= Q+`
/// with `tail_slack = 1 - (sum_n p_n^x)(sum_m p_m^y)` absorbing whatever mass
/// the truncation cannot represent. Each target bound is one solve.
pub fn lp_q_bounds(
    gain_intervals: &GainIntervals,
    coeffs: &PoissonCoeffs,
    cutoff: usize,
) -> Result<QBounds> {
    if cutoff < 3 {
        return Err(Error::Domain("LP cutoff must be at least 3".into()));
    }
    let side = cutoff + 1;
    let num_vars = side * side;
    let series = |x: f64| -> Result<Vec<f64>> { (0..side).map(|n| poisson_pn(x, n)).collect() };
    let p_mu = series(coeffs.mu)?;
    let p_nu = series(coeffs.nu)?;
    let p_om = series(coeffs.omega)?;
    let mut p_vac = vec![0.0; side];
    p_vac[0] = 1.0;
    let vec_for = |s: Setting| -> &Vec<f64> {
        match s {
            Setting::Mu => &p_mu,
            Setting::Nu => &p_nu,
            Setting::Omega => &p_om,
            Setting::Vacuum => &p_vac,
        }
    };

    let rows = DECOY_PAIRS.len();
    let mut lp = RangedLp {
        num_vars,
        coeffs: vec![0.0; rows * num_vars],
        row_lower: vec![0.0; rows],
        row_upper: vec![0.0; rows],
        var_upper: vec![1.0; num_vars],
    };
    for (r, &(sx, sy)) in DECOY_PAIRS.iter().enumerate() {
        let px = vec_for(sx);
        let py = vec_for(sy);
        for n in 0..side {
            for m in 0..side {
                lp.coeffs[r * num_vars + n * side + m] = px[n] * py[m];
            }
        }
        let slack = 1.0 - px.iter().sum::<f64>() * py.iter().sum::<f64>();
        let iv = gain_intervals.decoy.values[r];
        lp.row_lower[r] = (iv.lo - slack).max(0.0);
        lp.row_upper[r] = iv.hi.min(1.0);
        if lp.row_lower[r] > lp.row_upper[r] {
            return Err(Error::EstimationInfeasible {
                bound: "lp",
                detail: format!("gain interval {r} inconsistent with tail slack"),
            });
        }
    }

    let lp_err = |e: LpError| Error::EstimationInfeasible {
        bound: "lp",
        detail: e.to_string(),
    };
    let a = &coeffs.a;
    let yield_max = |n: usize, m: usize| -> Result<f64> {
        let mut obj = vec![0.0; num_vars];
        obj[n * side + m] = 1.0;
        let sol = simplex::maximize(&lp, &obj).map_err(lp_err)?;
        Ok(sol.objective)
    };

    let q00_u = clamp01(a[0] * a[0] * yield_max(0, 0)?);
    let q10_u = clamp01(a[1] * a[0] * yield_max(1, 0)?);
    let q01_u = clamp01(a[0] * a[1] * yield_max(0, 1)?);
    let q20_u = clamp01(a[2] * a[0] * yield_max(2, 0)?);
    let q02_u = clamp01(a[0] * a[2] * yield_max(0, 2)?);
    let q11_u = clamp01(a[1] * a[1] * yield_max(1, 1)?);

    let mut qsum_obj = vec![0.0; num_vars];
    for (n, m) in [(0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1)] {
        qsum_obj[n * side + m] = a[n] * a[m];
    }
    let qsum_l = clamp01(simplex::minimize(&lp, &qsum_obj).map_err(lp_err)?.objective);

    Ok(QBounds {
        q00_u,
        q10_u,
        q01_u,
        q20_u,
        q02_u,
        q11_u,
        qsum_l,
    })
}
