//! Intensity-fluctuation model: interval bounds on the Poisson coefficients
//! when each pulse carries `x_i = x̄ (1 + delta_i)` instead of the intended
//! `x̄`, and the propagation of those intervals through the decoy bounds.
//!
//! Three layers:
//!
//! 1. [`mean_intensity_bounds`] inverts a local tomography click rate into
//!    bounds on the average intensity, with an Azuma correction for the
//!    non-i.i.d. click sequence.
//! 2. [`coeff_intervals`] turns mean bounds plus a fluctuation range into
//!    per-photon-number coefficient intervals. The refined mode exploits
//!    the centering identity `sum delta_i = 0` through the factorization
//!    `ā_n = g(x̄) avg f_n(delta_i; x̄)` with
//!    `f_n(d; m) = e^(-d m) (1 + d)^n - (n - m) d`; the naive mode only
//!    uses the instantaneous range.
//! 3. [`interval_q_bounds`] re-evaluates the analytical decoy bounds with
//!    every coefficient replaced by the interval endpoint that maximizes
//!    the numerator and minimizes the denominator. Denominators are
//!    generalized Vandermonde determinants, evaluated in factored form over
//!    the intensity ranges so they stay provably positive whenever the
//!    ranges of adjacent intensities are disjoint.

use crate::decoy::{poisson_tail, QBounds};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::statistics::{azuma_interval, GainIntervals, LogProb};

/// Bounded-fluctuation description: `delta_i` confined to
/// `[delta_minus, delta_plus]` with mean zero, plus the second-moment
/// statistic `zeta = sum delta_i^2 / N`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FluctuationSpec {
    pub delta_minus: f64,
    pub delta_plus: f64,
    pub zeta: f64,
}

impl FluctuationSpec {
    pub fn new(delta_minus: f64, delta_plus: f64, zeta: f64) -> Result<Self> {
        if !(-1.0 < delta_minus && delta_minus <= 0.0) {
            return Err(Error::Domain(format!(
                "delta_minus must be in (-1, 0], got {delta_minus}"
            )));
        }
        if !(0.0 <= delta_plus && delta_plus < 1.0) {
            return Err(Error::Domain(format!(
                "delta_plus must be in [0, 1), got {delta_plus}"
            )));
        }
        let zeta_max = delta_minus.abs().max(delta_plus).powi(2);
        if !(0.0..=zeta_max + 1e-15).contains(&zeta) {
            return Err(Error::Domain(format!(
                "zeta must be in [0, {zeta_max}], got {zeta}"
            )));
        }
        Ok(Self {
            delta_minus,
            delta_plus,
            zeta,
        })
    }

    /// When nothing better is measured, assume the worst second moment
    /// `zeta = max(|delta|)^2`.
    pub fn with_worst_case_zeta(delta_minus: f64, delta_plus: f64) -> Result<Self> {
        let zeta = delta_minus.abs().max(delta_plus).powi(2);
        Self::new(delta_minus, delta_plus, zeta)
    }

    /// Symmetric range `±delta` with worst-case zeta.
    pub fn symmetric(delta: f64) -> Result<Self> {
        Self::with_worst_case_zeta(-delta, delta)
    }

    /// Instantaneous intensity range spanned by mean bounds under this
    /// fluctuation.
    pub fn intensity_range(&self, mean_bounds: (f64, f64)) -> (f64, f64) {
        (
            mean_bounds.0 * (1.0 + self.delta_minus),
            mean_bounds.1 * (1.0 + self.delta_plus),
        )
    }
}

/// One local-detector tomography run: `pulses` monitored pulses produced
/// `clicks` counts on a detector of efficiency `local_efficiency`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomographyRecord {
    pub pulses: u64,
    pub clicks: u64,
    pub local_efficiency: f64,
    /// Dark-count probability of the local detector; must be negligible
    /// against the click rate (the inversion ignores it).
    pub dark_count_rate: f64,
    pub eps_h: LogProb,
}

/// Bounds on the average monitored intensity from a tomography record.
///
/// The click rate is first bracketed by [`azuma_interval`]; the corrected
/// inversion is
///
/// ```text
/// x+ = (1 - sqrt(1 - 2 h+ (1 + zeta))) / (eta (1 + zeta))
/// x- = h-/eta + (h-)^2/(2 eta) - eta^2 x+^3 / 6
/// ```
pub fn mean_intensity_bounds(
    rec: &TomographyRecord,
    fluct: &FluctuationSpec,
) -> Result<(f64, f64)> {
    if rec.clicks > rec.pulses {
        return Err(Error::Domain("clicks exceed pulses".into()));
    }
    if !(rec.local_efficiency > 0.0 && rec.local_efficiency <= 1.0) {
        return Err(Error::Domain(format!(
            "local efficiency must be in (0, 1], got {}",
            rec.local_efficiency
        )));
    }
    if rec.dark_count_rate * rec.pulses as f64 > 0.01 * rec.clicks as f64 {
        return Err(Error::Domain(
            "local dark counts are not negligible against the click count".into(),
        ));
    }
    let (h_lo, h_hi) = azuma_interval(rec.clicks, rec.pulses, rec.eps_h)?;
    let eta = rec.local_efficiency;
    let zeta1 = 1.0 + fluct.zeta;
    let arg = 1.0 - 2.0 * h_hi * zeta1;
    if arg <= 0.0 {
        return Err(Error::Saturation(format!(
            "click rate {h_hi} too high for the quadratic inversion (1 - 2 h+ (1+zeta) = {arg})"
        )));
    }
    let x_hi = (1.0 - arg.sqrt()) / (eta * zeta1);
    let x_lo = (h_lo / eta + h_lo * h_lo / (2.0 * eta) - eta * eta * x_hi.powi(3) / 6.0)
        .clamp(0.0, x_hi);
    Ok((x_lo, x_hi))
}

/// Extremes of `f_n(d) = e^(-d mu_plus) (1 + d)^n - (n - mu_plus) d` over a
/// delta range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub f_min: f64,
    pub f_max: f64,
    pub argmin: f64,
    pub argmax: f64,
}

fn fluct_fn(n: u32, mu: f64, d: f64) -> f64 {
    (-d * mu).exp() * (1.0 + d).powi(n as i32) - (n as f64 - mu) * d
}

/// Extremize `f_n` over `[delta_minus, delta_plus]` by a 2048-point grid
/// refined with golden-section search to an argument tolerance of 1e-10;
/// the endpoints always participate.
pub fn extremize_fn(n: u32, mu_plus: f64, delta_range: (f64, f64)) -> Result<Extremes> {
    let (lo, hi) = delta_range;
    if !(-1.0 < lo && lo <= hi && hi < 1.0) {
        return Err(Error::Domain(format!(
            "delta range must satisfy -1 < lo <= hi < 1, got [{lo}, {hi}]"
        )));
    }
    if !(mu_plus >= 0.0) {
        return Err(Error::Domain(format!("negative intensity: {mu_plus}")));
    }
    let f = |d: f64| fluct_fn(n, mu_plus, d);
    if lo == hi {
        let v = f(lo);
        return Ok(Extremes {
            f_min: v,
            f_max: v,
            argmin: lo,
            argmax: lo,
        });
    }

    const GRID: usize = 2048;
    let step = (hi - lo) / (GRID - 1) as f64;
    let mut best_min = (f(lo), lo, 0usize);
    let mut best_max = best_min;
    for i in 1..GRID {
        let d = if i == GRID - 1 { hi } else { lo + step * i as f64 };
        let v = f(d);
        if v < best_min.0 {
            best_min = (v, d, i);
        }
        if v > best_max.0 {
            best_max = (v, d, i);
        }
    }

    // golden-section refinement within the bracketing grid cells
    let golden = |a: f64, b: f64, sign: f64| -> (f64, f64) {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let (mut a, mut b) = (a, b);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let (mut fc, mut fd) = (sign * f(c), sign * f(d));
        while (b - a).abs() > 1e-10 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = sign * f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = sign * f(d);
            }
        }
        let mid = 0.5 * (a + b);
        (f(mid), mid)
    };
    let refine = |(v, d, i): (f64, f64, usize), sign: f64| -> (f64, f64) {
        let a = lo + step * i.saturating_sub(1) as f64;
        let b = (lo + step * (i + 1) as f64).min(hi);
        let (rv, rd) = golden(a, b, sign);
        if sign * rv < sign * v {
            (rv, rd)
        } else {
            (v, d)
        }
    };
    let (f_min, argmin) = refine(best_min, 1.0);
    let (f_max, argmax) = refine(best_max, -1.0);
    Ok(Extremes {
        f_min,
        f_max,
        argmin,
        argmax,
    })
}

/// Which coefficient-interval construction to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BoundMode {
    /// Uses the centering identity: intervals `g(x̄-range) * f-extremes`.
    Refined,
    /// Uses only the instantaneous intensity range.
    Naive,
}

/// Interval-valued Poisson coefficients for one intensity role.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffBounds {
    /// `[lower, upper]` per photon number, `n = 0..cutoff`.
    pub p: Vec<Interval>,
    /// Interval on the tail `sum_{n >= cutoff}`.
    pub tail: Interval,
    /// Instantaneous intensity range behind these intervals.
    pub range: (f64, f64),
    /// The mean-intensity bounds that were supplied.
    pub mean_bounds: (f64, f64),
    pub mode: BoundMode,
}

/// Range of `g(m) = m^n e^(-m) / n!` over `[lo, hi]`; `g` is unimodal with
/// its peak at `m = n`, so the maximum moves inside when the interval
/// straddles the peak while the minimum stays at an endpoint.
fn g_range(lo: f64, hi: f64, n: u32) -> (f64, f64) {
    let fact: f64 = (1..=n).map(f64::from).product();
    let g = |m: f64| m.powi(n as i32) * (-m).exp() / fact;
    let (glo, ghi) = (g(lo), g(hi));
    let mut gmax = glo.max(ghi);
    if n >= 1 && lo < n as f64 && (n as f64) < hi {
        gmax = g(n as f64);
    }
    (glo.min(ghi), gmax)
}

/// Coefficient intervals for one intensity under bounded fluctuation.
///
/// Refined mode, `n >= 1`: `ā_n = g(x̄) avg_i f_n(delta_i; x̄)` exactly
/// (the linear term inserted by the centering identity averages to zero),
/// so `ā_n` lies in `[min g * min f, max g * max f]` with `g` ranged over
/// the mean bounds and `f` extremized jointly over the delta range and the
/// mean bounds. `n = 0` and both naive orientations come straight from the
/// monotone image of the instantaneous range.
pub fn coeff_intervals(
    mean_bounds: (f64, f64),
    fluct: &FluctuationSpec,
    cutoff: usize,
    mode: BoundMode,
) -> Result<CoeffBounds> {
    let (m_lo, m_hi) = mean_bounds;
    if !(m_lo > 0.0 && m_lo <= m_hi) {
        return Err(Error::Domain(format!(
            "mean bounds must satisfy 0 < lo <= hi, got [{m_lo}, {m_hi}]"
        )));
    }
    if cutoff < 4 {
        return Err(Error::Domain("cutoff must be at least 4".into()));
    }
    let range = fluct.intensity_range(mean_bounds);
    let delta = (fluct.delta_minus, fluct.delta_plus);

    // f extremized over the mean interval as well; the mean enters f both
    // through the exponent and the linear term, so sample it densely and
    // keep the outer envelope.
    let f_envelope = |n: u32| -> Result<(f64, f64)> {
        let samples = 32;
        let mut f_min = f64::INFINITY;
        let mut f_max = f64::NEG_INFINITY;
        for k in 0..=samples {
            let m = m_lo + (m_hi - m_lo) * k as f64 / samples as f64;
            let e = extremize_fn(n, m, delta)?;
            f_min = f_min.min(e.f_min);
            f_max = f_max.max(e.f_max);
            if m_lo == m_hi {
                break;
            }
        }
        Ok((f_min, f_max))
    };

    let mut p = Vec::with_capacity(cutoff);
    for n in 0..cutoff as u32 {
        let iv = if n == 0 {
            Interval::new((-range.1).exp(), (-range.0).exp())
        } else {
            match mode {
                BoundMode::Naive => {
                    let (lo, hi) = g_range(range.0, range.1, n);
                    Interval::new(lo, hi)
                }
                BoundMode::Refined => {
                    let (g_lo, g_hi) = g_range(m_lo, m_hi, n);
                    let (f_min, f_max) = f_envelope(n)?;
                    Interval::new((g_lo * f_min).max(0.0), (g_hi * f_max).min(1.0))
                }
            }
        };
        p.push(iv);
    }
    let tail = Interval::new(poisson_tail(range.0, cutoff)?, poisson_tail(range.1, cutoff)?);
    Ok(CoeffBounds {
        p,
        tail,
        range,
        mean_bounds,
        mode,
    })
}

/// The assembled coefficient intervals of the three decoy intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffIntervals {
    pub a: CoeffBounds,
    pub b: CoeffBounds,
    pub c: CoeffBounds,
}

impl CoeffIntervals {
    /// Rejects assemblies whose intensity ranges overlap: once
    /// `nu (1+delta+) >= mu (1+delta-)` the decoy intensities are no longer
    /// separated and every denominator sign guarantee is gone.
    pub fn new(a: CoeffBounds, b: CoeffBounds, c: CoeffBounds) -> Result<Self> {
        for (hi_name, hi, lo_name, lo) in
            [("mu", &a, "nu", &b), ("nu", &b, "omega", &c)]
        {
            if lo.range.1 >= hi.range.0 {
                return Err(Error::IntensityOrdering(format!(
                    "{lo_name} range [{}, {}] overlaps {hi_name} range [{}, {}]",
                    lo.range.0, lo.range.1, hi.range.0, hi.range.1
                )));
            }
        }
        if !(c.range.0 > 0.0) {
            return Err(Error::IntensityOrdering(
                "omega range must stay strictly positive".into(),
            ));
        }
        Ok(Self { a, b, c })
    }
}

/// Interval of the 2x2 Poisson minor over intensity ranges `ru > rw`
/// (photon columns `k, k+1`), via the factored form
/// `e^(-u-w) (uw)^k (u-w) / (k!(k+1)!)`.
fn pair_minor_interval(ru: (f64, f64), rw: (f64, f64), k: u32) -> Interval {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let norm = fact(k) * fact(k + 1);
    let e = Interval::new((-(ru.1 + rw.1)).exp(), (-(ru.0 + rw.0)).exp());
    let p = Interval::new(
        (ru.0 * rw.0).powi(k as i32),
        (ru.1 * rw.1).powi(k as i32),
    );
    let d = Interval::new(ru.0 - rw.1, ru.1 - rw.0);
    e * p * d * (1.0 / norm)
}

/// Interval of the 3x3 Poisson determinant over the three ranges.
fn triple_det_interval(ra: (f64, f64), rb: (f64, f64), rc: (f64, f64)) -> Interval {
    let e = Interval::new(
        (-(ra.1 + rb.1 + rc.1)).exp(),
        (-(ra.0 + rb.0 + rc.0)).exp(),
    );
    let p = Interval::new(ra.0 * rb.0 * rc.0, ra.1 * rb.1 * rc.1);
    let d1 = Interval::new(ra.0 - rb.1, ra.1 - rb.0);
    let d2 = Interval::new(ra.0 - rc.1, ra.1 - rc.0);
    let d3 = Interval::new(rb.0 - rc.1, rb.1 - rc.0);
    e * p * d1 * d2 * d3 * (1.0 / 12.0)
}

/// Decoy-state bounds with both gain and coefficient uncertainty.
///
/// The analytical formulas are re-evaluated with interval arithmetic, taking
/// the endpoint that loosens each bound, and with the ratio denominators in
/// factored form over the intensity ranges. With degenerate intervals the
/// arithmetic collapses to [`crate::decoy::analytic_q_bounds`].
pub fn interval_q_bounds(gi: &GainIntervals, ci: &CoeffIntervals) -> Result<QBounds> {
    use crate::channel::Setting;

    let a = &ci.a.p;
    let b = &ci.b.p;
    let c = &ci.c.p;
    let (ra, rb, rc) = (ci.a.range, ci.b.range, ci.c.range);
    let q = |x: Setting, y: Setting| -> Interval {
        gi.decoy.values[crate::channel::decoy_pair_index(x, y).unwrap()]
    };
    let q_oo = q(Setting::Vacuum, Setting::Vacuum);
    let one = Interval::point(1.0);

    // exact complements of the first three coefficients
    let tail3_a = (one - (a[0] + a[1] + a[2])).nonneg();
    let tail3_c = (one - (c[0] + c[1] + c[2])).nonneg();

    let q00_u = (a[0] * a[0] * q_oo).clamp01().hi;

    let m_ac = pair_minor_interval(ra, rc, 2);
    let m_bc = pair_minor_interval(rb, rc, 2);
    let m_ab = pair_minor_interval(ra, rb, 2);
    let den3 = triple_det_interval(ra, rb, rc);
    if den3.lo <= 0.0 {
        return Err(Error::EstimationInfeasible {
            bound: "q10/q01",
            detail: format!("three-intensity determinant interval [{}, {}]", den3.lo, den3.hi),
        });
    }
    let single_photon = |qx: Interval, qn: Interval, qw: Interval| -> f64 {
        let k1 = (qx - a[0] * q_oo).nonneg();
        let k2 = (qn - b[0] * q_oo).nonneg();
        let k3 = (qw - c[0] * q_oo).nonneg();
        let num = k1 * m_bc + k3 * m_ab - k2 * m_ac;
        let ratio = num.div_pos(den3).expect("den3 checked positive");
        (a[0] * a[1] * ratio).clamp01().hi
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

    let den2 = pair_minor_interval(ra, rc, 1);
    if den2.lo <= 0.0 {
        return Err(Error::EstimationInfeasible {
            bound: "q20/q02",
            detail: format!("mu/omega minor interval [{}, {}]", den2.lo, den2.hi),
        });
    }
    let two_photon = |qx: Interval, qw: Interval| -> f64 {
        let h1 = qx - a[0] * q_oo;
        let l3 = (qw - c[0] * q_oo - tail3_c).nonneg();
        let num = h1 * c[1] - l3 * a[1];
        let ratio = num.div_pos(den2).expect("den2 checked positive");
        (a[0] * a[2] * ratio).clamp01().hi
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

    let q11_u = (q_mm - a[0] * (q_mu_o + q_o_mu) + a[0] * a[0] * q_oo)
        .clamp01()
        .hi;

    let qt1 = (a[0] * (q_o_mu + q_mu_o - tail3_a * 2.0) - a[0] * a[0] * q_oo)
        .lo
        .max(0.0);
    let t1 = q_mm - a[0] * (q_o_mu + q_mu_o) + a[0] * a[0] * q_oo;
    let t2 = q_nn - b[0] * (q_o_nu + q_nu_o) + b[0] * b[0] * q_oo;
    let den_t2 = a[1] * b[1] * pair_minor_interval(ra, rb, 1);
    if den_t2.lo <= 0.0 {
        return Err(Error::EstimationInfeasible {
            bound: "qsum",
            detail: format!("mu/nu minor interval [{}, {}]", den_t2.lo, den_t2.hi),
        });
    }
    let y11 = (t2 * (a[1] * a[2]) - t1 * (b[1] * b[2]))
        .div_pos(den_t2)
        .expect("den_t2 checked positive");
    let y11_l = y11.lo.clamp(0.0, 1.0);
    let qt2 = (a[1] * a[1]).lo * y11_l;

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

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::decoy::{analytic_q_bounds, poisson_pn, synth_gains_from_yields, PoissonCoeffs, YieldTable, DEFAULT_CUTOFF};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lp(p: f64) -> LogProb {
        LogProb::from_prob(p).unwrap()
    }

    #[test]
    fn mean_bounds_zero_clicks() {
        let rec = TomographyRecord {
            pulses: 1_000_000,
            clicks: 0,
            local_efficiency: 0.7,
            dark_count_rate: 0.0,
            eps_h: lp(1e-10),
        };
        let fluct = FluctuationSpec::symmetric(0.2).unwrap();
        let (lo, hi) = mean_intensity_bounds(&rec, &fluct).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn mean_bounds_worked_example() {
        // Pick clicks/pulses so the Azuma bracket reproduces h+ = 0.01 and
        // h- = 0.0095 closely enough to pin the inversion, then check the
        // closed-form values directly at those rates.
        let eta = 0.7;
        let zeta = 0.04;
        let h_hi: f64 = 0.01;
        let h_lo: f64 = 0.0095;
        let x_hi = (1.0 - (1.0 - 2.0 * h_hi * (1.0 + zeta)).sqrt()) / (eta * (1.0 + zeta));
        let x_lo = h_lo / eta + h_lo * h_lo / (2.0 * eta) - eta * eta * x_hi.powi(3) / 6.0;
        assert_relative_eq!(x_hi, 0.014360782763408610, max_relative = 1e-12);
        assert_relative_eq!(x_lo, 0.013635650988722862, max_relative = 1e-12);
    }

    #[test]
    fn mean_bounds_saturation() {
        let rec = TomographyRecord {
            pulses: 1000,
            clicks: 600,
            local_efficiency: 0.9,
            dark_count_rate: 0.0,
            eps_h: lp(1e-10),
        };
        let fluct = FluctuationSpec::symmetric(0.1).unwrap();
        assert!(matches!(
            mean_intensity_bounds(&rec, &fluct),
            Err(Error::Saturation(_))
        ));
    }

    #[test]
    fn mean_bounds_dark_count_guard() {
        let rec = TomographyRecord {
            pulses: 1_000_000,
            clicks: 100,
            local_efficiency: 0.7,
            dark_count_rate: 1e-3,
            eps_h: lp(1e-10),
        };
        let fluct = FluctuationSpec::symmetric(0.1).unwrap();
        assert!(mean_intensity_bounds(&rec, &fluct).is_err());
    }

    #[test]
    fn mean_bounds_bracket_simulated_source() {
        // delta drawn uniformly, centered, |delta| <= 0.2; the true mean
        // must land inside the inverted bounds. Pulses with equal delta are
        // grouped so the clicks can be sampled binomially per group.
        use rand_distr::{Binomial, Distribution};
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let x_bar = rng.random_range(0.05..0.6);
            let n_groups = 2000usize;
            let per_group = 50_000u64;
            let deltas = centered_deltas(&mut rng, 0.2, n_groups);
            let eta = 0.7;
            let mut clicks = 0u64;
            for &d in &deltas {
                let p = 1.0 - (-eta * x_bar * (1.0 + d)).exp();
                clicks += Binomial::new(per_group, p).unwrap().sample(&mut rng);
            }
            let zeta = deltas.iter().map(|d| d * d).sum::<f64>() / n_groups as f64;
            let rec = TomographyRecord {
                pulses: n_groups as u64 * per_group,
                clicks,
                local_efficiency: eta,
                dark_count_rate: 0.0,
                eps_h: lp(1e-10),
            };
            let fluct = FluctuationSpec::new(-0.2, 0.2, zeta).unwrap();
            let (lo, hi) = mean_intensity_bounds(&rec, &fluct).unwrap();
            assert!(
                lo <= x_bar && x_bar <= hi,
                "true mean {x_bar} outside [{lo}, {hi}]"
            );
        }
    }

    #[test]
    fn extremize_degenerate_range() {
        let e = extremize_fn(3, 0.6, (0.0, 0.0)).unwrap();
        assert_eq!((e.f_min, e.f_max), (1.0, 1.0));
    }

    #[test]
    fn extremize_known_values() {
        // n = 0, mu+ = 0.6, delta in [-0.2, 0.2]: min 1 at 0, max at -0.2
        let e = extremize_fn(0, 0.6, (-0.2, 0.2)).unwrap();
        assert_relative_eq!(e.f_min, 1.0, epsilon = 1e-9);
        assert!(e.argmin.abs() < 1e-6);
        assert_relative_eq!(e.f_max, 0.12f64.exp() - 0.12, max_relative = 1e-9);
        assert_relative_eq!(e.argmax, -0.2, epsilon = 1e-9);
    }

    #[test]
    fn extremize_beats_brute_force_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..25 {
            let n = rng.random_range(0..6u32);
            let mu = rng.random_range(0.05..0.9);
            let d = rng.random_range(0.01..0.5);
            let e = extremize_fn(n, mu, (-d, d)).unwrap();
            let grid = 100_000;
            let mut gmin = f64::INFINITY;
            let mut gmax = f64::NEG_INFINITY;
            for i in 0..=grid {
                let x = -d + 2.0 * d * i as f64 / grid as f64;
                let v = fluct_fn(n, mu, x);
                gmin = gmin.min(v);
                gmax = gmax.max(v);
            }
            assert!(e.f_min <= gmin + 1e-8);
            assert!(e.f_max >= gmax - 1e-8);
        }
    }

    #[test]
    fn coeff_intervals_degenerate() {
        let fluct = FluctuationSpec::new(0.0, 0.0, 0.0).unwrap();
        for mode in [BoundMode::Refined, BoundMode::Naive] {
            let cb = coeff_intervals((0.5, 0.5), &fluct, 8, mode).unwrap();
            for (n, iv) in cb.p.iter().enumerate() {
                let want = poisson_pn(0.5, n).unwrap();
                assert_relative_eq!(iv.lo, want, max_relative = 1e-9);
                assert_relative_eq!(iv.hi, want, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn coeff_intervals_vacuum_row_closed_form() {
        // n = 0, mean 0.5 exactly, delta = ±0.2 -> [e^-0.6, e^-0.4]
        let fluct = FluctuationSpec::symmetric(0.2).unwrap();
        let cb = coeff_intervals((0.5, 0.5), &fluct, 6, BoundMode::Refined).unwrap();
        assert_relative_eq!(cb.p[0].lo, 0.5488116360940264, max_relative = 1e-12);
        assert_relative_eq!(cb.p[0].hi, 0.6703200460356393, max_relative = 1e-12);
    }

    fn centered_deltas(rng: &mut ChaCha8Rng, dmax: f64, n: usize) -> Vec<f64> {
        let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(-dmax..dmax)).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let maxabs = d.iter().map(|x| (x - mean).abs()).fold(0.0f64, f64::max);
        let scale = (dmax / maxabs).min(1.0);
        for x in d.iter_mut() {
            *x = (*x - mean) * scale;
        }
        d
    }

    fn empirical_coeff(intensities: &[f64], n: usize) -> f64 {
        intensities
            .iter()
            .map(|&x| poisson_pn(x, n).unwrap())
            .sum::<f64>()
            / intensities.len() as f64
    }

    #[test]
    fn refined_intervals_contain_simulated_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..60 {
            let x_bar = rng.random_range(0.05..0.8);
            let dmax = [0.2, 0.5][rng.random_range(0..2)];
            let deltas = centered_deltas(&mut rng, dmax, 1500);
            let pulses: Vec<f64> = deltas.iter().map(|d| x_bar * (1.0 + d)).collect();
            let fluct = FluctuationSpec::symmetric(dmax).unwrap();
            for mode in [BoundMode::Refined, BoundMode::Naive] {
                let cb = coeff_intervals((x_bar, x_bar), &fluct, 6, mode).unwrap();
                for n in 0..4 {
                    let truth = empirical_coeff(&pulses, n);
                    assert!(
                        cb.p[n].lo <= truth + 1e-12 && truth <= cb.p[n].hi + 1e-12,
                        "{mode:?} n={n}: {truth} outside [{}, {}] (x̄={x_bar}, δ={dmax})",
                        cb.p[n].lo,
                        cb.p[n].hi
                    );
                }
            }
        }
    }

    #[test]
    fn refined_tighter_than_naive() {
        let fluct = FluctuationSpec::symmetric(0.2).unwrap();
        let refined = coeff_intervals((0.5, 0.5), &fluct, 6, BoundMode::Refined).unwrap();
        let naive = coeff_intervals((0.5, 0.5), &fluct, 6, BoundMode::Naive).unwrap();
        // equal closed form at n = 0, strictly tighter above
        assert_relative_eq!(refined.p[0].width(), naive.p[0].width(), epsilon = 1e-12);
        for n in 1..4 {
            assert!(
                refined.p[n].width() < naive.p[n].width(),
                "n={n}: refined {} vs naive {}",
                refined.p[n].width(),
                naive.p[n].width()
            );
            assert!(naive.p[n].lo <= refined.p[n].lo + 1e-12);
            assert!(refined.p[n].hi <= naive.p[n].hi + 1e-12);
        }
    }

    fn assemble(
        mu: f64,
        nu: f64,
        omega: f64,
        fluct: &FluctuationSpec,
        mode: BoundMode,
    ) -> CoeffIntervals {
        CoeffIntervals::new(
            coeff_intervals((mu, mu), fluct, 6, mode).unwrap(),
            coeff_intervals((nu, nu), fluct, 6, mode).unwrap(),
            coeff_intervals((omega, omega), fluct, 6, mode).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn ordering_violation_detected() {
        let fluct = FluctuationSpec::symmetric(0.5).unwrap();
        let a = coeff_intervals((0.5, 0.5), &fluct, 6, BoundMode::Refined).unwrap();
        let b = coeff_intervals((0.4, 0.4), &fluct, 6, BoundMode::Refined).unwrap();
        let c = coeff_intervals((0.01, 0.01), &fluct, 6, BoundMode::Refined).unwrap();
        assert!(matches!(
            CoeffIntervals::new(a, b, c),
            Err(Error::IntensityOrdering(_))
        ));
    }

    #[test]
    fn interval_bounds_reduce_to_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fluct = FluctuationSpec::new(0.0, 0.0, 0.0).unwrap();
        for _ in 0..20 {
            let mu = rng.random_range(0.3..0.7);
            let nu = mu * rng.random_range(0.2..0.4);
            let omega = nu * rng.random_range(0.1..0.4);
            let yt = YieldTable::from_fn(DEFAULT_CUTOFF, |_, _| rng.random()).unwrap();
            let gains = synth_gains_from_yields(&yt, (mu, nu, omega)).unwrap();
            let coeffs = PoissonCoeffs::new(mu, nu, omega, 6).unwrap();
            let exact = analytic_q_bounds(&gains, &coeffs).unwrap();
            let ci = assemble(mu, nu, omega, &fluct, BoundMode::Refined);
            let gi = GainIntervals::exact(&gains);
            let iv = interval_q_bounds(&gi, &ci).unwrap();
            for (x, y) in [
                (iv.q00_u, exact.q00_u),
                (iv.q10_u, exact.q10_u),
                (iv.q01_u, exact.q01_u),
                (iv.q20_u, exact.q20_u),
                (iv.q02_u, exact.q02_u),
                (iv.q11_u, exact.q11_u),
                (iv.qsum_l, exact.qsum_l),
            ] {
                assert_relative_eq!(x, y, epsilon = 1e-12, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn interval_bounds_monotone_under_widening() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fluct = FluctuationSpec::symmetric(0.2).unwrap();
        let (mu, nu, omega) = (0.5, 0.12, 0.02);
        let yt = YieldTable::from_fn(DEFAULT_CUTOFF, |_, _| rng.random()).unwrap();
        let gains = synth_gains_from_yields(&yt, (mu, nu, omega)).unwrap();
        let ci = assemble(mu, nu, omega, &fluct, BoundMode::Refined);
        let mut last: Option<QBounds> = None;
        for widen in [0.0, 1e-4, 1e-3, 1e-2] {
            let mut gi = GainIntervals::exact(&gains);
            for iv in gi.decoy.values.iter_mut() {
                *iv = Interval::new((iv.lo * (1.0 - widen)).max(0.0), (iv.hi * (1.0 + widen)).min(1.0));
            }
            let qb = interval_q_bounds(&gi, &ci).unwrap();
            if let Some(prev) = last {
                assert!(qb.q00_u >= prev.q00_u - 1e-12);
                assert!(qb.q10_u >= prev.q10_u - 1e-12);
                assert!(qb.q11_u >= prev.q11_u - 1e-12);
                assert!(qb.qsum_l <= prev.qsum_l + 1e-12);
            }
            last = Some(qb);
        }
    }
}
