//! Concentration intervals and the composable failure-probability budget.
//!
//! Two situations appear in the pipeline: gains observed over i.i.d. trials
//! (Chernoff intervals) and click counts whose per-trial probability may
//! drift arbitrarily within a martingale model (Azuma intervals). Both
//! consume failure probabilities that can be as small as `10^-766` after the
//! coherent-attack lift, so every epsilon is carried as a natural logarithm.

use crate::channel::GainSet;
use crate::error::{Error, Result};
use crate::interval::Interval;

/// A probability stored as its natural logarithm, `ln(eps) <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub fn from_prob(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!(
                "probability must be in (0, 1], got {p}"
            )));
        }
        Ok(Self(p.ln()))
    }

    /// Wrap an already-logarithmic value (must be `<= 0`).
    pub fn from_ln(ln_p: f64) -> Result<Self> {
        if !(ln_p <= 0.0) {
            return Err(Error::Domain(format!("ln(eps) must be <= 0, got {ln_p}")));
        }
        Ok(Self(ln_p))
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn log10(self) -> f64 {
        self.0 / std::f64::consts::LN_10
    }

    /// `log2(1/eps)`, the bit cost of this failure probability.
    pub fn log2_inv(self) -> f64 {
        -self.0 / std::f64::consts::LN_2
    }

    /// Linear-domain value; underflows to zero below ~1e-308.
    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    /// Multiply by a fraction in (0, 1].
    pub fn scale(self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Domain(format!(
                "scale fraction must be in (0, 1], got {fraction}"
            )));
        }
        Ok(Self(self.0 + fraction.ln()))
    }
}

/// The composable-security failure probabilities and their split fractions.
///
/// Constructed by [`budget_split`]; satisfies
/// `eps_pa + eps_cor + eps_s + 11 eps_pe = eps_col` by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBudget {
    pub eps_coh: f64,
    pub eps_col: LogProb,
    pub eps_pa: LogProb,
    pub eps_cor: LogProb,
    pub eps_s: LogProb,
    pub eps_pe: LogProb,
    pub r_sec: f64,
    pub r_cor: f64,
    pub r_s: f64,
}

/// Split a coherent-attack security target into the per-stage failure
/// probabilities.
///
/// The collective-attack budget is `eps_col = eps_coh / (N+1)^63`; the
/// fractions then allocate it as `eps_pa = r_sec eps_col`,
/// `eps_cor = r_cor eps_col`, `eps_s = r_s eps_col`, and the remainder is
/// spread over the eleven estimated gains,
/// `eps_pe = eps_col (1 - r_sec - r_cor - r_s) / 11`.
pub fn budget_split(
    eps_coh: f64,
    pulses: u64,
    r_sec: f64,
    r_cor: f64,
    r_s: f64,
) -> Result<EpsilonBudget> {
    if !(eps_coh > 0.0 && eps_coh <= 1.0) {
        return Err(Error::Domain(format!(
            "eps_coh must be in (0, 1], got {eps_coh}"
        )));
    }
    let fractions = [r_sec, r_cor, r_s];
    if fractions.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("split fractions must be positive".into()));
    }
    let rest = 1.0 - r_sec - r_cor - r_s;
    if !(rest > 0.0) {
        return Err(Error::Domain(
            "split fractions must sum to less than one".into(),
        ));
    }
    let eps_col = LogProb::from_ln(eps_coh.ln() - 63.0 * ((pulses as f64) + 1.0).ln())?;
    Ok(EpsilonBudget {
        eps_coh,
        eps_col,
        eps_pa: eps_col.scale(r_sec)?,
        eps_cor: eps_col.scale(r_cor)?,
        eps_s: eps_col.scale(r_s)?,
        eps_pe: eps_col.scale(rest / 11.0)?,
        r_sec,
        r_cor,
        r_s,
    })
}

/// Two-sided Chernoff interval for the expectation behind an observed gain.
///
/// With `f(eps) = sqrt(2 ln(1/eps))` and `C = N Q̂` observed clicks,
///
/// ```text
/// Q- = Q̂ (1 - f(eps_pe^4 / 16) / sqrt(C))
/// Q+ = Q̂ (1 + f(eps_pe^(3/2)) / sqrt(C))
/// ```
///
/// clamped to [0, 1]. A zero observation degenerates to
/// `[0, f(eps_pe^(3/2))^2 / N]`, the zero-success limit of the multiplicative
/// bound.
pub fn chernoff_interval(
    observed_gain: f64,
    trial_count: u64,
    eps_pe: LogProb,
) -> Result<(f64, f64)> {
    if trial_count == 0 {
        return Err(Error::Domain("trial_count must be positive".into()));
    }
    if !(0.0..=1.0).contains(&observed_gain) {
        return Err(Error::Domain(format!(
            "observed gain must be in [0, 1], got {observed_gain}"
        )));
    }
    let n = trial_count as f64;
    // ln(1/eps^(3/2)) = -1.5 ln eps ; ln(16/eps^4) = ln 16 - 4 ln eps
    let f_upper_sq = 2.0 * (-1.5 * eps_pe.ln());
    let f_lower_sq = 2.0 * (16.0f64.ln() - 4.0 * eps_pe.ln());
    if observed_gain == 0.0 {
        return Ok((0.0, (f_upper_sq / n).min(1.0)));
    }
    let clicks = n * observed_gain;
    let lower = observed_gain * (1.0 - (f_lower_sq / clicks).sqrt());
    let upper = observed_gain * (1.0 + (f_upper_sq / clicks).sqrt());
    Ok((lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0)))
}

/// Azuma interval for a count whose per-trial probability may drift.
///
/// `h± = (n̂ ± sqrt(2 n̂ ln(1/eps_h))) / N`, clamped to [0, 1].
pub fn azuma_interval(observed_count: u64, total: u64, eps_h: LogProb) -> Result<(f64, f64)> {
    if total == 0 {
        return Err(Error::Domain("total must be positive".into()));
    }
    if observed_count > total {
        return Err(Error::Domain(format!(
            "observed count {observed_count} exceeds total {total}"
        )));
    }
    let n_hat = observed_count as f64;
    let total = total as f64;
    let dev = (2.0 * n_hat * (-eps_h.ln())).sqrt();
    let lower = ((n_hat - dev) / total).clamp(0.0, 1.0);
    let upper = ((n_hat + dev) / total).clamp(0.0, 1.0);
    Ok((lower, upper))
}

/// Chernoff-corrected expectation intervals for every gain in a [`GainSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GainIntervals {
    pub decoy: crate::channel::PairTable<Interval>,
    pub code: Interval,
}

impl GainIntervals {
    /// Apply [`chernoff_interval`] with budget `eps_pe` to the nine decoy
    /// gains and the code gain, each with its own trial count.
    pub fn from_gain_set(gains: &GainSet, eps_pe: LogProb) -> Result<Self> {
        let mut decoy = crate::channel::PairTable::default();
        for i in 0..9 {
            let count = gains.pair_counts.values[i];
            if count == 0 {
                return Err(Error::Domain(format!(
                    "decoy pair {i} has no trials; cannot bound its gain"
                )));
            }
            let (lo, hi) = chernoff_interval(gains.decoy_gains.values[i], count, eps_pe)?;
            decoy.values[i] = Interval::new(lo, hi);
        }
        if gains.code_count == 0 {
            return Err(Error::Domain("no code-mode trials".into()));
        }
        let (lo, hi) = chernoff_interval(gains.q_code, gains.code_count, eps_pe)?;
        Ok(Self {
            decoy,
            code: Interval::new(lo, hi),
        })
    }

    /// Zero-width intervals pinned at the given gains (oracle plumbing).
    pub fn exact(gains: &GainSet) -> Self {
        let mut decoy = crate::channel::PairTable::default();
        for i in 0..9 {
            decoy.values[i] = Interval::point(gains.decoy_gains.values[i]);
        }
        Self {
            decoy,
            code: Interval::point(gains.q_code),
        }
    }
}
