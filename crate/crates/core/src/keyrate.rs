//! Finite-key secret-key-rate assembly.
//!
//! [`skr_collective`] charges the sifted fraction with the eavesdropper
//! information, error-correction and verification leakage, and the
//! finite-size penalties; [`skr_coherent`] applies the post-selection lift
//! that upgrades collective-attack security to general attacks at a cost of
//! `126 log2(N+1)` bits. [`plob_bound`] provides the repeaterless benchmark
//! `-log2(1 - eta)`.
//!
//! The bound on Eve's per-bit information lives behind the [`EveBound`]
//! trait: its closed form belongs to the companion security proof and is not
//! reproduced here, so the crate ships the always-secure
//! [`ConservativeEveBound`] plus [`ConstantEveBound`] for pipeline testing,
//! and any implementation of the trait can be plugged in. Implementations
//! must stay within [0, 1] and be monotone in the yield bounds; the
//! randomized [`check_eve_bound_monotonicity`] harness enforces the latter.

use crate::decoy::QBounds;
use crate::error::{Error, Result};
use crate::statistics::EpsilonBudget;

/// Binary Shannon entropy with the `0 log 0 = 0` convention.
pub fn binary_entropy(p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p), "entropy argument {p}");
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Inputs of the collective-attack rate formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateInputs {
    /// Sifted-key fraction `n / N = P_c^2 Q_c`.
    pub sifted_fraction: f64,
    /// Code-mode error rate `E_c`.
    pub e_code: f64,
    /// Upper bound on Eve's information per sifted bit.
    pub iae_upper: f64,
    pub budget: EpsilonBudget,
    /// Error-correction inefficiency `f >= 1`.
    pub ec_efficiency: f64,
    pub pulses: u64,
}

/// A key rate together with the abort flag for clamped-negative lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub rate: f64,
    /// The unclamped length was negative; zero rate means "abort".
    pub aborted: bool,
}

/// Collective-attack secret key rate per pulse:
///
/// ```text
/// R = (n/N)(1 - I_AE) - lam_EC/N - lam_EV/N
///     - (2/N) log2(1/eps_PA) - (7/N) sqrt(n log2(2/eps_s))
/// ```
///
/// with `lam_EC = n f H(E_c)` and `lam_EV = log2(2/eps_cor)`. Every
/// `log2(1/eps)` comes out of the log-domain budget, and negative rates
/// clamp to zero with the abort flag set.
pub fn skr_collective(inp: &KeyRateInputs) -> RateReport {
    let n_total = inp.pulses as f64;
    let n_sifted = inp.sifted_fraction * n_total;
    let lam_ec = n_sifted * inp.ec_efficiency * binary_entropy(inp.e_code);
    let lam_ev = 1.0 + inp.budget.eps_cor.log2_inv();
    let pa_term = 2.0 * inp.budget.eps_pa.log2_inv();
    let smooth_bits = 1.0 + inp.budget.eps_s.log2_inv();
    let smooth_term = 7.0 * (n_sifted * smooth_bits).sqrt();
    let rate = inp.sifted_fraction * (1.0 - inp.iae_upper)
        - (lam_ec + lam_ev + pa_term + smooth_term) / n_total;
    RateReport {
        rate: rate.max(0.0),
        aborted: rate < 0.0,
    }
}

/// Coherent-attack rate: `R_col - 126 log2(N+1) / N`, clamped at zero.
///
/// The constant is `2 (d^2 - 1)` for the dimension-8 single-trial system of
/// the post-selection argument.
pub fn skr_coherent(r_col: f64, pulses: u64) -> RateReport {
    let n = pulses as f64;
    let rate = r_col - 126.0 * (n + 1.0).log2() / n;
    RateReport {
        rate: rate.max(0.0),
        aborted: rate < 0.0,
    }
}

/// Repeaterless capacity benchmark `-log2(1 - eta)`.
pub fn plob_bound(channel_transmittance: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&channel_transmittance) {
        return Err(Error::Domain(format!(
            "transmittance must be in [0, 1], got {channel_transmittance}"
        )));
    }
    if channel_transmittance == 1.0 {
        return Err(Error::InfiniteCapacity);
    }
    Ok(-(1.0 - channel_transmittance).log2())
}

/// Upper bound on Eve's information per sifted key bit.
///
/// Implementations receive the decoy-state yield bounds and the lower
/// Chernoff endpoint of the code gain. The output must lie in [0, 1] and be
/// componentwise monotone in `QBounds`.
pub trait EveBound: Sync {
    fn bound(&self, qb: &QBounds, q_code_lower: f64) -> f64;
    fn name(&self) -> &'static str;
}

/// Always returns 1: Eve may know everything, the rate clamps to zero, and
/// the rest of the pipeline stays exercisable without the companion proof.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConservativeEveBound;

impl EveBound for ConservativeEveBound {
    fn bound(&self, _qb: &QBounds, _q_code_lower: f64) -> f64 {
        1.0
    }
    fn name(&self) -> &'static str {
        "conservative"
    }
}

/// Fixed Eve information, for pipeline tests and what-if sweeps.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEveBound(pub f64);

impl EveBound for ConstantEveBound {
    fn bound(&self, _qb: &QBounds, _q_code_lower: f64) -> f64 {
        self.0
    }
    fn name(&self) -> &'static str {
        "constant"
    }
}

/// Delegate to the plugged bound and enforce its range contract.
pub fn iae_upper(qb: &QBounds, q_code_lower: f64, plugin: &dyn EveBound) -> Result<f64> {
    let raw = plugin.bound(qb, q_code_lower);
    if !raw.is_finite() || !(0.0..=1.0).contains(&raw) {
        return Err(Error::PluginContract(raw));
    }
    Ok(raw)
}

/// Randomized monotonicity harness: draws pairs of componentwise-ordered
/// `QBounds` and reports the first pair on which the plugin's output
/// decreases.
pub fn check_eve_bound_monotonicity(
    plugin: &dyn EveBound,
    seed: u64,
    trials: usize,
) -> std::result::Result<(), String> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for t in 0..trials {
        let base: [f64; 7] = std::array::from_fn(|_| rng.random::<f64>() * 0.5);
        let bumped: [f64; 7] = std::array::from_fn(|i| base[i] + rng.random::<f64>() * 0.5);
        let mk = |v: &[f64; 7]| QBounds {
            q00_u: v[0],
            q10_u: v[1],
            q01_u: v[2],
            q20_u: v[3],
            q02_u: v[4],
            q11_u: v[5],
            qsum_l: v[6],
        };
        let q_lo = rng.random::<f64>();
        let lo = plugin.bound(&mk(&base), q_lo);
        let hi = plugin.bound(&mk(&bumped), q_lo);
        if hi < lo - 1e-12 {
            return Err(format!(
                "trial {t}: output fell from {lo} to {hi} on componentwise-larger bounds"
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::budget_split;
    use approx::assert_relative_eq;

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5), 1.0);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert_relative_eq!(binary_entropy(0.11), 0.4999159581645280, max_relative = 1e-12);
        assert_relative_eq!(
            binary_entropy(0.01),
            0.08079313589591117,
            max_relative = 1e-12
        );
    }

    fn flat_budget(eps: f64) -> EpsilonBudget {
        // eps_pa = eps_cor = eps_s = eps exactly; the pe share is whatever
        // remains, irrelevant for the rate formula.
        use crate::statistics::LogProb;
        EpsilonBudget {
            eps_coh: eps,
            eps_col: LogProb::from_prob(eps).unwrap(),
            eps_pa: LogProb::from_prob(eps).unwrap(),
            eps_cor: LogProb::from_prob(eps).unwrap(),
            eps_s: LogProb::from_prob(eps).unwrap(),
            eps_pe: LogProb::from_prob(eps).unwrap(),
            r_sec: 0.25,
            r_cor: 0.25,
            r_s: 0.25,
        }
    }

    #[test]
    fn collective_rate_worked_example() {
        // n = 1e9, N = 1e12, I_AE = 0.1, E_c = 0.01, f = 1.1, eps = 1e-10
        let inp = KeyRateInputs {
            sifted_fraction: 1e-3,
            e_code: 0.01,
            iae_upper: 0.1,
            budget: flat_budget(1e-10),
            ec_efficiency: 1.1,
            pulses: 1_000_000_000_000,
        };
        let r = skr_collective(&inp);
        assert!(!r.aborted);
        assert_relative_eq!(r.rate, 8.098325580594398e-4, max_relative = 1e-4);
    }

    #[test]
    fn collective_rate_clamps() {
        let inp = KeyRateInputs {
            sifted_fraction: 1e-3,
            e_code: 0.01,
            iae_upper: 1.0,
            budget: flat_budget(1e-10),
            ec_efficiency: 1.1,
            pulses: 1_000_000_000_000,
        };
        let r = skr_collective(&inp);
        assert_eq!(r.rate, 0.0);
        assert!(r.aborted);
    }

    #[test]
    fn coherent_correction_value() {
        let n = 1_000_000_000_000u64;
        let r = skr_coherent(8.098325580594398e-4, n);
        let correction = 126.0 * (n as f64 + 1.0).log2() / n as f64;
        assert_relative_eq!(correction, 5.022755279469874e-9, max_relative = 1e-10);
        assert_relative_eq!(
            r.rate,
            8.098325580594398e-4 - correction,
            max_relative = 1e-12
        );
        // dominated at tiny N
        let r = skr_coherent(0.5, 1);
        assert_eq!(r.rate, 0.0);
        assert!(r.aborted);
    }

    #[test]
    fn coherent_never_exceeds_collective() {
        for n in [1u64, 1000, 1 << 30, 1 << 60] {
            for r_col in [0.0, 1e-6, 1e-3, 0.5] {
                let r = skr_coherent(r_col, n);
                assert!(r.rate <= r_col);
                assert!(r.rate >= 0.0);
            }
        }
    }

    #[test]
    fn rate_monotone_in_inputs() {
        let base = KeyRateInputs {
            sifted_fraction: 1e-3,
            e_code: 0.01,
            iae_upper: 0.1,
            budget: flat_budget(1e-10),
            ec_efficiency: 1.1,
            pulses: 1_000_000_000_000,
        };
        let r0 = skr_collective(&base).rate;
        for iae in [0.2, 0.5, 0.9] {
            let r = skr_collective(&KeyRateInputs {
                iae_upper: iae,
                ..base
            })
            .rate;
            assert!(r <= r0);
        }
        for ec in [0.02, 0.05, 0.2] {
            let r = skr_collective(&KeyRateInputs { e_code: ec, ..base }).rate;
            assert!(r <= r0);
        }
        // more sifted bits help while Eve's information is moderate
        let mut last = 0.0;
        for sf in [1e-4, 3e-4, 1e-3, 3e-3] {
            let r = skr_collective(&KeyRateInputs {
                sifted_fraction: sf,
                ..base
            })
            .rate;
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn finite_key_convergence() {
        // with the fractionally scaled budget the finite-size terms vanish
        // and R_coh approaches the asymptotic rate
        let asymptotic = 1e-3 * (1.0 - 0.1) - 1e-3 * 1.1 * binary_entropy(0.01);
        let pulses = 1_000_000_000_000_000_000u64;
        let budget = budget_split(1e-10, pulses, 0.25, 0.25, 0.25).unwrap();
        let inp = KeyRateInputs {
            sifted_fraction: 1e-3,
            e_code: 0.01,
            iae_upper: 0.1,
            budget,
            ec_efficiency: 1.1,
            pulses,
        };
        let r = skr_coherent(skr_collective(&inp).rate, pulses).rate;
        assert!(
            (r - asymptotic).abs() < 0.01 * asymptotic,
            "finite-key rate {r} vs asymptotic {asymptotic}"
        );
    }

    #[test]
    fn plob_values() {
        assert_relative_eq!(plob_bound(0.5).unwrap(), 1.0, max_relative = 1e-12);
        assert_eq!(plob_bound(0.0).unwrap(), 0.0);
        assert_relative_eq!(
            plob_bound(0.01).unwrap(),
            0.014499569695115077,
            max_relative = 1e-12
        );
        assert!(matches!(plob_bound(1.0), Err(Error::InfiniteCapacity)));
        assert!(plob_bound(-0.1).is_err());
    }

    #[test]
    fn plugin_contract() {
        let qb = QBounds {
            q00_u: 0.0,
            q10_u: 0.0,
            q01_u: 0.0,
            q20_u: 0.0,
            q02_u: 0.0,
            q11_u: 0.0,
            qsum_l: 0.0,
        };
        assert_eq!(iae_upper(&qb, 0.5, &ConservativeEveBound).unwrap(), 1.0);
        assert_eq!(iae_upper(&qb, 0.5, &ConstantEveBound(0.3)).unwrap(), 0.3);
        assert!(matches!(
            iae_upper(&qb, 0.5, &ConstantEveBound(1.5)),
            Err(Error::PluginContract(_))
        ));
        assert!(iae_upper(&qb, 0.5, &ConstantEveBound(-0.1)).is_err());
    }

    #[test]
    fn shipped_plugins_are_monotone() {
        check_eve_bound_monotonicity(&ConservativeEveBound, 11, 500).unwrap();
        check_eve_bound_monotonicity(&ConstantEveBound(0.42), 11, 500).unwrap();
    }
}
