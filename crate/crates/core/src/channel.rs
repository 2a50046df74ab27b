//! Gain model of the NPP-TFQKD measurement station.
//!
//! Alice and Bob send weak coherent pulses over two fiber arms to an
//! untrusted middle node that interferes them on a 50:50 beam splitter and
//! announces which of its two detectors clicked. The quantities that drive
//! every downstream estimate are the *gains*: the per-trial probabilities of
//! an announced single click, per sending configuration.
//!
//! Two routes to the same statistics are provided so each can check the
//! other: closed-form expectations ([`closed_form_decoy_gain`],
//! [`code_mode_stats`], [`expected_gains`]) and a per-trial Monte-Carlo
//! sampler ([`mc_gains`]).
//!
//! Model assumptions: the middle node sits at the fiber midpoint, detector
//! efficiency is folded into the arm transmittance, misalignment enters as a
//! visibility factor `1 - 2 e_d` on the interference term, and double clicks
//! are discarded.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// The four source settings available in decoy mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    Mu,
    Nu,
    Omega,
    Vacuum,
}

impl Setting {
    pub fn label(self) -> &'static str {
        match self {
            Setting::Mu => "mu",
            Setting::Nu => "nu",
            Setting::Omega => "omega",
            Setting::Vacuum => "o",
        }
    }
}

/// The nine (Alice, Bob) decoy pairs consumed by the estimators.
pub const DECOY_PAIRS: [(Setting, Setting); 9] = [
    (Setting::Vacuum, Setting::Vacuum),
    (Setting::Mu, Setting::Vacuum),
    (Setting::Vacuum, Setting::Mu),
    (Setting::Nu, Setting::Vacuum),
    (Setting::Vacuum, Setting::Nu),
    (Setting::Omega, Setting::Vacuum),
    (Setting::Vacuum, Setting::Omega),
    (Setting::Mu, Setting::Mu),
    (Setting::Nu, Setting::Nu),
];

/// Position of `(x, y)` in [`DECOY_PAIRS`], if it is one of the nine.
pub fn decoy_pair_index(x: Setting, y: Setting) -> Option<usize> {
    DECOY_PAIRS.iter().position(|&p| p == (x, y))
}

/// Fixed-size table keyed by the nine decoy pairs, in [`DECOY_PAIRS`] order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairTable<T> {
    pub values: [T; 9],
}

impl<T: Copy> PairTable<T> {
    pub fn from_fn(mut f: impl FnMut(Setting, Setting) -> T) -> Self {
        let mut it = DECOY_PAIRS.iter().map(|&(x, y)| f(x, y));
        let values = std::array::from_fn(|_| it.next().unwrap());
        Self { values }
    }

    pub fn get(&self, x: Setting, y: Setting) -> T {
        self.values[decoy_pair_index(x, y).expect("not a tracked decoy pair")]
    }

    pub fn iter(&self) -> impl Iterator<Item = ((Setting, Setting), T)> + '_ {
        DECOY_PAIRS.iter().copied().zip(self.values.iter().copied())
    }
}

/// Fiber and detector parameters of one symmetric link.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelParams {
    /// Total Alice-Bob fiber length in km; the middle node sits at L/2.
    pub distance_km: f64,
    /// Fiber attenuation in dB/km.
    pub fiber_loss_db_per_km: f64,
    /// Dark-count probability per detector per trial.
    pub dark_count_rate: f64,
    /// Detector efficiency, folded into the arm transmittance.
    pub detector_efficiency: f64,
    /// Misalignment error probability `e_d` in [0, 0.5].
    pub misalignment: f64,
    /// Error-correction inefficiency `f >= 1`.
    pub ec_efficiency: f64,
}

impl ChannelParams {
    /// Transmittance of one arm (L/2 km of fiber plus detector efficiency).
    pub fn arm_transmittance(&self) -> f64 {
        self.detector_efficiency
            * 10f64.powf(-self.fiber_loss_db_per_km * (self.distance_km / 2.0) / 10.0)
    }

    /// End-to-end transmittance `10^(-alpha L / 10)` used by the PLOB benchmark.
    pub fn total_fiber_transmittance(&self) -> f64 {
        10f64.powf(-self.fiber_loss_db_per_km * self.distance_km / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_km >= 0.0) {
            return Err(Error::Domain("distance must be >= 0".into()));
        }
        if !(self.fiber_loss_db_per_km > 0.0) {
            return Err(Error::Domain("fiber loss must be > 0 dB/km".into()));
        }
        for (name, p) in [
            ("dark_count_rate", self.dark_count_rate),
            ("detector_efficiency", self.detector_efficiency),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if !(0.0..=0.5).contains(&self.misalignment) {
            return Err(Error::Domain(format!(
                "misalignment must be in [0, 0.5], got {}",
                self.misalignment
            )));
        }
        if !(self.ec_efficiency >= 1.0) {
            return Err(Error::Domain("ec_efficiency must be >= 1".into()));
        }
        let eta = self.arm_transmittance();
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Domain(format!(
                "arm transmittance {eta} outside (0, 1]"
            )));
        }
        Ok(())
    }
}

/// Source-side protocol parameters: the decoy intensities, the mode and
/// intensity probabilities, and the total trial count.
///
/// `p_mu/p_nu/p_omega` are absolute per-trial probabilities; the remainder
/// `1 - p_code - p_mu - p_nu - p_omega` is the vacuum-decoy probability.
/// The code mode reuses the first decoy intensity `mu`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProtocolParams {
    pub mu: f64,
    pub nu: f64,
    pub omega: f64,
    pub p_code: f64,
    pub p_mu: f64,
    pub p_nu: f64,
    pub p_omega: f64,
    pub pulses: u64,
}

impl ProtocolParams {
    pub fn p_vacuum(&self) -> f64 {
        1.0 - self.p_code - self.p_mu - self.p_nu - self.p_omega
    }

    pub fn setting_intensity(&self, s: Setting) -> f64 {
        match s {
            Setting::Mu => self.mu,
            Setting::Nu => self.nu,
            Setting::Omega => self.omega,
            Setting::Vacuum => 0.0,
        }
    }

    /// Probability that one user picks decoy mode with setting `s`.
    pub fn setting_probability(&self, s: Setting) -> f64 {
        match s {
            Setting::Mu => self.p_mu,
            Setting::Nu => self.p_nu,
            Setting::Omega => self.p_omega,
            Setting::Vacuum => self.p_vacuum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > self.nu && self.nu > self.omega && self.omega > 0.0) {
            return Err(Error::Domain(format!(
                "intensities must satisfy mu > nu > omega > 0, got {} > {} > {}",
                self.mu, self.nu, self.omega
            )));
        }
        let probs = [self.p_code, self.p_mu, self.p_nu, self.p_omega];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain("mode probabilities must be in [0, 1]".into()));
        }
        if self.p_vacuum() < -1e-12 {
            return Err(Error::Domain(
                "mode probabilities sum to more than one".into(),
            ));
        }
        if self.pulses == 0 {
            return Err(Error::Domain("pulse count must be positive".into()));
        }
        Ok(())
    }
}

/// Code-mode gain and error rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeModeStats {
    pub gain: f64,
    pub error_rate: f64,
    /// True when the gain vanished and the error rate defaulted to 1/2.
    pub degenerate: bool,
}

/// Observed (or expected) gain statistics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    /// Code-mode gain `Q_c`.
    pub q_code: f64,
    /// Code-mode error rate `E_c`.
    pub e_code: f64,
    /// `E_c` came from a zero-gain scenario and defaulted to 1/2.
    pub code_degenerate: bool,
    /// Single-click probabilities `Q_xy` for the nine decoy pairs.
    pub decoy_gains: PairTable<f64>,
    /// Trial counts `N_xy` behind each decoy gain.
    pub pair_counts: PairTable<u64>,
    /// Trials in which both users chose code mode.
    pub code_count: u64,
}

// ---------------------------------------------------------------------------
// Modified Bessel function I0
// ---------------------------------------------------------------------------

/// Exponentially scaled modified Bessel function `e^(-x) I0(x)` for `x >= 0`.
///
/// Power series below 15 (converges to machine precision there), asymptotic
/// expansion above; the scaling keeps every intermediate bounded.
fn bessel_i0_scaled(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 15.0 {
        // I0(x) = sum_k (x^2/4)^k / (k!)^2
        let q = x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= q / ((k * k) as f64);
            sum += term;
            if term < sum * 1e-18 {
                break;
            }
        }
        sum * (-x).exp()
    } else {
        // e^(-x) I0(x) ~ (2 pi x)^(-1/2) sum_k ((2k-1)!!)^2 / (k! 8^k x^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1u32..30 {
            let kf = k as f64;
            term *= (2.0 * kf - 1.0) * (2.0 * kf - 1.0) / (kf * 8.0 * x);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        sum / (TAU * x).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Closed-form gains
// ---------------------------------------------------------------------------

/// Probability that exactly one detector clicks when Alice and Bob send
/// phase-randomized pulses of intensities `x` and `y`.
///
/// With `S = eta (x + y)` and `D = (1 - 2 e_d) eta sqrt(x y)`, averaging the
/// per-phase click probabilities over the uniform relative phase gives
///
/// ```text
/// Q = 2 (1 - p_d) e^(-S/2) I0(D) - 2 (1 - p_d)^2 e^(-S)
/// ```
///
/// evaluated here as `2 q e^(D - S/2) [e^(-D) I0(D)] - 2 q^2 e^(-S)` so that
/// nothing overflows (`D <= S/2` always).
pub fn closed_form_decoy_gain(x: f64, y: f64, ch: &ChannelParams) -> Result<f64> {
    if !(x >= 0.0) || !(y >= 0.0) {
        return Err(Error::Domain(format!("negative intensity: x={x}, y={y}")));
    }
    ch.validate()?;
    let eta = ch.arm_transmittance();
    let s = eta * (x + y);
    let d = (1.0 - 2.0 * ch.misalignment) * eta * (x * y).sqrt();
    let q = 1.0 - ch.dark_count_rate;
    let gain = 2.0 * q * (d - s / 2.0).exp() * bessel_i0_scaled(d) - 2.0 * q * q * (-s).exp();
    Ok(gain.clamp(0.0, 1.0))
}

/// Code-mode gain `Q_c` and error rate `E_c` when both users send
/// `|±sqrt(mu)>` with phase-locked sources.
///
/// Equal key bits put the interference maximum on the "correct" detector
/// (`lambda = 2 mu eta (1 - e_d)`) and the minimum on the other
/// (`2 mu eta e_d`); opposite bits swap the ports. An error is a lone click
/// on the dim port.
pub fn code_mode_stats(mu: f64, ch: &ChannelParams) -> Result<CodeModeStats> {
    if !(mu >= 0.0) {
        return Err(Error::Domain(format!("negative intensity: mu={mu}")));
    }
    ch.validate()?;
    let eta = ch.arm_transmittance();
    let q = 1.0 - ch.dark_count_rate;
    let lam_bright = 2.0 * mu * eta * (1.0 - ch.misalignment);
    let lam_dim = 2.0 * mu * eta * ch.misalignment;
    let p_bright = 1.0 - q * (-lam_bright).exp();
    let p_dim = 1.0 - q * (-lam_dim).exp();
    let gain = p_bright + p_dim - 2.0 * p_bright * p_dim;
    if gain <= 0.0 {
        return Ok(CodeModeStats {
            gain: 0.0,
            error_rate: 0.5,
            degenerate: true,
        });
    }
    let error_rate = p_dim * (1.0 - p_bright) / gain;
    Ok(CodeModeStats {
        gain,
        error_rate,
        degenerate: false,
    })
}

/// Expected-value [`GainSet`] for a full scenario: closed-form gains plus the
/// nominal trial counts `N_xy = N p_x p_y` and `N_c = N p_code^2`.
pub fn expected_gains(params: &ProtocolParams, ch: &ChannelParams) -> Result<GainSet> {
    params.validate()?;
    let code = code_mode_stats(params.mu, ch)?;
    let mut decoy_gains = PairTable::default();
    let mut pair_counts = PairTable::default();
    for (i, &(sx, sy)) in DECOY_PAIRS.iter().enumerate() {
        decoy_gains.values[i] = closed_form_decoy_gain(
            params.setting_intensity(sx),
            params.setting_intensity(sy),
            ch,
        )?;
        let share = params.setting_probability(sx) * params.setting_probability(sy);
        pair_counts.values[i] = (params.pulses as f64 * share).round() as u64;
    }
    Ok(GainSet {
        q_code: code.gain,
        e_code: code.error_rate,
        code_degenerate: code.degenerate,
        decoy_gains,
        pair_counts,
        code_count: (params.pulses as f64 * params.p_code * params.p_code).round() as u64,
    })
}

// ---------------------------------------------------------------------------
// Monte-Carlo sampler
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    code_trials: u64,
    code_singles: u64,
    code_errors: u64,
    pair_trials: [u64; 9],
    pair_singles: [u64; 9],
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.code_trials += other.code_trials;
        self.code_singles += other.code_singles;
        self.code_errors += other.code_errors;
        for i in 0..9 {
            self.pair_trials[i] += other.pair_trials[i];
            self.pair_singles[i] += other.pair_singles[i];
        }
        self
    }
}

#[derive(Clone, Copy)]
enum Choice {
    Code(bool),
    Decoy(Setting),
}

#[inline]
fn draw_choice(params: &ProtocolParams, rng: &mut ChaCha8Rng) -> Choice {
    let u: f64 = rng.random();
    let mut acc = params.p_code;
    if u < acc {
        return Choice::Code(rng.random());
    }
    for s in [Setting::Mu, Setting::Nu, Setting::Omega] {
        acc += params.setting_probability(s);
        if u < acc {
            return Choice::Decoy(s);
        }
    }
    Choice::Decoy(Setting::Vacuum)
}

fn simulate_block(params: &ProtocolParams, ch: &ChannelParams, trials: u64, rng: &mut ChaCha8Rng) -> Tally {
    let eta = ch.arm_transmittance();
    let vis = 1.0 - 2.0 * ch.misalignment;
    let q = 1.0 - ch.dark_count_rate;
    let mut t = Tally::default();
    for _ in 0..trials {
        let alice = draw_choice(params, rng);
        let bob = draw_choice(params, rng);
        let (ia, ib, cos_delta) = match (alice, bob) {
            (Choice::Code(ba), Choice::Code(bb)) => {
                (params.mu, params.mu, if ba == bb { 1.0 } else { -1.0 })
            }
            (Choice::Code(_), Choice::Decoy(sb)) => {
                let ib = params.setting_intensity(sb);
                let cd = if ib > 0.0 {
                    rng.random_range(0.0..TAU).cos()
                } else {
                    0.0
                };
                (params.mu, ib, cd)
            }
            (Choice::Decoy(sa), Choice::Code(_)) => {
                let ia = params.setting_intensity(sa);
                let cd = if ia > 0.0 {
                    rng.random_range(0.0..TAU).cos()
                } else {
                    0.0
                };
                (ia, params.mu, cd)
            }
            (Choice::Decoy(sa), Choice::Decoy(sb)) => {
                let ia = params.setting_intensity(sa);
                let ib = params.setting_intensity(sb);
                let cd = if ia > 0.0 && ib > 0.0 {
                    // only the relative phase matters
                    rng.random_range(0.0..TAU).cos()
                } else {
                    0.0
                };
                (ia, ib, cd)
            }
        };
        let v = vis * (ia * ib).sqrt() * cos_delta;
        let lam_l = eta * ((ia + ib) / 2.0 + v);
        let lam_r = eta * ((ia + ib) / 2.0 - v);
        let click_l = rng.random::<f64>() < 1.0 - q * (-lam_l).exp();
        let click_r = rng.random::<f64>() < 1.0 - q * (-lam_r).exp();
        let single = click_l ^ click_r;
        match (alice, bob) {
            (Choice::Code(ba), Choice::Code(bb)) => {
                t.code_trials += 1;
                if single {
                    t.code_singles += 1;
                    // equal bits put the bright fringe on L
                    let wrong_port = if ba == bb { click_r } else { click_l };
                    if wrong_port {
                        t.code_errors += 1;
                    }
                }
            }
            (Choice::Decoy(sa), Choice::Decoy(sb)) => {
                if let Some(i) = decoy_pair_index(sa, sb) {
                    t.pair_trials[i] += 1;
                    if single {
                        t.pair_singles[i] += 1;
                    }
                }
            }
            _ => {}
        }
    }
    t
}

/// Per-trial Monte-Carlo realization of a scenario.
///
/// Trials are split into fixed blocks; block `i` runs on ChaCha stream `i`
/// derived from `seed`, and the integer tallies merge associatively, so the
/// result is bit-identical for a given seed regardless of thread count.
pub fn mc_gains(
    params: &ProtocolParams,
    ch: &ChannelParams,
    trials: u64,
    seed: u64,
) -> Result<GainSet> {
    if trials == 0 {
        return Err(Error::Domain("trials must be positive".into()));
    }
    params.validate()?;
    ch.validate()?;

    const BLOCK: u64 = 1 << 20;
    let blocks = trials.div_ceil(BLOCK);
    let tally = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b + 1);
            let n = BLOCK.min(trials - b * BLOCK);
            simulate_block(params, ch, n, &mut rng)
        })
        .reduce(Tally::default, Tally::merge);

    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let q_code = ratio(tally.code_singles, tally.code_trials);
    let code_degenerate = tally.code_singles == 0;
    let e_code = if code_degenerate {
        0.5
    } else {
        tally.code_errors as f64 / tally.code_singles as f64
    };
    let mut decoy_gains = PairTable::default();
    let mut pair_counts = PairTable::default();
    for i in 0..9 {
        decoy_gains.values[i] = ratio(tally.pair_singles[i], tally.pair_trials[i]);
        pair_counts.values[i] = tally.pair_trials[i];
    }
    Ok(GainSet {
        q_code,
        e_code,
        code_degenerate,
        decoy_gains,
        pair_counts,
        code_count: tally.code_trials,
    })
}
