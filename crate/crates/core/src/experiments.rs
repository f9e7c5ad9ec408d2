//! Seeded Monte Carlo harness for detection and estimation studies.
//!
//! An [`ExperimentSpec`] describes a grid of (bit depth, false alarm rate,
//! SNR) cells. Each cell runs a fixed number of independent trials; every
//! trial draws its own frequencies, phases, and noise from a counter-based
//! stream derived from the master seed, so parallel and serial runs produce
//! byte-identical output. Aggregates come with theory columns (CRB trace,
//! predicted detection probability, SNR loss) that depend only on the spec.

use std::f64::consts::PI;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim::{crb_general, snr_loss};
use crate::gnomp::{
    extract_spectrum, extract_spectrum_sigma_unknown, GnompConfig, GnompResult, StoppingRule,
};
use crate::likelihood::{mean_signal, AtomBasis, Model, SinusoidComponent};
use crate::quantizer::{
    design_full_scale, BitDepth, MeasurementScheme, QuantizerSpec,
};
use crate::rao::{predict_detection, rao_grid, stat_to_db, threshold_unknown_freq};

/// How the clean signal is turned into an observation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeasurementMode {
    /// Uniform mid-rise quantizer at each configured bit depth.
    #[default]
    Uniform,
    /// Per-sample sign comparisons against thresholds drawn uniformly from
    /// `levels` (independently for the real and imaginary channels).
    Signed { levels: Vec<f64> },
    /// `m` random linear measurements of the length-`n` signal, taken before
    /// quantization. The sensing matrix entries have independent standard
    /// Gaussian real and imaginary parts and are redrawn per trial.
    Compressive { m: usize },
}

/// Description of one study: signal layout, measurement grid, trial count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Label copied into every output row.
    pub name: String,
    /// Number of time-domain samples.
    pub n: usize,
    /// Integrated SNR of each sinusoid in dB (`10 log10 N` above the
    /// time-domain SNR). The length sets the number of sinusoids.
    pub snr_db: Vec<f64>,
    /// Fixed frequencies in radians. When absent, each trial draws them
    /// uniformly on `[0, 2pi)` with rejection until every pair is at least
    /// `min_separation` DFT bins apart.
    #[serde(default)]
    pub frequencies: Option<Vec<f64>>,
    /// Minimum pairwise separation for random frequencies, in DFT bins.
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    /// Bit depths to sweep. Ignored in signed mode.
    pub bits: Vec<BitDepth>,
    /// Nominal false alarm rates to sweep.
    #[serde(default = "default_p_fa")]
    pub p_fa: Vec<f64>,
    /// Trials per cell.
    pub trials: usize,
    /// Master seed; trial `t` uses a stream derived from `(seed, t)`.
    #[serde(default)]
    pub seed: u64,
    /// Complex noise variance.
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    /// Index of the target whose SNR is swept.
    #[serde(default)]
    pub sweep_target: usize,
    /// SNR values for the swept target; empty means a single run at the
    /// baseline `snr_db`.
    #[serde(default)]
    pub sweep_snr_db: Vec<f64>,
    /// Measurement mode.
    #[serde(default)]
    pub mode: MeasurementMode,
    /// Whether the estimator is given the true noise variance.
    #[serde(default = "default_true")]
    pub sigma_known: bool,
    /// Full-scale override for the uniform quantizer; the design rule
    /// `max(|x_k|, 3 sigma / sqrt 2)` applies when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Cap on extracted components.
    #[serde(default)]
    pub max_components: Option<usize>,
    /// Grid densification factor for the Identify step.
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    /// Rounds of cyclic refinement.
    #[serde(default = "default_cyclic")]
    pub cyclic_rounds: usize,
}

fn default_min_separation() -> f64 {
    2.5
}
fn default_p_fa() -> Vec<f64> {
    vec![0.01]
}
fn default_sigma2() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_oversample() -> usize {
    4
}
fn default_cyclic() -> usize {
    3
}

impl ExperimentSpec {
    /// Minimal spec with one cell per bit depth and no SNR sweep.
    pub fn new(name: &str, n: usize, snr_db: Vec<f64>, bits: Vec<BitDepth>, trials: usize) -> Self {
        ExperimentSpec {
            name: name.to_string(),
            n,
            snr_db,
            frequencies: None,
            min_separation: default_min_separation(),
            bits,
            p_fa: default_p_fa(),
            trials,
            seed: 0,
            sigma2: default_sigma2(),
            sweep_target: 0,
            sweep_snr_db: Vec::new(),
            mode: MeasurementMode::Uniform,
            sigma_known: true,
            gamma: None,
            max_components: None,
            oversample: default_oversample(),
            cyclic_rounds: default_cyclic(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidArgument("sigma2 must be positive".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::InvalidArgument("snr_db must not be empty".into()));
        }
        if self.sweep_target >= self.snr_db.len() {
            return Err(Error::InvalidArgument(format!(
                "sweep_target {} out of range for {} targets",
                self.sweep_target,
                self.snr_db.len()
            )));
        }
        if let Some(f) = &self.frequencies {
            if f.len() != self.snr_db.len() {
                return Err(Error::InvalidArgument(
                    "frequencies and snr_db must have the same length".into(),
                ));
            }
        }
        if self.bits.is_empty() && !matches!(self.mode, MeasurementMode::Signed { .. }) {
            return Err(Error::InvalidArgument("bits must not be empty".into()));
        }
        if let MeasurementMode::Signed { levels } = &self.mode {
            if levels.is_empty() {
                return Err(Error::InvalidArgument(
                    "signed mode needs at least one threshold level".into(),
                ));
            }
        }
        if let MeasurementMode::Compressive { m } = self.mode {
            if m == 0 {
                return Err(Error::InvalidArgument("m must be positive".into()));
            }
        }
        Ok(())
    }

    fn k(&self) -> usize {
        self.snr_db.len()
    }

    /// Amplitude magnitude of a target at integrated SNR `snr_db`.
    fn magnitude(&self, snr_db: f64) -> f64 {
        let time_domain_db = snr_db - 10.0 * (self.n as f64).log10();
        self.sigma2.sqrt() * 10f64.powf(time_domain_db / 20.0)
    }

    /// Deterministic frequencies used for the theory columns: the fixed list
    /// when given, otherwise an equally spaced layout at the minimum
    /// separation starting at 1 radian.
    fn theory_frequencies(&self) -> Vec<f64> {
        match &self.frequencies {
            Some(f) => f.clone(),
            None => {
                let sep = self.min_separation * 2.0 * PI / self.n as f64;
                (0..self.k()).map(|i| 1.0 + sep * i as f64).collect()
            }
        }
    }
}

/// The eight-level threshold grid used by the signed-measurement studies:
/// evenly spaced over `[-1, 1]`.
pub fn signed_levels_default() -> Vec<f64> {
    (0..8).map(|i| -1.0 + 2.0 * i as f64 / 7.0).collect()
}

/// One aggregate row per (bit depth, false alarm rate, swept SNR, target).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub name: String,
    /// Bit depth label; `signed` in signed mode.
    pub bits: String,
    pub p_fa: f64,
    /// SNR of the swept target in this cell (dB).
    pub sweep_snr_db: f64,
    pub target: usize,
    /// This target's integrated SNR in dB.
    pub snr_db: f64,
    /// Frequency used for the theory columns.
    pub omega_theory: f64,
    pub trials: usize,
    pub detections: usize,
    pub p_d: f64,
    /// Mean squared frequency error over detected trials (rad^2).
    pub freq_mse: f64,
    /// Mean squared amplitude error over detected trials.
    pub amp_mse: f64,
    /// Fraction of trials with at least one false alarm.
    pub p_fa_measured: f64,
    /// Fraction of trials that overestimated the model order.
    pub p_oe: f64,
    /// CRB on this target's frequency at the theory layout (rad^2).
    pub crb_freq: f64,
    /// Predicted detection probability with the other targets as a known
    /// interference threshold.
    pub pd_theory: f64,
    /// Predicted SNR loss relative to unquantized sampling (dB).
    pub snr_loss_db: f64,
}

/// One row per (cell, trial, target).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRow {
    pub name: String,
    pub bits: String,
    pub p_fa: f64,
    pub sweep_snr_db: f64,
    pub trial: usize,
    /// Seed of this trial's random stream.
    pub trial_seed: u64,
    pub target: usize,
    pub omega_true: f64,
    pub detected: bool,
    /// Wrap-around frequency error in radians; NaN when missed.
    pub freq_err: f64,
    /// Squared amplitude error; NaN when missed.
    pub amp_err2: f64,
    /// Number of extracted components in this trial.
    pub k_hat: usize,
    /// Estimates farther than `pi / n` from every true frequency.
    pub false_alarms: usize,
    pub overestimated: bool,
}

/// Everything a run produces, ready for the CSV writers.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub aggregate: Vec<AggregateRow>,
    pub trials: Vec<TrialRow>,
    /// Extraction result of the first trial of each cell, keyed by a cell
    /// label, for trace logging.
    pub representative: Vec<(String, GnompResult)>,
}

/// Wrap-around distance between two angles, in `[0, pi]`.
pub fn wrap_distance(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        d = 2.0 * PI - d;
    }
    d
}

/// SplitMix64 step, used to derive independent per-trial seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn trial_seed(master: u64, trial: usize) -> u64 {
    splitmix64(master ^ splitmix64(trial as u64 + 1))
}

fn complex_gaussian(rng: &mut impl Rng, len: usize, sigma: f64) -> Vec<Complex64> {
    let s = sigma / std::f64::consts::SQRT_2;
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(s * re, s * im)
        })
        .collect()
}

/// Draw frequencies uniformly with rejection until all pairs are at least
/// `min_sep_bins` DFT bins apart.
fn sample_frequencies(
    rng: &mut impl Rng,
    k: usize,
    n: usize,
    min_sep_bins: f64,
) -> Result<Vec<f64>> {
    let min_sep = min_sep_bins * 2.0 * PI / n as f64;
    for _ in 0..100_000 {
        let cand: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() * 2.0 * PI).collect();
        let ok = cand
            .iter()
            .enumerate()
            .all(|(i, &a)| cand[..i].iter().all(|&b| wrap_distance(a, b) >= min_sep));
        if ok {
            return Ok(cand);
        }
    }
    Err(Error::NonConvergence(
        "could not sample frequencies at the requested separation".into(),
    ))
}

/// Greedy matching of estimates to true frequencies by wrap-around distance,
/// closest pairs first, each estimate used at most once. `matches[i]` is the
/// index into `estimates` assigned to truth `i`.
pub fn match_components(
    truths: &[f64],
    estimates: &[SinusoidComponent],
    tolerance: f64,
) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &t) in truths.iter().enumerate() {
        for (j, e) in estimates.iter().enumerate() {
            let d = wrap_distance(t, e.omega);
            if d <= tolerance {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut matches = vec![None; truths.len()];
    let mut used = vec![false; estimates.len()];
    for (_, i, j) in pairs {
        if matches[i].is_none() && !used[j] {
            matches[i] = Some(j);
            used[j] = true;
        }
    }
    matches
}

/// Identity of one measurement cell.
#[derive(Debug, Clone)]
struct Cell {
    bits_label: String,
    bit_depth: Option<BitDepth>,
    p_fa: f64,
    sweep_snr_db: f64,
}

struct TrialOutcome {
    rows: Vec<TrialRow>,
    /// Per-target (detected, freq_err^2, amp_err^2).
    per_target: Vec<(bool, f64, f64)>,
    false_alarm: bool,
    overestimated: bool,
    /// Full extraction result, kept for the first trial of each cell.
    result: Option<GnompResult>,
}

fn run_trial(spec: &ExperimentSpec, cell: &Cell, trial: usize) -> Result<TrialOutcome> {
    let seed = trial_seed(spec.seed, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n;
    let k = spec.k();
    let sigma = spec.sigma2.sqrt();

    let freqs = match &spec.frequencies {
        Some(f) => f.clone(),
        None => sample_frequencies(&mut rng, k, n, spec.min_separation)?,
    };
    let mut snrs = spec.snr_db.clone();
    snrs[spec.sweep_target] = cell.sweep_snr_db;
    let comps: Vec<SinusoidComponent> = freqs
        .iter()
        .zip(&snrs)
        .map(|(&omega, &snr)| {
            let mag = spec.magnitude(snr);
            let phase = rng.gen::<f64>() * 2.0 * PI;
            SinusoidComponent {
                omega,
                amp: Complex64::from_polar(mag, phase),
            }
        })
        .collect();

    let (basis, clean) = match spec.mode {
        MeasurementMode::Compressive { m } => {
            let phi = nalgebra::DMatrix::from_fn(m, n, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im)
            });
            let basis = AtomBasis::Compressive { matrix: phi };
            let clean = mean_signal(&basis, &comps, None);
            (basis, clean)
        }
        _ => {
            let basis = AtomBasis::Fourier { n };
            let clean = mean_signal(&basis, &comps, None);
            (basis, clean)
        }
    };

    let noise = complex_gaussian(&mut rng, clean.len(), sigma);
    let signal: Vec<Complex64> = clean.iter().zip(&noise).map(|(c, e)| c + e).collect();

    let scheme = build_scheme(spec, cell, &comps, &signal, &mut rng)?;
    let obs = scheme.quantize(&signal);
    let model = Model {
        scheme,
        basis,
        sigma2: spec.sigma2,
    };

    let mut config = GnompConfig::new(cell.p_fa);
    config.oversample = spec.oversample;
    config.cyclic_rounds = spec.cyclic_rounds;
    config.max_components = spec.max_components;
    config.stopping = StoppingRule::Cfar;
    let result = if spec.sigma_known {
        extract_spectrum(&model, &obs, &config)?
    } else {
        extract_spectrum_sigma_unknown(&model, &obs, &config)?
    };

    // Associate estimates to truths within half the minimum separation:
    // frequency errors at low bit depth routinely exceed half a DFT bin, and
    // a tighter window would misreport such detections as misses.
    let tol = 0.5 * spec.min_separation * 2.0 * PI / n as f64;
    let matches = match_components(&freqs, &result.components, tol);
    let matched = matches.iter().filter(|m| m.is_some()).count();
    let false_alarms = result.components.len() - matched;
    let overestimated = result.components.len() > k;

    let mut rows = Vec::with_capacity(k);
    let mut per_target = Vec::with_capacity(k);
    for (i, m) in matches.iter().enumerate() {
        let (detected, freq_err, amp_err2) = match m {
            Some(j) => {
                let est = &result.components[*j];
                let mut d = est.omega - freqs[i];
                d = (d + PI).rem_euclid(2.0 * PI) - PI;
                (true, d, (est.amp - comps[i].amp).norm_sqr())
            }
            None => (false, f64::NAN, f64::NAN),
        };
        rows.push(TrialRow {
            name: spec.name.clone(),
            bits: cell.bits_label.clone(),
            p_fa: cell.p_fa,
            sweep_snr_db: cell.sweep_snr_db,
            trial,
            trial_seed: seed,
            target: i,
            omega_true: freqs[i],
            detected,
            freq_err,
            amp_err2,
            k_hat: result.components.len(),
            false_alarms,
            overestimated,
        });
        per_target.push((detected, freq_err * freq_err, amp_err2));
    }
    Ok(TrialOutcome {
        rows,
        per_target,
        false_alarm: false_alarms > 0,
        overestimated,
        result: if trial == 0 { Some(result) } else { None },
    })
}

fn build_scheme(
    spec: &ExperimentSpec,
    cell: &Cell,
    comps: &[SinusoidComponent],
    signal: &[Complex64],
    rng: &mut impl Rng,
) -> Result<MeasurementScheme> {
    match &spec.mode {
        MeasurementMode::Signed { levels } => {
            let thresholds = (0..signal.len())
                .map(|_| {
                    let re = levels[rng.gen_range(0..levels.len())];
                    let im = levels[rng.gen_range(0..levels.len())];
                    Complex64::new(re, im)
                })
                .collect();
            Ok(MeasurementScheme::Signed { thresholds })
        }
        MeasurementMode::Uniform => match cell.bit_depth {
            Some(BitDepth::Infinite) | None => Ok(MeasurementScheme::Unquantized),
            Some(bd) => {
                let gamma = match spec.gamma {
                    Some(g) => g,
                    None => {
                        let mags: Vec<f64> = comps.iter().map(|c| c.amp.norm()).collect();
                        design_full_scale(&mags, spec.sigma2.sqrt())?
                    }
                };
                Ok(MeasurementScheme::Uniform(QuantizerSpec::new(bd, gamma)?))
            }
        },
        MeasurementMode::Compressive { .. } => match cell.bit_depth {
            Some(BitDepth::Infinite) | None => Ok(MeasurementScheme::Unquantized),
            Some(bd) => {
                // The projected signal has no per-component amplitude scale,
                // so size the full scale from the channel magnitudes instead.
                let gamma = match spec.gamma {
                    Some(g) => g,
                    None => {
                        let mags: Vec<f64> = signal
                            .iter()
                            .map(|z| z.re.abs().max(z.im.abs()))
                            .collect();
                        design_full_scale(&mags, spec.sigma2.sqrt())?
                    }
                };
                Ok(MeasurementScheme::Uniform(QuantizerSpec::new(bd, gamma)?))
            }
        },
    }
}

/// Theory columns for one cell: per-target (CRB on frequency, predicted
/// detection probability, SNR loss in dB). Compressive cells return NaN
/// because the sensing matrix is redrawn per trial.
fn theory_columns(spec: &ExperimentSpec, cell: &Cell) -> Vec<(f64, f64, f64)> {
    let k = spec.k();
    if matches!(spec.mode, MeasurementMode::Compressive { .. }) {
        return vec![(f64::NAN, f64::NAN, f64::NAN); k];
    }
    let freqs = spec.theory_frequencies();
    let mut snrs = spec.snr_db.clone();
    snrs[spec.sweep_target] = cell.sweep_snr_db;
    // A fixed quarter-turn phase stands in for the random per-trial phases.
    let comps: Vec<SinusoidComponent> = freqs
        .iter()
        .zip(&snrs)
        .map(|(&omega, &snr)| SinusoidComponent {
            omega,
            amp: Complex64::from_polar(spec.magnitude(snr), PI / 4.0),
        })
        .collect();
    let basis = AtomBasis::Fourier { n: spec.n };
    let scheme = match &spec.mode {
        // Zero thresholds stand in for the per-trial random threshold draw.
        MeasurementMode::Signed { .. } => MeasurementScheme::Signed {
            thresholds: vec![Complex64::new(0.0, 0.0); spec.n],
        },
        _ => match cell.bit_depth {
            Some(BitDepth::Infinite) | None => MeasurementScheme::Unquantized,
            Some(bd) => {
                let gamma = spec.gamma.unwrap_or_else(|| {
                    let mags: Vec<f64> = comps.iter().map(|c| c.amp.norm()).collect();
                    design_full_scale(&mags, spec.sigma2.sqrt()).unwrap()
                });
                MeasurementScheme::Uniform(QuantizerSpec::new(bd, gamma).unwrap())
            }
        },
    };
    let model = Model {
        scheme,
        basis,
        sigma2: spec.sigma2,
    };
    let crb = crb_general(&model, &comps, None).ok();
    (0..k)
        .map(|i| {
            let others: Vec<SinusoidComponent> = comps
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, c)| c.clone())
                .collect();
            let zeta = mean_signal(&model.basis, &others, None);
            let crb_freq = crb.as_ref().map_or(f64::NAN, |m| m[(3 * i, 3 * i)]);
            let pred = predict_detection(&model, freqs[i], comps[i].amp, &zeta, cell.p_fa);
            let loss = snr_loss(&model, freqs[i], &zeta);
            (crb_freq, pred.p_d, loss)
        })
        .collect()
}

/// Run every cell of the spec and aggregate the trials.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let cells = enumerate_cells(spec);
    let mut output = ExperimentOutput::default();
    for cell in &cells {
        let outcomes: Vec<TrialOutcome> = (0..spec.trials)
            .into_par_iter()
            .map(|t| run_trial(spec, cell, t))
            .collect::<Result<_>>()?;
        let theory = theory_columns(spec, cell);
        let freqs = spec.theory_frequencies();
        let mut snrs = spec.snr_db.clone();
        snrs[spec.sweep_target] = cell.sweep_snr_db;
        let trials = outcomes.len();
        let fa = outcomes.iter().filter(|o| o.false_alarm).count();
        let oe = outcomes.iter().filter(|o| o.overestimated).count();
        for i in 0..spec.k() {
            let detections = outcomes
                .iter()
                .filter(|o| o.per_target[i].0)
                .count();
            let mean_over_detected = |f: &dyn Fn(&(bool, f64, f64)) -> f64| {
                if detections == 0 {
                    f64::NAN
                } else {
                    outcomes
                        .iter()
                        .filter(|o| o.per_target[i].0)
                        .map(|o| f(&o.per_target[i]))
                        .sum::<f64>()
                        / detections as f64
                }
            };
            let (crb_freq, pd_theory, snr_loss_db) = theory[i];
            output.aggregate.push(AggregateRow {
                name: spec.name.clone(),
                bits: cell.bits_label.clone(),
                p_fa: cell.p_fa,
                sweep_snr_db: cell.sweep_snr_db,
                target: i,
                snr_db: snrs[i],
                omega_theory: freqs[i],
                trials,
                detections,
                p_d: if trials == 0 {
                    f64::NAN
                } else {
                    detections as f64 / trials as f64
                },
                freq_mse: mean_over_detected(&|t| t.1),
                amp_mse: mean_over_detected(&|t| t.2),
                p_fa_measured: if trials == 0 {
                    f64::NAN
                } else {
                    fa as f64 / trials as f64
                },
                p_oe: if trials == 0 {
                    f64::NAN
                } else {
                    oe as f64 / trials as f64
                },
                crb_freq,
                pd_theory,
                snr_loss_db,
            });
        }
        for o in outcomes {
            output.trials.extend(o.rows);
            if let Some(result) = o.result {
                let label = format!(
                    "{}bit_pfa{}_snr{}",
                    cell.bits_label, cell.p_fa, cell.sweep_snr_db
                );
                output.representative.push((label, result));
            }
        }
    }
    Ok(output)
}

fn enumerate_cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let sweep: Vec<f64> = if spec.sweep_snr_db.is_empty() {
        vec![spec.snr_db[spec.sweep_target]]
    } else {
        spec.sweep_snr_db.clone()
    };
    let bit_choices: Vec<(String, Option<BitDepth>)> =
        if matches!(spec.mode, MeasurementMode::Signed { .. }) {
            vec![("signed".to_string(), None)]
        } else {
            spec.bits
                .iter()
                .map(|b| (b.to_string(), Some(*b)))
                .collect()
        };
    let mut cells = Vec::new();
    for (label, bd) in &bit_choices {
        for &p_fa in &spec.p_fa {
            for &snr in &sweep {
                cells.push(Cell {
                    bits_label: label.clone(),
                    bit_depth: *bd,
                    p_fa,
                    sweep_snr_db: snr,
                });
            }
        }
    }
    cells
}

/// Write rows to `path` as CSV with a header derived from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv error: {other:?}")),
    }
}

/// Write the per-iteration trace of one extraction as a plain text log.
pub fn write_trace_log(path: &Path, result: &GnompResult) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "iteration detect_stat_db tau_th_db omega_coarse log_likelihood suppressed_omega"
    )?;
    for t in &result.trace {
        writeln!(
            f,
            "{} {:.4} {:.4} {:.6} {:.6} {}",
            t.iteration,
            stat_to_db(t.detect_stat),
            stat_to_db(t.tau_th),
            t.omega_coarse,
            t.log_likelihood,
            t.suppressed_omega
                .map_or("-".to_string(), |w| format!("{w:.6}")),
        )?;
    }
    writeln!(f, "stop: {:?}", result.stop)?;
    Ok(())
}

/// One bit depth of the walkthrough instance: the extraction trace plus the
/// statistic that fell below the threshold, and SNR losses for both the true
/// and the estimated parameters.
#[derive(Debug, Clone)]
pub struct DemoRun {
    pub bits: u32,
    /// Detection threshold (linear).
    pub tau_th: f64,
    /// Max-bin statistics of each accepted iteration, then the final one
    /// that stopped the loop (linear).
    pub detect_stats: Vec<f64>,
    pub result: GnompResult,
    /// SNR loss of each true component given the others, in dB.
    pub loss_true: Vec<f64>,
    /// Same, from the estimated components (sorted by frequency).
    pub loss_estimated: Vec<f64>,
}

/// True parameters of the two-sinusoid walkthrough instance.
pub fn demo_components() -> Vec<SinusoidComponent> {
    vec![
        SinusoidComponent {
            omega: 2.2,
            amp: Complex64::new(-1.505, -0.497),
        },
        SinusoidComponent {
            omega: 2.4,
            amp: Complex64::new(-0.164, -0.609),
        },
    ]
}

/// Run the fixed two-sinusoid walkthrough (`N = 128`, unit noise variance,
/// false alarm rate 0.01) at 1 and 2 bits with a shared noise realization.
pub fn run_demo(seed: u64) -> Result<Vec<DemoRun>> {
    let n = 128;
    let comps = demo_components();
    let sigma2 = 1.0f64;
    let basis = AtomBasis::Fourier { n };
    let clean = mean_signal(&basis, &comps, None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = complex_gaussian(&mut rng, n, sigma2.sqrt());
    let signal: Vec<Complex64> = clean.iter().zip(&noise).map(|(c, e)| c + e).collect();
    let mags: Vec<f64> = comps.iter().map(|c| c.amp.norm()).collect();
    let gamma = design_full_scale(&mags, sigma2.sqrt())?;
    let config = GnompConfig::new(0.01);

    let mut runs = Vec::new();
    for bits in [1u32, 2] {
        let scheme =
            MeasurementScheme::Uniform(QuantizerSpec::new(BitDepth::Finite(bits), gamma)?);
        let obs = scheme.quantize(&signal);
        let model = Model {
            scheme,
            basis: basis.clone(),
            sigma2,
        };
        let result = extract_spectrum(&model, &obs, &config)?;
        let tau_th = threshold_unknown_freq(config.p_fa, n);
        let mut detect_stats: Vec<f64> = result.trace.iter().map(|t| t.detect_stat).collect();
        // The loop exits without logging the statistic that fell short, so
        // recompute it against the final residual threshold.
        let final_grid = rao_grid(&model, &obs, &result.zeta, 1);
        detect_stats.push(final_grid.best_stat());

        let loss_true = leave_one_out_losses(&model, &comps);
        let mut sorted = result.components.clone();
        sorted.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        let loss_estimated = leave_one_out_losses(&model, &sorted);
        runs.push(DemoRun {
            bits,
            tau_th,
            detect_stats,
            result,
            loss_true,
            loss_estimated,
        });
    }
    Ok(runs)
}

/// SNR loss of each component with the synthesis of the others as the
/// interference threshold.
pub fn leave_one_out_losses(model: &Model, comps: &[SinusoidComponent]) -> Vec<f64> {
    (0..comps.len())
        .map(|i| {
            let others: Vec<SinusoidComponent> = comps
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, c)| c.clone())
                .collect();
            let zeta = mean_signal(&model.basis, &others, None);
            snr_loss(model, comps[i].omega, &zeta)
        })
        .collect()
}

/// Outcome of one fixed random-measurement instance.
#[derive(Debug, Clone)]
pub struct CompressiveOutcome {
    pub m: usize,
    /// True frequencies.
    pub omegas: Vec<f64>,
    pub result: GnompResult,
}

/// Run a fixed two-sinusoid instance observed through `m` random linear
/// measurements of `n = 128` samples, unquantized, unit noise variance and
/// unit amplitude magnitudes (0 dB time-domain SNR).
pub fn run_compressive_instance(m: usize, seed: u64) -> Result<CompressiveOutcome> {
    let n = 128;
    let omegas = vec![1.5, 3.2];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps: Vec<SinusoidComponent> = omegas
        .iter()
        .map(|&omega| SinusoidComponent {
            omega,
            amp: Complex64::from_polar(1.0, rng.gen::<f64>() * 2.0 * PI),
        })
        .collect();
    let phi = nalgebra::DMatrix::from_fn(m, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let basis = AtomBasis::Compressive { matrix: phi };
    let clean = mean_signal(&basis, &comps, None);
    let noise = complex_gaussian(&mut rng, m, 1.0);
    let signal: Vec<Complex64> = clean.iter().zip(&noise).map(|(c, e)| c + e).collect();
    let scheme = MeasurementScheme::Unquantized;
    let obs = scheme.quantize(&signal);
    let model = Model {
        scheme,
        basis,
        sigma2: 1.0,
    };
    // The random projection mixes every frequency into every measurement,
    // so residual energy from a half-converged component stays detectable;
    // extra refinement keeps it below the threshold.
    let mut config = GnompConfig::new(0.01);
    config.single_rounds = 3;
    config.cyclic_rounds = 6;
    config.oversample = 8;
    let result = extract_spectrum(&model, &obs, &config)?;
    Ok(CompressiveOutcome {
        m,
        omegas,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_trials_give_empty_tables() {
        let spec = ExperimentSpec::new("empty", 64, vec![20.0], vec![BitDepth::Finite(2)], 0);
        let out = run_experiment(&spec).unwrap();
        assert!(out.trials.is_empty());
        assert_eq!(out.aggregate.len(), 1);
        assert_eq!(out.aggregate[0].trials, 0);
    }

    #[test]
    fn sampled_frequencies_respect_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let f = sample_frequencies(&mut rng, 8, 256, 2.5).unwrap();
            let min_sep = 2.5 * 2.0 * PI / 256.0;
            for i in 0..f.len() {
                for j in 0..i {
                    assert!(wrap_distance(f[i], f[j]) >= min_sep);
                }
            }
        }
    }

    #[test]
    fn matching_is_one_to_one_and_closest_first() {
        let truths = [1.0, 1.1];
        let est = vec![
            SinusoidComponent {
                omega: 1.001,
                amp: Complex64::new(1.0, 0.0),
            },
            SinusoidComponent {
                omega: 2.5,
                amp: Complex64::new(1.0, 0.0),
            },
        ];
        let m = match_components(&truths, &est, 0.05);
        assert_eq!(m, vec![Some(0), None]);
    }

    #[test]
    fn run_is_deterministic_and_detects_strong_targets() {
        let mut spec = ExperimentSpec::new(
            "det",
            128,
            vec![30.0, 30.0],
            vec![BitDepth::Finite(2), BitDepth::Infinite],
            6,
        );
        spec.seed = 42;
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        let ser_a = serde_json::to_string(&a.trials).unwrap();
        let ser_b = serde_json::to_string(&b.trials).unwrap();
        assert_eq!(ser_a, ser_b);
        for row in &a.aggregate {
            assert!(row.p_d > 0.8, "p_d {} for {:?}", row.p_d, row.bits);
            assert!(row.crb_freq > 0.0);
            assert!(row.pd_theory > 0.99);
            assert!(row.snr_loss_db >= -1e-9);
        }
        // Trial rows exist for every cell, trial, and target.
        assert_eq!(a.trials.len(), 2 * 6 * 2);
    }

    #[test]
    fn signed_mode_runs_and_labels_cells() {
        let mut spec = ExperimentSpec::new("sg", 128, vec![28.0], vec![], 4);
        spec.mode = MeasurementMode::Signed {
            levels: signed_levels_default(),
        };
        spec.seed = 3;
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.aggregate.len(), 1);
        assert_eq!(out.aggregate[0].bits, "signed");
        assert!(out.aggregate[0].p_d > 0.5);
    }

    #[test]
    fn compressive_mode_runs() {
        let mut spec = ExperimentSpec::new("cs", 64, vec![20.0], vec![BitDepth::Infinite], 3);
        spec.mode = MeasurementMode::Compressive { m: 96 };
        spec.seed = 11;
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.aggregate[0].detections, 3);
        assert!(out.aggregate[0].crb_freq.is_nan());
    }

    #[test]
    fn csv_round_trip() {
        let spec = ExperimentSpec::new("csv", 64, vec![25.0], vec![BitDepth::Finite(3)], 2);
        let out = run_experiment(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let agg = dir.path().join("aggregate.csv");
        write_csv(&agg, &out.aggregate).unwrap();
        let mut rdr = csv::Reader::from_path(&agg).unwrap();
        let rows: Vec<AggregateRow> = rdr.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), out.aggregate.len());
        assert_relative_eq!(rows[0].p_d, out.aggregate[0].p_d);
    }

    #[test]
    fn demo_runs_both_bit_depths() {
        let runs = run_demo(0).unwrap();
        assert_eq!(runs.len(), 2);
        for run in &runs {
            assert!(run.detect_stats.len() >= 2);
            // The last recorded statistic is the one that stopped the loop.
            assert!(*run.detect_stats.last().unwrap() < run.tau_th);
            assert_eq!(run.loss_true.len(), 2);
            assert!(run.loss_true.iter().all(|&l| l > 0.0));
        }
    }

    #[test]
    fn compressive_instance_recovers_frequencies() {
        let out = run_compressive_instance(200, 0).unwrap();
        assert_eq!(out.result.components.len(), 2);
        let mut est: Vec<f64> = out.result.components.iter().map(|c| c.omega).collect();
        est.sort_by(f64::total_cmp);
        assert!((est[0] - 1.5).abs() < 0.01);
        assert!((est[1] - 3.2).abs() < 0.01);
    }
}
