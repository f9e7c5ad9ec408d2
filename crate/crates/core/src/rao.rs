//! Rao detection statistics for a sinusoid at known or unknown frequency,
//! constant-false-alarm thresholds, and closed-form detection probability
//! predictions.
//!
//! The statistic is built from pseudo-measurements (per-sample likelihood
//! scores) and is asymptotically central chi-squared with two degrees of
//! freedom under the null, noncentral under the alternative. Grid
//! evaluation over all DFT frequencies runs through a pair of FFTs.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::fim::s_plus_minus;
use crate::likelihood::{h_plus_minus, pseudo_measurements, AtomBasis, Model};
use crate::quantizer::QuantizedObservation;
use crate::special::marcum_q1;

/// Full Rao statistic from the atom-score correlation `c = a^H psi` and the
/// information sums of the atom.
pub fn rao_statistic(c: Complex64, s_plus: f64, s_minus: Complex64) -> f64 {
    let num = s_plus * c.norm_sqr() - (s_minus * c * c).re;
    let den = s_plus * s_plus - s_minus.norm_sqr();
    num / den
}

/// Simplified Rao statistic dropping the channel-imbalance term,
/// `|a^H psi|^2 / S_+`.
pub fn rao_statistic_simplified(c: Complex64, s_plus: f64) -> f64 {
    c.norm_sqr() / s_plus
}

/// Rao statistic of `obs` at frequency `omega`, with all other structure
/// (interference and thresholds) collected in the mean `zeta`.
pub fn rao_at(model: &Model, obs: &QuantizedObservation, zeta: &[Complex64], omega: f64) -> f64 {
    let psi = pseudo_measurements(obs, zeta, model.sigma());
    let (hp, hm) = h_plus_minus(&model.scheme, zeta, model.sigma());
    let a = model.basis.atom(omega);
    let (sp, sm) = s_plus_minus(&a, &hp, &hm);
    let c: Complex64 = a.iter().zip(&psi).map(|(an, pn)| an.conj() * pn).sum();
    rao_statistic(c, sp, sm)
}

/// Rao statistics over an oversampled frequency grid.
#[derive(Debug, Clone)]
pub struct RaoGridResult {
    /// Grid frequencies `2 pi g / G` for `g = 0..G`.
    pub omegas: Vec<f64>,
    /// Rao statistic at each grid frequency.
    pub stats: Vec<f64>,
    /// Index of the grid maximum.
    pub best: usize,
}

impl RaoGridResult {
    pub fn best_omega(&self) -> f64 {
        self.omegas[self.best]
    }

    pub fn best_stat(&self) -> f64 {
        self.stats[self.best]
    }
}

/// Evaluate the Rao statistic on the grid `omega_g = 2 pi g / (oversample N)`.
///
/// Fourier atoms use two FFTs: one over the scores for `a^H psi` and one
/// over the channel-imbalance vector for `a^T diag(h_-) a`. A compressive
/// basis falls back to dense evaluation.
pub fn rao_grid(
    model: &Model,
    obs: &QuantizedObservation,
    zeta: &[Complex64],
    oversample: usize,
) -> RaoGridResult {
    assert!(oversample >= 1, "oversample factor must be at least 1");
    let sigma = model.sigma();
    let psi = pseudo_measurements(obs, zeta, sigma);
    let (hp, hm) = h_plus_minus(&model.scheme, zeta, sigma);
    let n = model.basis.signal_len();
    let g_len = oversample * n;
    let omegas: Vec<f64> = (0..g_len)
        .map(|g| 2.0 * std::f64::consts::PI * g as f64 / g_len as f64)
        .collect();

    let stats = match &model.basis {
        AtomBasis::Fourier { .. } => {
            // a^H(omega_g) psi for all g is the length-G DFT of the scores.
            let mut planner = FftPlanner::new();
            let fft = planner.plan_fft_forward(g_len);
            let mut c_buf = vec![Complex64::new(0.0, 0.0); g_len];
            c_buf[..n].copy_from_slice(&psi);
            fft.process(&mut c_buf);

            // a^T(omega_g) diag(h_-) a(omega_g) = sum_n h_-[n] e^{j 2 n omega_g},
            // the conjugated DFT of h_- scattered onto the even indices.
            let mut q_buf = vec![Complex64::new(0.0, 0.0); g_len];
            for (i, &h) in hm.iter().enumerate() {
                q_buf[(2 * i) % g_len] += Complex64::new(h, 0.0);
            }
            fft.process(&mut q_buf);

            let sp: f64 = hp.iter().sum();
            (0..g_len)
                .map(|g| rao_statistic(c_buf[g], sp, q_buf[g].conj()))
                .collect::<Vec<f64>>()
        }
        AtomBasis::Compressive { .. } => omegas
            .iter()
            .map(|&w| {
                let a = model.basis.atom(w);
                let (sp, sm) = s_plus_minus(&a, &hp, &hm);
                let c: Complex64 = a.iter().zip(&psi).map(|(an, pn)| an.conj() * pn).sum();
                rao_statistic(c, sp, sm)
            })
            .collect(),
    };

    let best = stats
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    RaoGridResult { omegas, stats, best }
}

/// Threshold for a target false alarm rate when the frequency is unknown and
/// the maximum is taken over `n_grid` bins.
pub fn threshold_unknown_freq(p_fa: f64, n_grid: usize) -> f64 {
    assert!(p_fa > 0.0 && p_fa < 1.0, "false alarm rate must be in (0, 1)");
    assert!(n_grid >= 1);
    // -2 ln(1 - (1 - p)^(1/N)) computed through expm1/ln1p.
    let per_bin = -((-p_fa).ln_1p() / n_grid as f64).exp_m1();
    -2.0 * per_bin.ln()
}

/// Threshold for a target false alarm rate at a known frequency.
pub fn threshold_known_freq(p_fa: f64) -> f64 {
    assert!(p_fa > 0.0 && p_fa < 1.0, "false alarm rate must be in (0, 1)");
    -2.0 * p_fa.ln()
}

/// Noncentrality parameter of the Rao statistic at the true frequency,
/// `(2 / sigma^2) (S_+ |x|^2 + Re(S_- x^2))`.
pub fn noncentrality(x: Complex64, s_plus: f64, s_minus: Complex64, sigma2: f64) -> f64 {
    2.0 / sigma2 * (s_plus * x.norm_sqr() + (s_minus * x * x).re)
}

/// Squared Dirichlet kernel `|sin(N d / 2) / (N sin(d / 2))|^2` describing
/// the loss from evaluating at a grid frequency offset `d` from the truth.
pub fn dirichlet_mismatch(delta: f64, n: usize) -> f64 {
    let nf = n as f64;
    // Wrap to (-pi, pi].
    let d = delta - (delta / (2.0 * std::f64::consts::PI)).round() * 2.0 * std::f64::consts::PI;
    if d.abs() < 1e-6 {
        let r = 1.0 - (nf * nf - 1.0) * d * d / 24.0;
        return r * r;
    }
    let r = (nf * d / 2.0).sin() / (nf * (d / 2.0).sin());
    r * r
}

/// Detection probability `Q_1(sqrt(lambda), sqrt(tau))` of a chi-squared
/// test with two degrees of freedom at threshold `tau`.
pub fn predict_pd(lambda: f64, tau: f64) -> f64 {
    marcum_q1(lambda.max(0.0).sqrt(), tau.max(0.0).sqrt())
}

/// Closed-form prediction for detecting one sinusoid with the max-bin test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectionPrediction {
    /// Noncentrality at the grid bin nearest the true frequency.
    pub lambda: f64,
    /// Detection threshold.
    pub tau: f64,
    /// Predicted detection probability.
    pub p_d: f64,
}

/// Predict the detection probability of a sinusoid `(omega, x)` under the
/// max-bin Rao test at false alarm rate `p_fa`, with the censoring evaluated
/// at the mean `zeta` of everything except this component.
pub fn predict_detection(
    model: &Model,
    omega: f64,
    x: Complex64,
    zeta: &[Complex64],
    p_fa: f64,
) -> DetectionPrediction {
    let n = model.basis.signal_len();
    let (hp, hm) = h_plus_minus(&model.scheme, zeta, model.sigma());
    let a = model.basis.atom(omega);
    let (sp, sm) = s_plus_minus(&a, &hp, &hm);
    // Nearest DFT bin in wrap-around distance.
    let bin = (omega * n as f64 / (2.0 * std::f64::consts::PI)).round();
    let delta = omega - bin * 2.0 * std::f64::consts::PI / n as f64;
    let beta = match &model.basis {
        AtomBasis::Fourier { .. } => dirichlet_mismatch(delta, n),
        AtomBasis::Compressive { .. } => {
            let ag = model.basis.atom(omega - delta);
            let inner: Complex64 = ag.iter().zip(&a).map(|(g, t)| g.conj() * t).sum();
            let gram: f64 = ag.iter().map(|z| z.norm_sqr()).sum();
            inner.norm_sqr() / (gram * gram)
        }
    };
    let lambda = beta * noncentrality(x, sp, sm, model.sigma2);
    let tau = threshold_unknown_freq(p_fa, n);
    DetectionPrediction {
        lambda,
        tau,
        p_d: predict_pd(lambda, tau),
    }
}

/// Statistic and threshold values in the decibel convention
/// `20 log10(value)` used for reporting spectra.
pub fn stat_to_db(t: f64) -> f64 {
    20.0 * t.log10()
}
