//! Fisher information and Cramer-Rao bounds for sinusoid parameters under
//! interval censoring, and the quantization SNR loss they imply.
//!
//! Censoring enters only through the per-channel information density `h`
//! evaluated at the measurement mean. With `h = 1` everywhere all formulas
//! reduce to the familiar unquantized expressions.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::likelihood::{h_plus_minus, Model, SinusoidComponent};

/// Sums `S_+ = a^H diag(h_+) a` and `S_- = a^T diag(h_-) a` of the
/// information vectors against the atom.
pub fn s_plus_minus(atom: &[Complex64], h_plus: &[f64], h_minus: &[f64]) -> (f64, Complex64) {
    assert_eq!(atom.len(), h_plus.len(), "atom length mismatch");
    assert_eq!(atom.len(), h_minus.len(), "atom length mismatch");
    let mut sp = 0.0;
    let mut sm = Complex64::new(0.0, 0.0);
    for n in 0..atom.len() {
        sp += atom[n].norm_sqr() * h_plus[n];
        sm += atom[n] * atom[n] * h_minus[n];
    }
    (sp, sm)
}

/// Fisher information of `[Re x, Im x]` for a sinusoid at `omega` whose
/// frequency is known, with the censoring evaluated at the full mean `mean`.
pub fn fim_amplitude(model: &Model, omega: f64, mean: &[Complex64]) -> Matrix2<f64> {
    let a = model.basis.atom(omega);
    let (hp, hm) = h_plus_minus(&model.scheme, mean, model.sigma());
    let (sp, sm) = s_plus_minus(&a, &hp, &hm);
    let c = 2.0 / model.sigma2;
    Matrix2::new(
        c * (sp + sm.re),
        c * (-sm.im),
        c * (-sm.im),
        c * (sp - sm.re),
    )
}

/// Cramer-Rao bound on `[Re x, Im x]` (inverse of [`fim_amplitude`]).
pub fn crb_amplitude(model: &Model, omega: f64, mean: &[Complex64]) -> Result<Matrix2<f64>> {
    let fim = fim_amplitude(model, omega, mean);
    fim.try_inverse()
        .ok_or_else(|| Error::SingularFim("amplitude information matrix".into()))
}

/// Fisher information of the stacked parameters
/// `[omega_1, Re x_1, Im x_1, ..., omega_K, Re x_K, Im x_K]`.
pub fn fim_general(
    model: &Model,
    components: &[SinusoidComponent],
    offset: Option<&[Complex64]>,
) -> DMatrix<f64> {
    let m = model.basis.out_len();
    let k = components.len();
    let mean = crate::likelihood::mean_signal(&model.basis, components, offset);
    let (hp, hm) = h_plus_minus(&model.scheme, &mean, model.sigma());
    // Per-channel densities, recovered from the sum and difference.
    let h_re: Vec<f64> = hp.iter().zip(&hm).map(|(p, q)| p + q).collect();
    let h_im: Vec<f64> = hp.iter().zip(&hm).map(|(p, q)| p - q).collect();

    // Jacobian of the stacked real mean [Re mu; Im mu] in the parameters.
    let mut jac = DMatrix::zeros(2 * m, 3 * k);
    for (ki, comp) in components.iter().enumerate() {
        let a = model.basis.atom(comp.omega);
        let (d1, _) = model.basis.atom_derivs(comp.omega);
        for n in 0..m {
            let dmu_domega = d1[n] * comp.amp;
            jac[(n, 3 * ki)] = dmu_domega.re;
            jac[(m + n, 3 * ki)] = dmu_domega.im;
            jac[(n, 3 * ki + 1)] = a[n].re;
            jac[(m + n, 3 * ki + 1)] = a[n].im;
            jac[(n, 3 * ki + 2)] = -a[n].im;
            jac[(m + n, 3 * ki + 2)] = a[n].re;
        }
    }
    let mut lambda = DMatrix::zeros(2 * m, 2 * m);
    for n in 0..m {
        lambda[(n, n)] = h_re[n];
        lambda[(m + n, m + n)] = h_im[n];
    }
    (2.0 / model.sigma2) * jac.transpose() * lambda * jac
}

/// Cramer-Rao bound for the stacked parameters (inverse of [`fim_general`]).
pub fn crb_general(
    model: &Model,
    components: &[SinusoidComponent],
    offset: Option<&[Complex64]>,
) -> Result<DMatrix<f64>> {
    fim_general(model, components, offset)
        .try_inverse()
        .ok_or_else(|| Error::SingularFim("stacked information matrix".into()))
}

/// SNR loss of the censored detector relative to unquantized sampling, in
/// dB: `10 log10(a^H a / S_+)` with the information evaluated at the
/// interference-plus-threshold mean `zeta`.
pub fn snr_loss(model: &Model, omega: f64, zeta: &[Complex64]) -> f64 {
    let a = model.basis.atom(omega);
    let (hp, hm) = h_plus_minus(&model.scheme, zeta, model.sigma());
    let (sp, _) = s_plus_minus(&a, &hp, &hm);
    10.0 * (model.basis.gram(omega) / sp).log10()
}

/// Closed-form approximation of the 1-bit SNR loss in dB, driven only by the
/// effective threshold `zeta` and the noise level. The per-channel density is
/// approximated by `2/pi * exp(-v^2/sigma^2)` below `|v| = sqrt(8/pi) sigma`
/// and by `|v|/(sqrt(pi) sigma) * exp(-v^2/sigma^2)` above.
pub fn snr_loss_1bit_approx(zeta: &[Complex64], sigma: f64) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive");
    let split = (8.0 / std::f64::consts::PI).sqrt() * sigma;
    let h_approx = |v: f64| {
        let e = (-v * v / (sigma * sigma)).exp();
        if v.abs() <= split {
            2.0 / std::f64::consts::PI * e
        } else {
            v.abs() / (std::f64::consts::PI.sqrt() * sigma) * e
        }
    };
    let denom: f64 = zeta.iter().map(|z| h_approx(z.re) + h_approx(z.im)).sum();
    10.0 * (2.0 * zeta.len() as f64 / denom).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{
        amp_grad_hess, atom, freq_derivs, mean_signal, pseudo_measurements, AtomBasis,
    };
    use crate::quantizer::{quantize_complex, BitDepth, MeasurementScheme, QuantizerSpec};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn unquantized_amplitude_fim_is_diagonal() {
        let n = 64;
        let sigma2 = 1.7;
        let model = Model {
            scheme: MeasurementScheme::Unquantized,
            basis: AtomBasis::Fourier { n },
            sigma2,
        };
        let mean = vec![Complex64::new(0.0, 0.0); n];
        let fim = fim_amplitude(&model, 1.1, &mean);
        let expect = 2.0 * n as f64 / sigma2;
        assert_relative_eq!(fim[(0, 0)], expect, max_relative = 1e-12);
        assert_relative_eq!(fim[(1, 1)], expect, max_relative = 1e-12);
        assert_relative_eq!(fim[(0, 1)], 0.0, epsilon = 1e-12);
        let crb = crb_amplitude(&model, 1.1, &mean).unwrap();
        assert_relative_eq!(crb.trace(), sigma2 / n as f64, max_relative = 1e-12);
    }

    #[test]
    fn one_bit_sign_loss_is_pi_over_two() {
        let n = 32;
        let model = Model {
            scheme: MeasurementScheme::Uniform(
                QuantizerSpec::new(BitDepth::Finite(1), 1.0).unwrap(),
            ),
            basis: AtomBasis::Fourier { n },
            sigma2: 1.0,
        };
        let zeta = vec![Complex64::new(0.0, 0.0); n];
        let expect_db = 10.0 * (std::f64::consts::PI / 2.0).log10();
        assert_relative_eq!(snr_loss(&model, 0.4, &zeta), expect_db, max_relative = 1e-12);
        assert_relative_eq!(
            snr_loss_1bit_approx(&zeta, 1.0),
            expect_db,
            max_relative = 1e-12
        );
    }

    #[test]
    fn one_bit_loss_with_strong_interferer() {
        // One interfering sinusoid of amplitude 2 at omega = pi/2, unit
        // noise power; the exact 1-bit loss is 4.82 dB and the closed-form
        // approximation stays within a few tenths of a dB.
        let n = 128;
        let model = Model {
            scheme: MeasurementScheme::Uniform(
                QuantizerSpec::new(BitDepth::Finite(1), 1.0).unwrap(),
            ),
            basis: AtomBasis::Fourier { n },
            sigma2: 1.0,
        };
        let zeta: Vec<Complex64> = atom(std::f64::consts::FRAC_PI_2, n)
            .iter()
            .map(|a| a * 2.0)
            .collect();
        let loss = snr_loss(&model, 0.9, &zeta);
        assert_relative_eq!(loss, 4.8168, max_relative = 1e-3);
        let approx = snr_loss_1bit_approx(&zeta, 1.0);
        assert!((approx - loss).abs() < 0.6, "approx {approx} vs exact {loss}");
    }

    #[test]
    fn general_fim_reduces_to_amplitude_block() {
        // With h constant the amplitude block of the stacked FIM matches the
        // dedicated 2x2 formula.
        let n = 16;
        let comp = SinusoidComponent {
            omega: 0.8,
            amp: Complex64::new(0.5, -0.2),
        };
        let model = Model {
            scheme: MeasurementScheme::Unquantized,
            basis: AtomBasis::Fourier { n },
            sigma2: 0.9,
        };
        let mean = mean_signal(&model.basis, &[comp], None);
        let full = fim_general(&model, &[comp], None);
        let amp = fim_amplitude(&model, comp.omega, &mean);
        assert_relative_eq!(full[(1, 1)], amp[(0, 0)], max_relative = 1e-12);
        assert_relative_eq!(full[(2, 2)], amp[(1, 1)], max_relative = 1e-12);
        assert_relative_eq!(full[(1, 2)], amp[(0, 1)], epsilon = 1e-9);
    }

    #[test]
    fn unquantized_frequency_crb_matches_closed_form() {
        // Single sinusoid, no censoring: var(omega) >= 6 sigma^2 /
        // (|x|^2 N (N^2 - 1)) after concentrating out the amplitude.
        let n = 32;
        let comp = SinusoidComponent {
            omega: 1.9,
            amp: Complex64::new(1.2, 0.4),
        };
        let sigma2 = 0.5;
        let model = Model {
            scheme: MeasurementScheme::Unquantized,
            basis: AtomBasis::Fourier { n },
            sigma2,
        };
        let crb = crb_general(&model, &[comp], None).unwrap();
        let nf = n as f64;
        let expect = 6.0 * sigma2 / (comp.amp.norm_sqr() * nf * (nf * nf - 1.0));
        assert_relative_eq!(crb[(0, 0)], expect, max_relative = 1e-9);
    }

    #[test]
    fn fim_matches_score_covariance() {
        // Monte Carlo identity check: the covariance of the score equals the
        // information matrix. Small N keeps the simulation cheap.
        let n = 4;
        let comp = SinusoidComponent {
            omega: 1.1,
            amp: Complex64::new(0.6, -0.3),
        };
        let sigma2 = 1.0f64;
        let sigma = sigma2.sqrt();
        let spec = QuantizerSpec::new(BitDepth::Finite(2), 1.2).unwrap();
        let model = Model {
            scheme: MeasurementScheme::Uniform(spec),
            basis: AtomBasis::Fourier { n },
            sigma2,
        };
        let fim = fim_general(&model, &[comp], None);

        let mean = mean_signal(&model.basis, &[comp], None);
        let a = model.basis.atom(comp.omega);
        let s = sigma / std::f64::consts::SQRT_2;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let trials = 400_000usize;
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for _ in 0..trials {
            let y: Vec<Complex64> = mean
                .iter()
                .map(|mu| {
                    let er: f64 = rng.sample(StandardNormal);
                    let ei: f64 = rng.sample(StandardNormal);
                    mu + Complex64::new(s * er, s * ei)
                })
                .collect();
            let obs = quantize_complex(&y, &spec);
            let psi = pseudo_measurements(&obs, &mean, sigma);
            let (g_amp, _) = amp_grad_hess(&obs, &a, &mean, sigma);
            let (g_omega, _) = freq_derivs(&obs, &model.basis, &comp, &mean, sigma);
            let _ = psi;
            let g = nalgebra::Vector3::new(g_omega, g_amp[0], g_amp[1]);
            acc += g * g.transpose();
        }
        acc /= trials as f64;
        let err = (&acc - &fim).norm() / fim.norm();
        assert!(err < 0.02, "score covariance off by {err}, fim {fim} mc {acc}");
    }

    #[test]
    fn quantization_inflates_the_crb() {
        let n = 32;
        let comp = SinusoidComponent {
            omega: 2.4,
            amp: Complex64::new(0.7, 0.7),
        };
        let sigma2 = 1.0;
        let coarse = Model {
            scheme: MeasurementScheme::Uniform(
                QuantizerSpec::new(BitDepth::Finite(1), 1.0).unwrap(),
            ),
            basis: AtomBasis::Fourier { n },
            sigma2,
        };
        let fine = Model {
            scheme: MeasurementScheme::Unquantized,
            basis: AtomBasis::Fourier { n },
            sigma2,
        };
        let c1 = crb_general(&coarse, &[comp], None).unwrap();
        let c0 = crb_general(&fine, &[comp], None).unwrap();
        for i in 0..3 {
            assert!(c1[(i, i)] > c0[(i, i)]);
        }
    }
}
