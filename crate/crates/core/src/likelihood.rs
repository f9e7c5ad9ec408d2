//! Interval-censored Gaussian likelihood for sinusoid mixtures and its
//! derivatives with respect to amplitudes, frequencies and the noise scale.
//!
//! Both I/Q channels of each sample are censored to an interval (a quantizer
//! cell or a sign comparison); an interval with `lo == hi` stands for an
//! exactly observed sample and switches that channel to the Gaussian density.
//! All public functions take the complex noise standard deviation `sigma`,
//! the per-channel standard deviation being `sigma / sqrt(2)`.

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quantizer::{Cell, MeasurementScheme, QuantizedObservation, QuantizerSpec};
use crate::special::{
    gauss_ratio, gauss_ratio2, log_cell_prob, log_normal_pdf, normal_cdf, normal_pdf,
};

/// One sinusoid: frequency in radians per sample and complex amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidComponent {
    pub omega: f64,
    pub amp: Complex64,
}

/// Fourier atom `a(omega)_n = exp(j n omega)` for `n = 0..len`.
pub fn atom(omega: f64, len: usize) -> Vec<Complex64> {
    let rot = Complex64::from_polar(1.0, omega);
    let mut a = Vec::with_capacity(len);
    let mut cur = Complex64::new(1.0, 0.0);
    for _ in 0..len {
        a.push(cur);
        cur *= rot;
    }
    a
}

/// Measurement atoms: either plain Fourier atoms or their image under a
/// compressive mixing matrix applied before quantization.
#[derive(Debug, Clone, PartialEq)]
pub enum AtomBasis {
    Fourier { n: usize },
    Compressive { matrix: DMatrix<Complex64> },
}

impl AtomBasis {
    /// Length of the underlying sinusoid.
    pub fn signal_len(&self) -> usize {
        match self {
            AtomBasis::Fourier { n } => *n,
            AtomBasis::Compressive { matrix } => matrix.ncols(),
        }
    }

    /// Number of measurements actually observed.
    pub fn out_len(&self) -> usize {
        match self {
            AtomBasis::Fourier { n } => *n,
            AtomBasis::Compressive { matrix } => matrix.nrows(),
        }
    }

    fn project(&self, v: &[Complex64]) -> Vec<Complex64> {
        match self {
            AtomBasis::Fourier { .. } => v.to_vec(),
            AtomBasis::Compressive { matrix } => {
                let x = DMatrix::from_column_slice(v.len(), 1, v);
                (matrix * x).as_slice().to_vec()
            }
        }
    }

    /// Measurement atom at `omega`.
    pub fn atom(&self, omega: f64) -> Vec<Complex64> {
        let a = atom(omega, self.signal_len());
        self.project(&a)
    }

    /// First and second derivatives of the measurement atom in `omega`.
    pub fn atom_derivs(&self, omega: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let a = atom(omega, self.signal_len());
        let d1: Vec<Complex64> = a
            .iter()
            .enumerate()
            .map(|(n, &an)| Complex64::new(0.0, n as f64) * an)
            .collect();
        let d2: Vec<Complex64> = a
            .iter()
            .enumerate()
            .map(|(n, &an)| -((n * n) as f64) * an)
            .collect();
        (self.project(&d1), self.project(&d2))
    }

    /// Squared norm of the measurement atom.
    pub fn gram(&self, omega: f64) -> f64 {
        match self {
            AtomBasis::Fourier { n } => *n as f64,
            AtomBasis::Compressive { .. } => {
                self.atom(omega).iter().map(|z| z.norm_sqr()).sum()
            }
        }
    }
}

/// Observation model: how samples were censored, which atoms generate the
/// mean, and the complex noise standard deviation squared.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub scheme: MeasurementScheme,
    pub basis: AtomBasis,
    pub sigma2: f64,
}

impl Model {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// Mean of the measurements, `offset + sum_k atom(omega_k) x_k`.
pub fn mean_signal(
    basis: &AtomBasis,
    components: &[SinusoidComponent],
    offset: Option<&[Complex64]>,
) -> Vec<Complex64> {
    let m = basis.out_len();
    let mut mu = match offset {
        Some(z) => {
            assert_eq!(z.len(), m, "offset length mismatch");
            z.to_vec()
        }
        None => vec![Complex64::new(0.0, 0.0); m],
    };
    for c in components {
        let a = basis.atom(c.omega);
        for (mn, an) in mu.iter_mut().zip(&a) {
            *mn += an * c.amp;
        }
    }
    mu
}

fn per_channel(cell: &Cell, mu: f64, s: f64) -> (f64, f64) {
    ((cell.lo - mu) / s, (cell.hi - mu) / s)
}

/// Log-likelihood of censored samples around the complex mean `mean`.
pub fn log_likelihood(obs: &QuantizedObservation, mean: &[Complex64], sigma: f64) -> f64 {
    assert_eq!(obs.len(), mean.len(), "observation length mismatch");
    assert!(sigma > 0.0, "sigma must be positive");
    let s = sigma / std::f64::consts::SQRT_2;
    let mut ll = 0.0;
    for n in 0..obs.len() {
        for (cell, mu) in [(&obs.re[n], mean[n].re), (&obs.im[n], mean[n].im)] {
            if cell.is_exact() {
                ll += log_normal_pdf((cell.lo - mu) / s) - s.ln();
            } else {
                let (a, b) = per_channel(cell, mu, s);
                ll += log_cell_prob(a, b);
            }
        }
    }
    ll
}

/// Pseudo-measurements: per-sample scores of the censored likelihood.
///
/// The gradient of the log-likelihood in the complex mean is
/// `psi / s` per channel with `s = sigma / sqrt(2)`; for exact samples
/// `psi = (y - mean) / s`, for sign measurements at zero threshold it is
/// `sqrt(2/pi) * sign(y)` channel-wise.
pub fn pseudo_measurements(
    obs: &QuantizedObservation,
    mean: &[Complex64],
    sigma: f64,
) -> Vec<Complex64> {
    assert_eq!(obs.len(), mean.len(), "observation length mismatch");
    let s = sigma / std::f64::consts::SQRT_2;
    let score = |cell: &Cell, mu: f64| {
        if cell.is_exact() {
            (cell.lo - mu) / s
        } else {
            let (a, b) = per_channel(cell, mu, s);
            -gauss_ratio(a, b)
        }
    };
    (0..obs.len())
        .map(|n| Complex64::new(score(&obs.re[n], mean[n].re), score(&obs.im[n], mean[n].im)))
        .collect()
}

/// Second derivative of the log-likelihood in the real and imaginary parts
/// of each mean entry. Both weight vectors are nonpositive because the
/// censored likelihood is log-concave in the mean.
pub fn curvature_weights(
    obs: &QuantizedObservation,
    mean: &[Complex64],
    sigma: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(obs.len(), mean.len(), "observation length mismatch");
    let s = sigma / std::f64::consts::SQRT_2;
    let s2 = s * s;
    let weight = |cell: &Cell, mu: f64| {
        if cell.is_exact() {
            -1.0 / s2
        } else {
            let (a, b) = per_channel(cell, mu, s);
            let g = gauss_ratio(a, b);
            let w = (gauss_ratio2(a, b) - g * g) / s2;
            w.min(0.0)
        }
    };
    let w_re = (0..obs.len()).map(|n| weight(&obs.re[n], mean[n].re)).collect();
    let w_im = (0..obs.len()).map(|n| weight(&obs.im[n], mean[n].im)).collect();
    (w_re, w_im)
}

/// Gradient and Hessian of the log-likelihood in `[Re x, Im x]` for the
/// amplitude multiplying `atom`, with the mean already assembled.
pub fn amp_grad_hess(
    obs: &QuantizedObservation,
    atom: &[Complex64],
    mean: &[Complex64],
    sigma: f64,
) -> (Vector2<f64>, Matrix2<f64>) {
    assert_eq!(atom.len(), mean.len(), "atom length mismatch");
    let s = sigma / std::f64::consts::SQRT_2;
    let psi = pseudo_measurements(obs, mean, sigma);
    let (w_re, w_im) = curvature_weights(obs, mean, sigma);
    let mut proj = Complex64::new(0.0, 0.0);
    let mut hess = Matrix2::zeros();
    for n in 0..atom.len() {
        proj += atom[n].conj() * psi[n];
        let (ar, ai) = (atom[n].re, atom[n].im);
        let j_re = Vector2::new(ar, -ai);
        let j_im = Vector2::new(ai, ar);
        hess += w_re[n] * j_re * j_re.transpose() + w_im[n] * j_im * j_im.transpose();
    }
    (Vector2::new(proj.re, proj.im) / s, hess)
}

/// First and second derivative of the log-likelihood in the frequency of one
/// component, holding its amplitude and the rest of the mean fixed.
pub fn freq_derivs(
    obs: &QuantizedObservation,
    basis: &AtomBasis,
    comp: &SinusoidComponent,
    mean: &[Complex64],
    sigma: f64,
) -> (f64, f64) {
    let s = sigma / std::f64::consts::SQRT_2;
    let (d1, d2) = basis.atom_derivs(comp.omega);
    let psi = pseudo_measurements(obs, mean, sigma);
    let (w_re, w_im) = curvature_weights(obs, mean, sigma);
    let mut g = 0.0;
    let mut h = 0.0;
    for n in 0..mean.len() {
        let dmu = d1[n] * comp.amp;
        let d2mu = d2[n] * comp.amp;
        g += (psi[n].re * dmu.re + psi[n].im * dmu.im) / s;
        h += w_re[n] * dmu.re * dmu.re
            + w_im[n] * dmu.im * dmu.im
            + (psi[n].re * d2mu.re + psi[n].im * d2mu.im) / s;
    }
    (g, h)
}

/// Maximize the censored likelihood over one complex amplitude by damped
/// Newton ascent, the rest of the mean held in `offset`.
pub fn solve_amplitude(
    obs: &QuantizedObservation,
    atom: &[Complex64],
    offset: &[Complex64],
    sigma: f64,
    init: Complex64,
) -> Result<Complex64> {
    assert_eq!(atom.len(), offset.len(), "atom length mismatch");
    let n = atom.len();
    let tol = 1e-9 * (n as f64).max(1.0);
    let mut x = init;
    let mean_at = |x: Complex64| -> Vec<Complex64> {
        atom.iter().zip(offset).map(|(a, z)| z + a * x).collect()
    };
    let mut ll = log_likelihood(obs, &mean_at(x), sigma);
    for _ in 0..60 {
        let mean = mean_at(x);
        let (grad, hess) = amp_grad_hess(obs, atom, &mean, sigma);
        if grad.norm() <= tol {
            return Ok(x);
        }
        let det = hess[(0, 0)] * hess[(1, 1)] - hess[(0, 1)] * hess[(1, 0)];
        let step = if det.abs() > 1e-300 {
            -Vector2::new(
                hess[(1, 1)] * grad[0] - hess[(0, 1)] * grad[1],
                hess[(0, 0)] * grad[1] - hess[(1, 0)] * grad[0],
            ) / det
        } else {
            // Curvature vanished (for example all samples saturated); fall
            // back to a small gradient step.
            grad * (sigma * sigma / (2.0 * n as f64))
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = x + Complex64::new(t * step[0], t * step[1]);
            let cand_ll = log_likelihood(obs, &mean_at(cand), sigma);
            if cand_ll >= ll {
                let gain = cand_ll - ll;
                x = cand;
                ll = cand_ll;
                accepted = gain > 1e-12 * (1.0 + ll.abs());
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(x)
}

/// Derivative of the log-likelihood in `sigma`, used when the noise level
/// itself is estimated.
pub fn sigma_score(obs: &QuantizedObservation, mean: &[Complex64], sigma: f64) -> f64 {
    let s = sigma / std::f64::consts::SQRT_2;
    let mut acc = 0.0;
    for n in 0..obs.len() {
        for (cell, mu) in [(&obs.re[n], mean[n].re), (&obs.im[n], mean[n].im)] {
            if cell.is_exact() {
                let z = (cell.lo - mu) / s;
                acc += z * z - 1.0;
            } else {
                let (a, b) = per_channel(cell, mu, s);
                acc += gauss_ratio2(a, b);
            }
        }
    }
    acc / sigma
}

/// Normalized information density of one censored real channel with cell
/// edges `edges` (first and last entries may be infinite), evaluated at mean
/// `x`. Equals 1 without censoring and `2/pi` for a sign measurement at its
/// threshold.
pub fn h_partition(edges: &[f64], x: f64, sigma: f64) -> f64 {
    assert!(edges.len() >= 2, "need at least one cell");
    let s = sigma / std::f64::consts::SQRT_2;
    let mut acc = 0.0;
    for d in 0..edges.len() - 1 {
        let a = (edges[d] - x) / s;
        let b = (edges[d + 1] - x) / s;
        let p = if a == f64::NEG_INFINITY {
            normal_cdf(b)
        } else if b == f64::INFINITY {
            normal_cdf(-a)
        } else {
            (normal_cdf(b) - normal_cdf(a)).max(0.0)
        };
        if p > 0.0 {
            let r = gauss_ratio(a, b);
            acc += p * r * r;
        }
    }
    acc
}

/// Information density of a uniform quantizer channel.
pub fn h_uniform(spec: &QuantizerSpec, x: f64, sigma: f64) -> f64 {
    let b = spec
        .levels()
        .expect("information density of the identity quantizer is 1");
    let edges: Vec<f64> = (0..=b).map(|d| spec.threshold(d)).collect();
    h_partition(&edges, x, sigma)
}

/// Information density of a single sign comparison against `threshold`.
pub fn h_signed(threshold: f64, x: f64, sigma: f64) -> f64 {
    let s = sigma / std::f64::consts::SQRT_2;
    let z = (x - threshold) / s;
    let p = normal_cdf(z);
    let q = normal_cdf(-z);
    if p == 0.0 || q == 0.0 {
        return 0.0;
    }
    let f = normal_pdf(z);
    f * f / (p * q)
}

/// Channel-averaged information vectors at the mean `mean`:
/// `h_plus = (h(Re) + h(Im)) / 2` and `h_minus = (h(Re) - h(Im)) / 2`.
pub fn h_plus_minus(
    scheme: &MeasurementScheme,
    mean: &[Complex64],
    sigma: f64,
) -> (Vec<f64>, Vec<f64>) {
    let per_sample = |n: usize, mu: Complex64| -> (f64, f64) {
        match scheme {
            MeasurementScheme::Uniform(spec) => {
                if spec.bit_depth().is_infinite() {
                    (1.0, 1.0)
                } else {
                    (h_uniform(spec, mu.re, sigma), h_uniform(spec, mu.im, sigma))
                }
            }
            MeasurementScheme::Signed { thresholds } => (
                h_signed(thresholds[n].re, mu.re, sigma),
                h_signed(thresholds[n].im, mu.im, sigma),
            ),
            MeasurementScheme::Unquantized => (1.0, 1.0),
        }
    };
    let mut h_plus = Vec::with_capacity(mean.len());
    let mut h_minus = Vec::with_capacity(mean.len());
    for (n, &mu) in mean.iter().enumerate() {
        let (hr, hi) = per_sample(n, mu);
        h_plus.push(0.5 * (hr + hi));
        h_minus.push(0.5 * (hr - hi));
    }
    (h_plus, h_minus)
}
