//! Numerically stable scalar kernels: standard normal PDF/CDF, Gaussian
//! interval ratios, the Marcum Q-function and the 2-dof chi-squared law.
//!
//! The ratio kernels are written so that deep-tail intervals (both endpoints
//! many standard deviations out) evaluate to finite, accurate values instead
//! of 0/0. Tail branches go through the scaled complementary error function.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_2PI_HALF: f64 = 0.918_938_533_204_672_74; // ln(2*pi)/2

/// Smallest representable log-probability; cell log-likelihoods are clamped here.
pub const LOG_PROB_FLOOR: f64 = -745.0;

/// Standard normal density `exp(-x^2/2)/sqrt(2*pi)`.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF, accurate in both tails down to the underflow limit.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Scaled complementary error function `exp(z^2) * erfc(z)` for `z >= 0`.
fn erfcx(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z < 25.0 {
        // erfc(25) ~ 3e-274 is still normal, so the product is exact here.
        erfc(z) * (z * z).exp()
    } else {
        // Asymptotic series 1/(z*sqrt(pi)) * sum (-1)^k (2k-1)!!/(2z^2)^k.
        let inv2z2 = 1.0 / (2.0 * z * z);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            term *= -((2 * k - 1) as f64) * inv2z2;
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        sum / (z * std::f64::consts::PI.sqrt())
    }
}

/// Mills ratio `Phi(-z)/phi(z)` for `z >= 0`.
#[inline]
fn mills(z: f64) -> f64 {
    (std::f64::consts::PI / 2.0).sqrt() * erfcx(z / SQRT_2)
}

/// `ln Phi(x)`, stable arbitrarily deep in the left tail.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x >= -30.0 {
        normal_cdf(x).ln()
    } else {
        let z = -x / SQRT_2;
        0.5f64.ln() + erfcx(z).ln() - z * z
    }
}

/// `(phi(b) - phi(a)) / (Phi(b) - Phi(a))` for `a < b` (endpoints may be infinite).
///
/// As the interval shrinks around `x` the value tends to `-x`; both endpoints
/// deep in one tail are handled through Mills ratios without cancellation.
pub fn gauss_ratio(a: f64, b: f64) -> f64 {
    assert!(a < b, "gauss_ratio requires a < b (got {a}, {b})");
    match (a.is_infinite(), b.is_infinite()) {
        (true, true) => 0.0,
        (true, false) => {
            // phi(b) / Phi(b)
            if b >= 0.0 {
                normal_pdf(b) / normal_cdf(b)
            } else {
                1.0 / mills(-b)
            }
        }
        (false, true) => {
            // -phi(a) / Phi(-a)
            if a <= 0.0 {
                -normal_pdf(a) / normal_cdf(-a)
            } else {
                -1.0 / mills(a)
            }
        }
        (false, false) => {
            if b - a < 1e-9 {
                return -0.5 * (a + b);
            }
            if b <= 0.0 {
                -gauss_ratio_right(-b, -a)
            } else if a >= 0.0 {
                gauss_ratio_right(a, b)
            } else {
                (normal_pdf(b) - normal_pdf(a)) / (normal_cdf(b) - normal_cdf(a))
            }
        }
    }
}

// Right-tail form for 0 <= a < b: (t - 1)/(m(a) - t*m(b)) with t = phi(b)/phi(a).
fn gauss_ratio_right(a: f64, b: f64) -> f64 {
    let t = (0.5 * (a * a - b * b)).exp();
    (t - 1.0) / (mills(a) - t * mills(b))
}

/// `(a*phi(a) - b*phi(b)) / (Phi(b) - Phi(a))` for `a < b`; the curvature
/// companion of [`gauss_ratio`], with the same tail-stable evaluation.
pub fn gauss_ratio2(a: f64, b: f64) -> f64 {
    assert!(a < b, "gauss_ratio2 requires a < b (got {a}, {b})");
    match (a.is_infinite(), b.is_infinite()) {
        (true, true) => 0.0,
        (true, false) => {
            if b >= 0.0 {
                -b * normal_pdf(b) / normal_cdf(b)
            } else {
                -b / mills(-b)
            }
        }
        (false, true) => {
            if a <= 0.0 {
                a * normal_pdf(a) / normal_cdf(-a)
            } else {
                a / mills(a)
            }
        }
        (false, false) => {
            if b - a < 1e-9 {
                let x = 0.5 * (a + b);
                return x * x - 1.0;
            }
            // Symmetric under (a, b) -> (-b, -a).
            if b <= 0.0 {
                gauss_ratio2_right(-b, -a)
            } else if a >= 0.0 {
                gauss_ratio2_right(a, b)
            } else {
                (a * normal_pdf(a) - b * normal_pdf(b)) / (normal_cdf(b) - normal_cdf(a))
            }
        }
    }
}

fn gauss_ratio2_right(a: f64, b: f64) -> f64 {
    let t = (0.5 * (a * a - b * b)).exp();
    (a - b * t) / (mills(a) - t * mills(b))
}

/// `ln(Phi(b) - Phi(a))` for `a < b`, clamped below at [`LOG_PROB_FLOOR`].
pub fn log_cell_prob(a: f64, b: f64) -> f64 {
    assert!(a < b, "log_cell_prob requires a < b (got {a}, {b})");
    let lp = match (a.is_infinite(), b.is_infinite()) {
        (true, true) => 0.0,
        (true, false) => log_normal_cdf(b),
        (false, true) => log_normal_cdf(-a),
        (false, false) => {
            if a >= 0.0 {
                log_cell_prob_neg(-b, -a)
            } else if b <= 0.0 {
                log_cell_prob_neg(a, b)
            } else {
                (normal_cdf(b) - normal_cdf(a)).ln()
            }
        }
    };
    lp.max(LOG_PROB_FLOOR)
}

// Both endpoints <= 0: ln Phi(b) + ln(1 - exp(ln Phi(a) - ln Phi(b))).
fn log_cell_prob_neg(a: f64, b: f64) -> f64 {
    let la = log_normal_cdf(a);
    let lb = log_normal_cdf(b);
    let d = -(la - lb).exp();
    if d > -1.0 {
        lb + d.ln_1p()
    } else {
        f64::NEG_INFINITY
    }
}

/// First-order Marcum Q-function `Q_1(a, b)`, absolute accuracy ~1e-12.
///
/// Evaluated as a Poisson mixture of central chi-squared tails, summed over a
/// window around the Poisson mode so large noncentralities stay in range.
pub fn marcum_q1(a: f64, b: f64) -> f64 {
    assert!(a >= 0.0 && b >= 0.0, "marcum_q1 requires a, b >= 0");
    if b == 0.0 {
        return 1.0;
    }
    let u = 0.5 * a * a; // Poisson intensity from the noncentrality
    let v = 0.5 * b * b;
    if u == 0.0 {
        return (-v).exp();
    }
    // Ten standard deviations of the mixing Poisson bound the truncation
    // error well below 1e-15 while keeping the start term representable.
    let half_width = (10.0 * u.sqrt() + 20.0).ceil() as i64;
    let k0 = u.floor() as i64;
    let klo = (k0 - half_width).max(0);
    let khi = k0 + half_width;

    // Poisson pmf of u at klo, then recur upward.
    let mut p = poisson_pmf(klo, u);
    // Poisson CDF of v at klo, then recur its top term upward alongside k.
    let mut t = poisson_pmf(klo, v);
    let mut c = poisson_cdf(klo, v);

    let mut sum = 0.0;
    for k in klo..=khi {
        sum += p * c;
        p *= u / (k + 1) as f64;
        t *= v / (k + 1) as f64;
        c = (c + t).min(1.0);
        if p == 0.0 && k > k0 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

fn poisson_pmf(k: i64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-lambda + k as f64 * lambda.ln() - ln_gamma(k as f64 + 1.0)).exp()
}

fn poisson_cdf(k: i64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    // Sum downward from k until terms vanish.
    let mut t = poisson_pmf(k, lambda);
    if t == 0.0 {
        // The top term underflowed: the CDF is 0 or 1 depending on which
        // side of the mean we fell off.
        return if k as f64 > lambda { 1.0 } else { 0.0 };
    }
    let mut c = t;
    let mut j = k;
    while j > 0 {
        t *= j as f64 / lambda;
        c += t;
        if t < 1e-18 * c {
            break;
        }
        j -= 1;
    }
    c.min(1.0)
}

/// CDF of the central chi-squared law with 2 degrees of freedom.
#[inline]
pub fn chi2_2dof_cdf(x: f64) -> f64 {
    assert!(x >= 0.0, "chi2_2dof_cdf requires x >= 0");
    -(-0.5 * x).exp_m1()
}

/// Quantile of the 2-dof chi-squared law; exact inverse of [`chi2_2dof_cdf`].
#[inline]
pub fn chi2_2dof_quantile(p: f64) -> f64 {
    assert!((0.0..1.0).contains(&p), "chi2_2dof_quantile requires p in [0,1)");
    -2.0 * (-p).ln_1p()
}

/// `ln phi(x)` without going through the exponential.
#[inline]
pub fn log_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_2PI_HALF
}
