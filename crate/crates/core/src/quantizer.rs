//! Uniform B-bit complex quantizer: decision thresholds, output levels,
//! interval bounds, signed time-varying-threshold measurements and the
//! full-scale design rule.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bit depth of the quantizer; `Infinite` makes quantization the identity map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BitDepth {
    Finite(u32),
    #[serde(with = "infinite_tag")]
    Infinite,
}

mod infinite_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str("infinite")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<(), D::Error> {
        let tag = String::deserialize(d)?;
        if tag == "infinite" || tag == "inf" {
            Ok(())
        } else {
            Err(serde::de::Error::custom("expected \"infinite\""))
        }
    }
}

impl BitDepth {
    pub fn is_infinite(self) -> bool {
        matches!(self, BitDepth::Infinite)
    }
}

impl std::fmt::Display for BitDepth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BitDepth::Finite(b) => write!(f, "{b}"),
            BitDepth::Infinite => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for BitDepth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "infinite" | "Inf" => Ok(BitDepth::Infinite),
            _ => s
                .parse::<u32>()
                .map(BitDepth::Finite)
                .map_err(|_| Error::InvalidArgument(format!("bad bit depth {s:?}"))),
        }
    }
}

/// Uniform quantizer with `b = 2^B` output levels over `[-gamma, gamma]`.
///
/// Interior thresholds are `tau_d = d*2*gamma/b - gamma`, the outermost cells
/// extend to infinity, and the level of cell `d` is `-gamma + (2*gamma/b)(d + 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    bit_depth: BitDepth,
    full_scale: f64,
}

impl QuantizerSpec {
    pub fn new(bit_depth: BitDepth, full_scale: f64) -> Result<Self> {
        if !(full_scale > 0.0) || !full_scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "full_scale must be positive and finite, got {full_scale}"
            )));
        }
        if let BitDepth::Finite(b) = bit_depth {
            if b == 0 {
                return Err(Error::InvalidArgument("bit_depth must be >= 1".into()));
            }
            if b > 52 {
                return Err(Error::InvalidArgument(format!("bit_depth {b} too large")));
            }
        }
        Ok(Self { bit_depth, full_scale })
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn full_scale(&self) -> f64 {
        self.full_scale
    }

    /// Number of output levels `b = 2^B`; `None` for the identity quantizer.
    pub fn levels(&self) -> Option<u64> {
        match self.bit_depth {
            BitDepth::Finite(b) => Some(1u64 << b),
            BitDepth::Infinite => None,
        }
    }

    /// Cell width `2*gamma/b`.
    pub fn step(&self) -> Option<f64> {
        self.levels().map(|b| 2.0 * self.full_scale / b as f64)
    }

    /// Threshold `tau_d`, with `tau_0 = -inf` and `tau_b = +inf`.
    pub fn threshold(&self, d: u64) -> f64 {
        let b = self.levels().expect("thresholds undefined for infinite bit depth");
        assert!(d <= b, "threshold index {d} out of range");
        if d == 0 {
            f64::NEG_INFINITY
        } else if d == b {
            f64::INFINITY
        } else {
            d as f64 * 2.0 * self.full_scale / b as f64 - self.full_scale
        }
    }

    /// Reconstruction level of cell `d`.
    pub fn level(&self, d: u64) -> f64 {
        let b = self.levels().expect("levels undefined for infinite bit depth");
        assert!(d < b, "level index {d} out of range");
        -self.full_scale + (2.0 * self.full_scale / b as f64) * (d as f64 + 0.5)
    }

    /// Code of the cell containing `x` (saturation maps to the outermost cells).
    pub fn code_of(&self, x: f64) -> u64 {
        let b = self.levels().expect("code undefined for infinite bit depth");
        let step = 2.0 * self.full_scale / b as f64;
        let d = ((x + self.full_scale) / step).floor();
        if d < 0.0 {
            0
        } else if d >= b as f64 {
            b - 1
        } else {
            d as u64
        }
    }

    /// Quantize one real sample to its output level.
    pub fn quantize_scalar(&self, x: f64) -> f64 {
        match self.bit_depth {
            BitDepth::Infinite => x,
            BitDepth::Finite(_) => self.level(self.code_of(x)),
        }
    }

    /// Interval `(tau_d, tau_{d+1})` of cell `d`.
    pub fn cell_bounds(&self, d: u64) -> (f64, f64) {
        (self.threshold(d), self.threshold(d + 1))
    }
}

/// One real-channel censoring interval; `lo == hi` encodes an exact
/// (unquantized) sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "CellRepr", into = "CellRepr")]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Serialize, Deserialize)]
struct CellRepr {
    lo: Option<f64>,
    hi: Option<f64>,
}

impl From<CellRepr> for Cell {
    fn from(r: CellRepr) -> Self {
        Cell {
            lo: r.lo.unwrap_or(f64::NEG_INFINITY),
            hi: r.hi.unwrap_or(f64::INFINITY),
        }
    }
}

impl From<Cell> for CellRepr {
    fn from(c: Cell) -> Self {
        CellRepr {
            lo: c.lo.is_finite().then_some(c.lo),
            hi: c.hi.is_finite().then_some(c.hi),
        }
    }
}

impl Cell {
    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        if self.is_exact() {
            x == self.lo
        } else {
            self.lo <= x && x < self.hi
        }
    }
}

/// Per-sample interval bounds for both I/Q channels; the only form the
/// estimator ever sees. Codes are kept alongside when a uniform quantizer
/// produced the observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedObservation {
    pub re: Vec<Cell>,
    pub im: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes_re: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes_im: Option<Vec<u64>>,
}

impl QuantizedObservation {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    /// Exact complex samples, if this observation is unquantized.
    pub fn exact_samples(&self) -> Option<Vec<Complex64>> {
        if self.re.iter().all(Cell::is_exact) && self.im.iter().all(Cell::is_exact) {
            Some(
                self.re
                    .iter()
                    .zip(&self.im)
                    .map(|(r, i)| Complex64::new(r.lo, i.lo))
                    .collect(),
            )
        } else {
            None
        }
    }
}

/// How the analog signal was mapped to intervals; determines both the
/// quantization of new samples and the information-density weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeasurementScheme {
    /// Uniform B-bit quantizer applied to both channels of every sample.
    Uniform(QuantizerSpec),
    /// Per-sample sign comparison against a known complex threshold.
    Signed { thresholds: Vec<Complex64> },
    /// No quantization; intervals degenerate to the exact values.
    Unquantized,
}

impl MeasurementScheme {
    /// Apply the scheme to an analog signal.
    pub fn quantize(&self, signal: &[Complex64]) -> QuantizedObservation {
        match self {
            MeasurementScheme::Uniform(spec) => quantize_complex(signal, spec),
            MeasurementScheme::Signed { thresholds } => {
                assert_eq!(thresholds.len(), signal.len(), "threshold length mismatch");
                signed_measure(signal, thresholds)
            }
            MeasurementScheme::Unquantized => {
                let spec = QuantizerSpec::new(BitDepth::Infinite, 1.0).unwrap();
                quantize_complex(signal, &spec)
            }
        }
    }

    pub fn is_unquantized(&self) -> bool {
        match self {
            MeasurementScheme::Uniform(spec) => spec.bit_depth().is_infinite(),
            MeasurementScheme::Signed { .. } => false,
            MeasurementScheme::Unquantized => true,
        }
    }
}

/// Quantize a complex signal channel-wise, storing both codes and interval
/// bounds. Infinite bit depth stores the samples exactly.
pub fn quantize_complex(signal: &[Complex64], spec: &QuantizerSpec) -> QuantizedObservation {
    match spec.bit_depth() {
        BitDepth::Infinite => QuantizedObservation {
            re: signal.iter().map(|z| Cell { lo: z.re, hi: z.re }).collect(),
            im: signal.iter().map(|z| Cell { lo: z.im, hi: z.im }).collect(),
            codes_re: None,
            codes_im: None,
        },
        BitDepth::Finite(_) => {
            let mut re = Vec::with_capacity(signal.len());
            let mut im = Vec::with_capacity(signal.len());
            let mut codes_re = Vec::with_capacity(signal.len());
            let mut codes_im = Vec::with_capacity(signal.len());
            for z in signal {
                let dr = spec.code_of(z.re);
                let di = spec.code_of(z.im);
                let (lo, hi) = spec.cell_bounds(dr);
                re.push(Cell { lo, hi });
                let (lo, hi) = spec.cell_bounds(di);
                im.push(Cell { lo, hi });
                codes_re.push(dr);
                codes_im.push(di);
            }
            QuantizedObservation {
                re,
                im,
                codes_re: Some(codes_re),
                codes_im: Some(codes_im),
            }
        }
    }
}

/// Signed measurements against per-sample thresholds: each channel records
/// which side of its threshold the sample fell on, as a half-open interval.
pub fn signed_measure(signal: &[Complex64], thresholds: &[Complex64]) -> QuantizedObservation {
    assert_eq!(signal.len(), thresholds.len());
    let mut re = Vec::with_capacity(signal.len());
    let mut im = Vec::with_capacity(signal.len());
    let mut codes_re = Vec::with_capacity(signal.len());
    let mut codes_im = Vec::with_capacity(signal.len());
    for (z, h) in signal.iter().zip(thresholds) {
        let sign_cell = |x: f64, t: f64| {
            if x >= t {
                (Cell { lo: t, hi: f64::INFINITY }, 1u64)
            } else {
                (Cell { lo: f64::NEG_INFINITY, hi: t }, 0u64)
            }
        };
        let (c, d) = sign_cell(z.re, h.re);
        re.push(c);
        codes_re.push(d);
        let (c, d) = sign_cell(z.im, h.im);
        im.push(c);
        codes_im.push(d);
    }
    QuantizedObservation {
        re,
        im,
        codes_re: Some(codes_re),
        codes_im: Some(codes_im),
    }
}

/// Full-scale design rule `gamma = max(|x_1|, ..., |x_K|, 3*sigma/sqrt(2))`.
pub fn design_full_scale(amplitudes: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let noise_floor = 3.0 * sigma / std::f64::consts::SQRT_2;
    Ok(amplitudes.iter().fold(noise_floor, |acc, &a| acc.max(a.abs())))
}
