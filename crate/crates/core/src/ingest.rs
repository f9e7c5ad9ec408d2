//! Dechirped FMCW radar I/Q ingestion: file framing, noise floor
//! estimation, software quantization, and frequency-to-range conversion.
//!
//! A dechirped capture turns each target delay into a complex sinusoid
//! whose beat frequency is proportional to range. Frames are fast-time
//! records of one pulse; detection runs per frame through the extraction
//! loop and detected frequencies map linearly to ranges.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnomp::{extract_spectrum, GnompConfig};
use crate::likelihood::{mean_signal, AtomBasis, Model, SinusoidComponent};
use crate::quantizer::MeasurementScheme;
use crate::rao::{rao_at, stat_to_db};

/// Speed of light in meters per second.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Waveform and framing parameters of an FMCW capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarParams {
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
    /// FM slope in Hz per second.
    pub slope_hz_per_s: f64,
    /// Sweep duration in seconds.
    pub sweep_time_s: f64,
    /// Pulse repetition interval in seconds.
    pub pri_s: f64,
    /// Sweep bandwidth in Hz.
    pub bandwidth_hz: f64,
    /// Complex sample rate in Hz.
    pub sample_rate_hz: f64,
    /// Pulses per coherent processing interval.
    pub pulses_per_cpi: usize,
    /// Fast-time samples per pulse.
    pub samples_per_pulse: usize,
    /// Receiver channels.
    pub receivers: usize,
}

impl RadarParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope_hz_per_s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "FM slope must be positive, got {}",
                self.slope_hz_per_s
            )));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if self.samples_per_pulse == 0 || self.receivers == 0 {
            return Err(Error::InvalidArgument(
                "samples_per_pulse and receivers must be positive".into(),
            ));
        }
        let record_time = self.samples_per_pulse as f64 / self.sample_rate_hz;
        if record_time > self.sweep_time_s * (1.0 + 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "fast-time record ({record_time} s) exceeds the sweep time ({} s)",
                self.sweep_time_s
            )));
        }
        Ok(())
    }

    /// Parse from a TOML string.
    pub fn from_toml(text: &str) -> Result<Self> {
        let p: RadarParams =
            toml::from_str(text).map_err(|e| Error::Format(format!("radar params: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    /// Range covered by one DFT bin of a fast-time record, in meters.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT * self.sample_rate_hz
            / (2.0 * self.slope_hz_per_s * self.samples_per_pulse as f64)
    }
}

/// Beat frequency of a detected digital frequency, in Hz.
pub fn omega_to_beat_hz(omega: f64, params: &RadarParams) -> f64 {
    omega * params.sample_rate_hz / (2.0 * PI)
}

/// Range of a detected digital frequency, in meters.
pub fn omega_to_range(omega: f64, params: &RadarParams) -> f64 {
    SPEED_OF_LIGHT * omega_to_beat_hz(omega, params) / (2.0 * params.slope_hz_per_s)
}

/// Digital frequency of a given range; inverse of [`omega_to_range`].
pub fn range_to_omega(range_m: f64, params: &RadarParams) -> f64 {
    2.0 * params.slope_hz_per_s * range_m / SPEED_OF_LIGHT * 2.0 * PI / params.sample_rate_hz
}

/// Binary layout of a capture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqFormat {
    /// Bytes per real sample: 2 for signed 16-bit integers (the default
    /// radar-EVM convention), 4 for little-endian `f32`.
    pub sample_width_bytes: usize,
    /// Complex samples per frame.
    pub frame_len: usize,
    /// Receiver channels; frames alternate over channels in capture order.
    pub channels: usize,
    /// Multiplier applied to raw sample values.
    pub scale: f64,
}

impl IqFormat {
    pub fn int16(frame_len: usize) -> Self {
        IqFormat {
            sample_width_bytes: 2,
            frame_len,
            channels: 1,
            scale: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sample_width_bytes != 2 && self.sample_width_bytes != 4 {
            return Err(Error::Format(format!(
                "unsupported sample width {} bytes (expected 2 or 4)",
                self.sample_width_bytes
            )));
        }
        if self.frame_len == 0 || self.channels == 0 {
            return Err(Error::Format(
                "frame_len and channels must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One fast-time record.
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    pub samples: Vec<Complex64>,
    pub frame_index: usize,
    pub channel: usize,
}

/// Read interleaved I/Q samples and cut them into frames. A partial
/// trailing frame is dropped with a warning on stderr; a byte count that
/// does not divide into whole complex samples is a descriptor mismatch.
pub fn load_iq(path: &Path, format: &IqFormat) -> Result<Vec<IqFrame>> {
    format.validate()?;
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_iq(&bytes, format)
}

/// Decode an in-memory capture; see [`load_iq`].
pub fn decode_iq(bytes: &[u8], format: &IqFormat) -> Result<Vec<IqFrame>> {
    format.validate()?;
    let pair = 2 * format.sample_width_bytes;
    if bytes.len() % pair != 0 {
        return Err(Error::Format(format!(
            "{} bytes do not divide into {}-byte I/Q pairs",
            bytes.len(),
            pair
        )));
    }
    let total = bytes.len() / pair;
    let samples: Vec<Complex64> = (0..total)
        .map(|i| {
            let at = |j: usize| {
                let o = (2 * i + j) * format.sample_width_bytes;
                let raw = match format.sample_width_bytes {
                    2 => i16::from_le_bytes([bytes[o], bytes[o + 1]]) as f64,
                    _ => f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]])
                        as f64,
                };
                raw * format.scale
            };
            Complex64::new(at(0), at(1))
        })
        .collect();
    let n_frames = total / format.frame_len;
    if total % format.frame_len != 0 {
        eprintln!(
            "warning: dropping {} trailing samples short of a full frame",
            total % format.frame_len
        );
    }
    Ok((0..n_frames)
        .map(|f| IqFrame {
            samples: samples[f * format.frame_len..(f + 1) * format.frame_len].to_vec(),
            frame_index: f / format.channels,
            channel: f % format.channels,
        })
        .collect())
}

/// Serialize frames back to the binary layout; inverse of [`decode_iq`]
/// for int16 captures whose values are exactly representable.
pub fn encode_iq(frames: &[IqFrame], format: &IqFormat) -> Result<Vec<u8>> {
    format.validate()?;
    let mut bytes = Vec::new();
    for frame in frames {
        for z in &frame.samples {
            for v in [z.re, z.im] {
                let raw = v / format.scale;
                match format.sample_width_bytes {
                    2 => bytes.extend_from_slice(&(raw.round() as i16).to_le_bytes()),
                    _ => bytes.extend_from_slice(&(raw as f32).to_le_bytes()),
                }
            }
        }
    }
    Ok(bytes)
}

/// Median-periodogram noise variance estimate.
///
/// On pure complex Gaussian noise the periodogram bins are independent
/// exponential variables with mean equal to the noise variance, so the
/// sample median divided by `ln 2` is a robust estimate that ignores a
/// few strong sinusoid bins.
pub fn estimate_noise_variance(samples: &[Complex64]) -> Result<f64> {
    let n = samples.len();
    if n < 32 {
        return Err(Error::InvalidArgument(format!(
            "need at least 32 samples for a noise estimate, got {n}"
        )));
    }
    if samples.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::InvalidArgument(
            "all-zero frame has no noise floor".into(),
        ));
    }
    let mut buf: Vec<rustfft::num_complex::Complex<f64>> = samples.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut powers: Vec<f64> = buf.iter().map(|z| z.norm_sqr() / n as f64).collect();
    powers.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        powers[n / 2]
    } else {
        0.5 * (powers[n / 2 - 1] + powers[n / 2])
    };
    Ok(median / std::f64::consts::LN_2)
}

/// One detected scatterer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RangeDetection {
    pub frame_index: usize,
    pub channel: usize,
    pub range_m: f64,
    pub omega: f64,
    pub amp_re: f64,
    pub amp_im: f64,
    /// Leave-one-out detection statistic, `20 log10`.
    pub statistic_db: f64,
}

/// Quantize each frame, extract sinusoids, and map them to ranges.
///
/// `sigma2` overrides the per-frame median-periodogram noise estimate.
/// Components near zero frequency (transmit leakage) are reported like any
/// other detection, not suppressed.
pub fn range_profile(
    frames: &[IqFrame],
    params: &RadarParams,
    scheme: &MeasurementScheme,
    sigma2: Option<f64>,
    config: &GnompConfig,
) -> Result<Vec<RangeDetection>> {
    params.validate()?;
    let mut detections = Vec::new();
    for frame in frames {
        let n = frame.samples.len();
        let obs = scheme.quantize(&frame.samples);
        let model = Model {
            scheme: scheme.clone(),
            basis: AtomBasis::Fourier { n },
            sigma2: match sigma2 {
                Some(s) => s,
                None => estimate_noise_variance(&frame.samples)?,
            },
        };
        let result = extract_spectrum(&model, &obs, config)?;
        for (i, comp) in result.components.iter().enumerate() {
            let others: Vec<SinusoidComponent> = result
                .components
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, c)| c.clone())
                .collect();
            let zeta = mean_signal(&model.basis, &others, None);
            let stat = rao_at(&model, &obs, &zeta, comp.omega);
            detections.push(RangeDetection {
                frame_index: frame.frame_index,
                channel: frame.channel,
                range_m: omega_to_range(comp.omega, params),
                omega: comp.omega,
                amp_re: comp.amp.re,
                amp_im: comp.amp.im,
                statistic_db: stat_to_db(stat),
            });
        }
    }
    Ok(detections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::atom;
    use crate::quantizer::{BitDepth, QuantizerSpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn test_params() -> RadarParams {
        RadarParams {
            carrier_hz: 77e9,
            slope_hz_per_s: 29.982e12,
            sweep_time_s: 60e-6,
            pri_s: 100e-6,
            bandwidth_hz: 1798.92e6,
            sample_rate_hz: 10e6,
            pulses_per_cpi: 128,
            samples_per_pulse: 256,
            receivers: 1,
        }
    }

    fn noise(rng: &mut impl Rng, n: usize, sigma2: f64) -> Vec<Complex64> {
        let s = (sigma2 / 2.0).sqrt();
        (0..n)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect()
    }

    #[test]
    fn frame_count_arithmetic() {
        let bytes = vec![0u8; 1024 * 4];
        let frames = decode_iq(&bytes, &IqFormat::int16(256)).unwrap();
        assert_eq!(frames.len(), 4);
        assert_eq!(frames[0].samples.len(), 256);
        assert_eq!(frames[3].frame_index, 3);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let bytes = vec![0u8; 1024 * 4 + 2];
        let mut fmt = IqFormat::int16(256);
        fmt.sample_width_bytes = 4;
        assert!(matches!(
            decode_iq(&bytes, &fmt),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn partial_trailing_frame_is_dropped() {
        let bytes = vec![0u8; (256 + 100) * 4];
        let frames = decode_iq(&bytes, &IqFormat::int16(256)).unwrap();
        assert_eq!(frames.len(), 1);
    }

    #[test]
    fn synthetic_capture_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fmt = IqFormat::int16(64);
        let frames: Vec<IqFrame> = (0..3)
            .map(|f| IqFrame {
                samples: (0..64)
                    .map(|_| {
                        Complex64::new(
                            rng.gen_range(-30000..30000) as f64,
                            rng.gen_range(-30000..30000) as f64,
                        )
                    })
                    .collect(),
                frame_index: f,
                channel: 0,
            })
            .collect();
        let bytes = encode_iq(&frames, &fmt).unwrap();
        let back = decode_iq(&bytes, &fmt).unwrap();
        assert_eq!(frames, back);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("capture.bin");
        let fmt = IqFormat::int16(32);
        let frames = vec![IqFrame {
            samples: (0..32).map(|i| Complex64::new(i as f64, -(i as f64))).collect(),
            frame_index: 0,
            channel: 0,
        }];
        std::fs::write(&path, encode_iq(&frames, &fmt).unwrap()).unwrap();
        assert_eq!(load_iq(&path, &fmt).unwrap(), frames);
    }

    #[test]
    fn noise_estimate_is_calibrated() {
        let sigma2 = 250.0;
        let n = 256;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut within = 0;
        let mut sum = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let est = estimate_noise_variance(&noise(&mut rng, n, sigma2)).unwrap();
            sum += est;
            if (est - sigma2).abs() <= 0.15 * sigma2 {
                within += 1;
            }
        }
        let mean = sum / trials as f64;
        assert!(
            (mean - sigma2).abs() < 0.05 * sigma2,
            "mean estimate {mean}"
        );
        assert!(within >= 850, "only {within}/1000 within 15%");
    }

    #[test]
    fn noise_estimate_ignores_strong_sinusoids() {
        let n = 256;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // On-grid tone: all its energy lands in one periodogram bin, which
        // the median skips over.
        let omega = 2.0 * PI * 28.0 / n as f64;
        let mut samples = noise(&mut rng, n, 250.0);
        for (s, a) in samples.iter_mut().zip(atom(omega, n)) {
            *s += a * 500.0;
        }
        let est = estimate_noise_variance(&samples).unwrap();
        assert!((est - 250.0).abs() < 0.3 * 250.0, "estimate {est}");
    }

    #[test]
    fn noise_estimate_scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples = noise(&mut rng, 128, 1.0);
        let scaled: Vec<Complex64> = samples.iter().map(|z| z * 3.0).collect();
        let a = estimate_noise_variance(&samples).unwrap();
        let b = estimate_noise_variance(&scaled).unwrap();
        assert_relative_eq!(b, 9.0 * a, max_relative = 1e-12);
    }

    #[test]
    fn range_map_is_linear_and_inverts() {
        let p = test_params();
        assert_eq!(omega_to_range(0.0, &p), 0.0);
        let r = omega_to_range(0.6, &p);
        let mut double_slope = p.clone();
        double_slope.slope_hz_per_s *= 2.0;
        assert_relative_eq!(omega_to_range(0.6, &double_slope), r / 2.0);
        assert_relative_eq!(range_to_omega(r, &p), 0.6, max_relative = 1e-12);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = test_params();
        p.slope_hz_per_s = -1.0;
        assert!(p.validate().is_err());
        let mut p = test_params();
        p.samples_per_pulse = 1_000_000;
        assert!(p.validate().is_err());
    }

    #[test]
    fn params_toml_round_trip() {
        let p = test_params();
        let text = toml::to_string(&p).unwrap();
        assert_eq!(RadarParams::from_toml(&text).unwrap(), p);
    }

    #[test]
    fn two_targets_recovered_within_a_range_bin() {
        let p = test_params();
        let n = p.samples_per_pulse;
        let sigma2 = 250.0;
        let ranges = [4.88, 3.05];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut samples = noise(&mut rng, n, sigma2);
        for &r in &ranges {
            let omega = range_to_omega(r, &p);
            let x = Complex64::from_polar(40.0, rng.gen::<f64>() * 2.0 * PI);
            for (s, a) in samples.iter_mut().zip(atom(omega, n)) {
                *s += a * x;
            }
        }
        let frame = IqFrame {
            samples,
            frame_index: 0,
            channel: 0,
        };
        let scheme = MeasurementScheme::Uniform(
            QuantizerSpec::new(BitDepth::Finite(2), 60.0).unwrap(),
        );
        let config = GnompConfig::new(0.01);
        let dets =
            range_profile(&[frame], &p, &scheme, Some(sigma2), &config).unwrap();
        let bin = p.range_resolution();
        for &r in &ranges {
            assert!(
                dets.iter().any(|d| (d.range_m - r).abs() <= bin),
                "no detection within one bin of {r} m; got {:?}",
                dets.iter().map(|d| d.range_m).collect::<Vec<_>>()
            );
        }
    }
}
