//! Command line front end: Monte Carlo runs, the fixed demo instance,
//! CRB sweeps, detection spectra, sinusoid extraction, and radar range
//! profiles.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use qlsed_core::experiments::{write_csv, write_trace_log};
use qlsed_core::gnomp::{
    extract_spectrum, extract_spectrum_sigma_unknown, GnompConfig,
};
use qlsed_core::likelihood::mean_signal;
use qlsed_core::quantizer::design_full_scale;
use qlsed_core::{
    crb_general, rao_at, rao_grid, run_compressive_instance, run_demo, run_experiment, snr_loss,
    stat_to_db, threshold_unknown_freq, AtomBasis, BitDepth, ExperimentSpec, IqFormat,
    MeasurementScheme, Model, QuantizedObservation, QuantizerSpec, RadarParams,
    SinusoidComponent,
};

#[derive(Parser)]
#[command(
    name = "qlsed",
    version,
    about = "Line spectral estimation and detection from few-bit samples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment described by a TOML spec.
    Run {
        /// Experiment spec (TOML, fields of ExperimentSpec).
        spec: PathBuf,
        /// Output directory for aggregate.csv, trials.csv, and trace/.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        threads: Option<usize>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Walk through the fixed two-sinusoid instance at 1 and 2 bits.
    Demo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional directory for trace logs and component tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the Cramer-Rao bound and SNR loss of a single sinusoid.
    Crb {
        #[arg(long, default_value_t = 256)]
        n: usize,
        /// Bit depths, e.g. `1,2,3,inf`.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,inf")]
        bits: Vec<BitDepth>,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long, default_value_t = 10.0)]
        snr_min: f64,
        #[arg(long, default_value_t = 30.0)]
        snr_max: f64,
        #[arg(long, default_value_t = 1.0)]
        snr_step: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        /// Full-scale override; the design rule applies when absent.
        #[arg(long)]
        gamma: Option<f64>,
        /// Output CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the detection statistic spectrum of an observation file.
    Rao {
        /// Observation JSON (scheme, sigma2, observation).
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        oversample: usize,
        /// Output CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract sinusoids from an observation file.
    Gnomp {
        /// Observation JSON (scheme, sigma2, observation).
        input: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        pfa: f64,
        #[arg(long, default_value_t = 4)]
        oversample: usize,
        #[arg(long, default_value_t = 3)]
        cyclic: usize,
        /// Estimate the noise variance instead of trusting the file.
        #[arg(long)]
        sigma_unknown: bool,
        /// Components CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional trace log path.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the fixed random-linear-measurement instances.
    Compressive {
        #[arg(long, value_delimiter = ',', default_value = "200,100")]
        m: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Detect ranges in a dechirped FMCW capture.
    Radar {
        /// Capture file of interleaved I/Q samples.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Radar parameters (TOML, fields of RadarParams).
        #[arg(long)]
        params: PathBuf,
        /// Bit depth of the software quantizer (`inf` to skip quantization).
        #[arg(long, default_value = "2")]
        bits: BitDepth,
        /// Quantizer full scale.
        #[arg(long, default_value_t = 60.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.01)]
        pfa: f64,
        /// Noise variance; estimated per frame from the raw samples when
        /// absent.
        #[arg(long)]
        sigma2: Option<f64>,
        /// Bytes per real sample (2 = int16, 4 = f32).
        #[arg(long, default_value_t = 2)]
        width_bytes: usize,
        /// Samples per frame; defaults to the params' samples per pulse.
        #[arg(long)]
        frame_len: Option<usize>,
        /// Receiver channels; defaults to the params' receiver count.
        #[arg(long)]
        channels: Option<usize>,
        /// Multiplier applied to raw samples before processing.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Output CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// On-disk bundle consumed by `rao` and `gnomp`: how the samples were
/// measured, the noise variance, and the censored samples themselves.
#[derive(Serialize, Deserialize)]
struct ObservationFile {
    scheme: MeasurementScheme,
    sigma2: f64,
    observation: QuantizedObservation,
}

fn read_observation(path: &Path) -> Result<(Model, QuantizedObservation)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let file: ObservationFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let n = file.observation.len();
    let model = Model {
        scheme: file.scheme,
        basis: AtomBasis::Fourier { n },
        sigma2: file.sigma2,
    };
    Ok((model, file.observation))
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        ),
        None => Box::new(std::io::stdout()),
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            spec,
            out,
            threads,
            seed,
        } => cmd_run(&spec, &out, threads, seed),
        Command::Demo { seed, out } => cmd_demo(seed, out.as_deref()),
        Command::Crb {
            n,
            bits,
            omega,
            snr_min,
            snr_max,
            snr_step,
            sigma2,
            gamma,
            out,
        } => cmd_crb(n, &bits, omega, snr_min, snr_max, snr_step, sigma2, gamma, &out),
        Command::Rao {
            input,
            oversample,
            out,
        } => cmd_rao(&input, oversample, &out),
        Command::Gnomp {
            input,
            pfa,
            oversample,
            cyclic,
            sigma_unknown,
            out,
            trace,
        } => cmd_gnomp(&input, pfa, oversample, cyclic, sigma_unknown, &out, &trace),
        Command::Compressive { m, seed } => cmd_compressive(&m, seed),
        Command::Radar {
            input,
            params,
            bits,
            gamma,
            pfa,
            sigma2,
            width_bytes,
            frame_len,
            channels,
            scale,
            out,
        } => cmd_radar(
            &input, &params, bits, gamma, pfa, sigma2, width_bytes, frame_len, channels, scale,
            &out,
        ),
    }
}

fn cmd_run(
    spec_path: &Path,
    out: &Path,
    threads: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let mut spec: ExperimentSpec =
        toml::from_str(&text).with_context(|| format!("parsing {}", spec_path.display()))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let output = run_experiment(&spec)?;
    fs::create_dir_all(out)?;
    write_csv(&out.join("aggregate.csv"), &output.aggregate)?;
    write_csv(&out.join("trials.csv"), &output.trials)?;
    let trace_dir = out.join("trace");
    fs::create_dir_all(&trace_dir)?;
    for (label, result) in &output.representative {
        write_trace_log(&trace_dir.join(format!("{label}.log")), result)?;
    }
    println!(
        "{} aggregate rows, {} trial rows written to {}",
        output.aggregate.len(),
        output.trials.len(),
        out.display()
    );
    Ok(())
}

fn cmd_demo(seed: u64, out: Option<&Path>) -> Result<()> {
    let runs = run_demo(seed)?;
    for run in &runs {
        println!("--- {} bit ---", run.bits);
        println!("threshold: {:.2} dB", stat_to_db(run.tau_th));
        for (i, s) in run.detect_stats.iter().enumerate() {
            let verdict = if *s > run.tau_th { "detect" } else { "stop" };
            println!("iteration {}: {:.2} dB ({verdict})", i + 1, stat_to_db(*s));
        }
        for (i, c) in run.result.components.iter().enumerate() {
            println!(
                "component {}: omega {:.4}, amp {:.4}{:+.4}i",
                i + 1,
                c.omega,
                c.amp.re,
                c.amp.im
            );
        }
        println!(
            "snr loss (true params):      {}",
            run.loss_true
                .iter()
                .map(|l| format!("{l:.2} dB"))
                .collect::<Vec<_>>()
                .join(", ")
        );
        println!(
            "snr loss (estimated params): {}",
            run.loss_estimated
                .iter()
                .map(|l| format!("{l:.2} dB"))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        for run in &runs {
            write_trace_log(&dir.join(format!("demo_{}bit.log", run.bits)), &run.result)?;
            let mut f = fs::File::create(dir.join(format!("demo_{}bit.csv", run.bits)))?;
            writeln!(f, "omega,amp_re,amp_im")?;
            for c in &run.result.components {
                writeln!(f, "{},{},{}", c.omega, c.amp.re, c.amp.im)?;
            }
        }
        println!("traces written to {}", dir.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_crb(
    n: usize,
    bits: &[BitDepth],
    omega: f64,
    snr_min: f64,
    snr_max: f64,
    snr_step: f64,
    sigma2: f64,
    gamma: Option<f64>,
    out: &Option<PathBuf>,
) -> Result<()> {
    anyhow::ensure!(snr_step > 0.0, "snr_step must be positive");
    let mut w = open_out(out)?;
    writeln!(w, "bits,snr_db,crb_freq,crb_amp_trace,snr_loss_db")?;
    for &bd in bits {
        let mut snr = snr_min;
        while snr <= snr_max + 1e-9 {
            let mag = sigma2.sqrt() * 10f64.powf((snr - 10.0 * (n as f64).log10()) / 20.0);
            let scheme = match bd {
                BitDepth::Infinite => MeasurementScheme::Unquantized,
                bd => {
                    let g = match gamma {
                        Some(g) => g,
                        None => design_full_scale(&[mag], sigma2.sqrt())?,
                    };
                    MeasurementScheme::Uniform(QuantizerSpec::new(bd, g)?)
                }
            };
            let model = Model {
                scheme,
                basis: AtomBasis::Fourier { n },
                sigma2,
            };
            let comp = SinusoidComponent {
                omega,
                amp: Complex64::from_polar(mag, std::f64::consts::FRAC_PI_4),
            };
            let crb = crb_general(&model, &[comp.clone()], None)?;
            let zeta = vec![Complex64::new(0.0, 0.0); n];
            let loss = snr_loss(&model, omega, &zeta);
            writeln!(
                w,
                "{bd},{snr},{},{},{loss}",
                crb[(0, 0)],
                crb[(1, 1)] + crb[(2, 2)]
            )?;
            snr += snr_step;
        }
    }
    Ok(())
}

fn cmd_rao(input: &Path, oversample: usize, out: &Option<PathBuf>) -> Result<()> {
    let (model, obs) = read_observation(input)?;
    let zeta = vec![Complex64::new(0.0, 0.0); obs.len()];
    let grid = rao_grid(&model, &obs, &zeta, oversample.max(1));
    let mut w = open_out(out)?;
    writeln!(w, "omega,statistic_db")?;
    for (omega, stat) in grid.omegas.iter().zip(&grid.stats) {
        writeln!(w, "{omega},{}", stat_to_db(*stat))?;
    }
    Ok(())
}

fn cmd_gnomp(
    input: &Path,
    pfa: f64,
    oversample: usize,
    cyclic: usize,
    sigma_unknown: bool,
    out: &Option<PathBuf>,
    trace: &Option<PathBuf>,
) -> Result<()> {
    let (model, obs) = read_observation(input)?;
    let mut config = GnompConfig::new(pfa);
    config.oversample = oversample;
    config.cyclic_rounds = cyclic;
    let result = if sigma_unknown {
        extract_spectrum_sigma_unknown(&model, &obs, &config)?
    } else {
        extract_spectrum(&model, &obs, &config)?
    };
    let mut w = open_out(out)?;
    writeln!(w, "omega,amp_re,amp_im,statistic_db")?;
    let mut scored = model.clone();
    scored.sigma2 = result.sigma2;
    for (i, c) in result.components.iter().enumerate() {
        let others: Vec<SinusoidComponent> = result
            .components
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, c)| c.clone())
            .collect();
        let zeta = mean_signal(&scored.basis, &others, None);
        let stat = rao_at(&scored, &obs, &zeta, c.omega);
        writeln!(
            w,
            "{},{},{},{}",
            c.omega,
            c.amp.re,
            c.amp.im,
            stat_to_db(stat)
        )?;
    }
    if let Some(p) = trace {
        write_trace_log(p, &result)?;
    }
    eprintln!(
        "{} components, stop: {:?}, threshold {:.2} dB",
        result.components.len(),
        result.stop,
        stat_to_db(threshold_unknown_freq(pfa, model.basis.signal_len()))
    );
    Ok(())
}

fn cmd_compressive(ms: &[usize], seed: u64) -> Result<()> {
    for &m in ms {
        let out = run_compressive_instance(m, seed)?;
        let mut est: Vec<f64> = out.result.components.iter().map(|c| c.omega).collect();
        est.sort_by(f64::total_cmp);
        println!(
            "m = {m}: {} components, omegas {:?} (truth {:?})",
            est.len(),
            est,
            out.omegas
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_radar(
    input: &Path,
    params_path: &Path,
    bits: BitDepth,
    gamma: f64,
    pfa: f64,
    sigma2: Option<f64>,
    width_bytes: usize,
    frame_len: Option<usize>,
    channels: Option<usize>,
    scale: f64,
    out: &Option<PathBuf>,
) -> Result<()> {
    let text = fs::read_to_string(params_path)
        .with_context(|| format!("reading {}", params_path.display()))?;
    let params = RadarParams::from_toml(&text)?;
    let format = IqFormat {
        sample_width_bytes: width_bytes,
        frame_len: frame_len.unwrap_or(params.samples_per_pulse),
        channels: channels.unwrap_or(params.receivers),
        scale,
    };
    let frames = qlsed_core::load_iq(input, &format)?;
    let scheme = match bits {
        BitDepth::Infinite => MeasurementScheme::Unquantized,
        bd => MeasurementScheme::Uniform(QuantizerSpec::new(bd, gamma)?),
    };
    let config = GnompConfig::new(pfa);
    let detections = qlsed_core::range_profile(&frames, &params, &scheme, sigma2, &config)?;
    let mut w = open_out(out)?;
    writeln!(
        w,
        "frame,channel,range_m,omega,amp_re,amp_im,statistic_db"
    )?;
    for d in &detections {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            d.frame_index, d.channel, d.range_m, d.omega, d.amp_re, d.amp_im, d.statistic_db
        )?;
    }
    Ok(())
}
