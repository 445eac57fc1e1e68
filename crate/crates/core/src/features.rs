//! Acoustic similarity signals: MFCC matrices, their Euclidean distance, and
//! waveform Pearson correlation.
//!
//! Pipeline: pre-emphasis, framing, Hann window, magnitude FFT, triangular
//! HTK mel filterbank, log, orthonormal DCT-II.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;

/// Floor applied before taking the log of filterbank energies.
const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("clip has {samples} samples, shorter than one {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("clip sample rate {found} Hz does not match configured {expected} Hz")]
    SampleRate { found: u32, expected: u32 },
    #[error("invalid MFCC configuration: {0}")]
    Config(&'static str),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape((usize, usize), (usize, usize)),
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("input has zero variance")]
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub num_filters: usize,
    pub num_coefficients: usize,
    pub fft_size: usize,
    pub pre_emphasis: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_ms: 25.0,
            hop_ms: 10.0,
            num_filters: 26,
            num_coefficients: 13,
            fft_size: 512,
            pre_emphasis: 0.97,
        }
    }
}

impl MfccConfig {
    pub fn window_samples(&self) -> usize {
        (self.sample_rate as f64 * self.window_ms / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    /// Frames produced for a clip of `num_samples`, or `None` when shorter than a window.
    pub fn frame_count(&self, num_samples: usize) -> Option<usize> {
        let w = self.window_samples();
        (num_samples >= w).then(|| (num_samples - w) / self.hop_samples() + 1)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.sample_rate == 0 {
            return Err(FeatureError::Config("sample_rate must be positive"));
        }
        if self.hop_samples() == 0 || self.window_samples() < self.hop_samples() {
            return Err(FeatureError::Config("need window_length >= hop_length > 0"));
        }
        if self.num_coefficients == 0 || self.num_coefficients > self.num_filters {
            return Err(FeatureError::Config("need 0 < num_coefficients <= num_filters"));
        }
        if self.fft_size < self.window_samples() {
            return Err(FeatureError::Config("fft_size must cover one window"));
        }
        Ok(())
    }
}

/// Frame-major cepstral coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    data: Vec<f64>,
    frame_count: usize,
    coeff_count: usize,
}

impl MfccMatrix {
    pub fn from_frames(frames: &[Vec<f64>]) -> Result<Self, FeatureError> {
        let coeff_count = frames.first().map_or(0, Vec::len);
        if let Some(bad) = frames.iter().find(|f| f.len() != coeff_count) {
            return Err(FeatureError::Length(coeff_count, bad.len()));
        }
        Ok(Self {
            data: frames.concat(),
            frame_count: frames.len(),
            coeff_count,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn coeff_count(&self) -> usize {
        self.coeff_count
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.coeff_count..(i + 1) * self.coeff_count]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.coeff_count.max(1))
    }

    /// All coefficients, frame-major.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Reusable MFCC front-end with precomputed window, filterbank, and FFT plan.
pub struct MfccExtractor {
    cfg: MfccConfig,
    window: Vec<f64>,
    /// `num_filters` rows of `fft_size / 2 + 1` weights.
    filterbank: Vec<Vec<f64>>,
    /// `num_coefficients` rows of `num_filters` weights.
    dct: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor").field("cfg", &self.cfg).finish()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

fn mel_filterbank(cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let bins = cfg.fft_size / 2 + 1;
    let nyquist = cfg.sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges_hz: Vec<f64> = (0..cfg.num_filters + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (cfg.num_filters + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * cfg.sample_rate as f64 / cfg.fft_size as f64;
    (0..cfg.num_filters)
        .map(|m| {
            let (lo, mid, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = bin_hz(k);
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

fn dct_matrix(n_in: usize, n_out: usize) -> Vec<Vec<f64>> {
    let n = n_in as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..n_in)
                .map(|i| scale * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .collect()
        })
        .collect()
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig) -> Result<Self, FeatureError> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            window: hann(cfg.window_samples()),
            filterbank: mel_filterbank(&cfg),
            dct: dct_matrix(cfg.num_filters, cfg.num_coefficients),
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn compute(&self, clip: &AudioClip) -> Result<MfccMatrix, FeatureError> {
        if clip.sample_rate() != self.cfg.sample_rate {
            return Err(FeatureError::SampleRate {
                found: clip.sample_rate(),
                expected: self.cfg.sample_rate,
            });
        }
        self.compute_samples(clip.samples())
    }

    /// Computes MFCCs of raw samples assumed to be at the configured rate.
    pub fn compute_samples(&self, samples: &[f64]) -> Result<MfccMatrix, FeatureError> {
        let window = self.cfg.window_samples();
        let hop = self.cfg.hop_samples();
        let frame_count = self
            .cfg
            .frame_count(samples.len())
            .ok_or(FeatureError::TooShort {
                samples: samples.len(),
                window,
            })?;
        let alpha = self.cfg.pre_emphasis;
        let emphasized: Vec<f64> = std::iter::once(samples[0])
            .chain(samples.windows(2).map(|w| w[1] - alpha * w[0]))
            .collect();

        let n_fft = self.cfg.fft_size;
        let bins = n_fft / 2 + 1;
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut magnitude = vec![0.0; bins];
        let mut log_energy = vec![0.0; self.cfg.num_filters];
        let mut data = Vec::with_capacity(frame_count * self.cfg.num_coefficients);

        for f in 0..frame_count {
            let frame = &emphasized[f * hop..f * hop + window];
            for (slot, (x, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *slot = Complex::new(x * w, 0.0);
            }
            buf[window..].fill(Complex::new(0.0, 0.0));
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in magnitude.iter_mut().zip(&buf[..bins]) {
                *m = c.norm();
            }
            for (e, filter) in log_energy.iter_mut().zip(&self.filterbank) {
                let energy: f64 = filter.iter().zip(&magnitude).map(|(w, m)| w * m).sum();
                *e = energy.max(LOG_FLOOR).ln();
            }
            data.extend(
                self.dct
                    .iter()
                    .map(|row| row.iter().zip(&log_energy).map(|(a, b)| a * b).sum::<f64>()),
            );
        }
        Ok(MfccMatrix {
            data,
            frame_count,
            coeff_count: self.cfg.num_coefficients,
        })
    }
}

pub fn compute_mfcc(clip: &AudioClip, cfg: &MfccConfig) -> Result<MfccMatrix, FeatureError> {
    MfccExtractor::new(cfg.clone())?.compute(clip)
}

/// Euclidean (Frobenius) distance between two same-shape MFCC matrices.
pub fn mfcc_distance(a: &MfccMatrix, b: &MfccMatrix) -> Result<f64, FeatureError> {
    let (sa, sb) = ((a.frame_count, a.coeff_count), (b.frame_count, b.coeff_count));
    if sa != sb {
        return Err(FeatureError::Shape(sa, sb));
    }
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Pearson correlation of two equal-length waveforms.
pub fn correlation_coefficient(a: &AudioClip, b: &AudioClip) -> Result<f64, FeatureError> {
    pearson(a.samples(), b.samples())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, FeatureError> {
    if a.len() != b.len() {
        return Err(FeatureError::Length(a.len(), b.len()));
    }
    let constant = |s: &[f64]| s.iter().all(|x| *x == s[0]);
    if a.is_empty() || constant(a) || constant(b) {
        return Err(FeatureError::ZeroVariance);
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(FeatureError::ZeroVariance);
    }
    Ok((cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
}
