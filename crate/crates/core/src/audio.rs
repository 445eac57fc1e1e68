//! Mono PCM waveforms: the genome substrate of the attack.
//!
//! Amplitudes are held as `f64` in `[-1.0, 1.0]`. 16-bit samples are scaled by
//! 32767 in both directions; the single out-of-range PCM value `-32768`
//! saturates to `-1.0` on load, and saving never overflows.

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use thiserror::Error;

/// Sample rate every attack runs at.
pub const ATTACK_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {0}")]
    Missing(String),
    #[error("unsupported encoding: {property} is {found}, expected {expected}")]
    Unsupported {
        property: &'static str,
        found: String,
        expected: &'static str,
    },
    #[error("clip must contain at least one sample")]
    Empty,
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("amplitude {value} at index {index} is outside [-1, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("malformed WAV data: {0}")]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A mono waveform with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip, rejecting empty input, a zero rate, or out-of-range amplitudes.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, a)| !(-1.0..=1.0).contains(*a))
        {
            return Err(AudioError::OutOfRange { index, value });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds a clip after saturating every amplitude into `[-1, 1]`.
    pub fn from_unclamped(mut samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        clamp_in_place(&mut samples);
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// 16-bit PCM values this clip is written as.
    pub fn to_pcm16(&self) -> Vec<i16> {
        self.samples.iter().map(|&a| quantize(a)).collect()
    }

    pub fn from_pcm16(pcm: &[i16], sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(pcm.iter().map(|&v| dequantize(v)).collect(), sample_rate)
    }

    /// Encodes the clip as a canonical 44-byte-header PCM WAV file in memory.
    pub fn to_wav_bytes(&self) -> Result<Vec<u8>, AudioError> {
        let mut cursor = Cursor::new(Vec::with_capacity(44 + 2 * self.len()));
        write_wav(self, &mut cursor)?;
        Ok(cursor.into_inner())
    }

    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Self, AudioError> {
        read_wav(Cursor::new(bytes))
    }
}

/// Quantization applied at export: `round(a * 32767)` clamped to the i16 range.
pub fn quantize(amplitude: f64) -> i16 {
    (amplitude * 32767.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn dequantize(value: i16) -> f64 {
    (value as f64 / 32767.0).max(-1.0)
}

/// Saturates each element into `[-1, 1]`.
pub fn clamp(samples: &[f64]) -> Vec<f64> {
    let mut out = samples.to_vec();
    clamp_in_place(&mut out);
    out
}

pub fn clamp_in_place(samples: &mut [f64]) {
    for s in samples.iter_mut() {
        *s = s.clamp(-1.0, 1.0);
    }
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => AudioError::Missing(path.display().to_string()),
        _ => AudioError::Io(e),
    })?;
    read_wav(std::io::BufReader::new(file))
}

pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let file = std::fs::File::create(path)?;
    write_wav(clip, std::io::BufWriter::new(file))
}

fn read_wav<R: Read>(reader: R) -> Result<AudioClip, AudioError> {
    let reader = hound::WavReader::new(reader)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(AudioError::Unsupported {
            property: "sample format",
            found: "float".into(),
            expected: "integer PCM",
        });
    }
    if spec.channels != 1 {
        return Err(AudioError::Unsupported {
            property: "channel count",
            found: spec.channels.to_string(),
            expected: "1",
        });
    }
    if spec.bits_per_sample != 16 {
        return Err(AudioError::Unsupported {
            property: "bit depth",
            found: spec.bits_per_sample.to_string(),
            expected: "16",
        });
    }
    let pcm = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()?;
    AudioClip::from_pcm16(&pcm, spec.sample_rate)
}

fn write_wav<W: Write + Seek>(clip: &AudioClip, writer: W) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::new(writer, spec)?;
    {
        let mut samples = w.get_i16_writer(clip.len() as u32);
        for &a in &clip.samples {
            samples.write_sample(quantize(a));
        }
        samples.flush()?;
    }
    w.finalize()?;
    Ok(())
}
