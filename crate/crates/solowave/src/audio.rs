//! WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use solowave_core::Waveform;

use crate::{Error, Result};

/// Sample encoding of written files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Encoding {
    #[default]
    Pcm16,
    Float32,
}

/// Reads a PCM16 or float32 WAV file, averaging channels to mono.
pub fn load_waveform(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav { path: path.into(), source: other },
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::Unsupported { path: path.into(), detail: format!("{bits}-bit {fmt:?}") });
        }
    }
    .map_err(|e| Error::Wav { path: path.into(), source: e })?;
    if interleaved.is_empty() || channels == 0 {
        return Err(Error::EmptyAudio(path.into()));
    }
    let samples: Vec<f32> = interleaved
        .chunks_exact(channels)
        .map(|frame| (frame.iter().map(|&v| v as f64).sum::<f64>() / channels as f64) as f32)
        .collect();
    Ok(Waveform::new(samples, spec.sample_rate)?)
}

/// Writes a mono WAV file. PCM16 clips to the representable range.
pub fn save_waveform(w: &Waveform, path: impl AsRef<Path>, encoding: Encoding) -> Result<()> {
    let path = path.as_ref();
    w.validate()?;
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav { path: path.into(), source: other },
    };
    let (bits, fmt) = match encoding {
        Encoding::Pcm16 => (16, SampleFormat::Int),
        Encoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec { channels: 1, sample_rate: w.rate, bits_per_sample: bits, sample_format: fmt };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &w.samples {
        match encoding {
            Encoding::Pcm16 => writer.write_sample(pcm16(s)).map_err(wav_err)?,
            Encoding::Float32 => writer.write_sample(s).map_err(wav_err)?,
        }
    }
    writer.finalize().map_err(wav_err)
}

fn pcm16(s: f32) -> i16 {
    (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}
