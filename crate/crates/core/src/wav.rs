//! Multichannel RIFF/WAV input and output (PCM16 and IEEE float32).

use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::stft::MultichannelWave;

/// Sample encoding used when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelWave> {
    let reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format("zero channels".into()));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Format(format!("unsupported codec {fmt:?} {bits}-bit")));
        }
    };
    if !samples.len().is_multiple_of(channels) {
        return Err(Error::Format(format!(
            "{} interleaved samples do not divide into {channels} equal channels",
            samples.len()
        )));
    }
    let len = samples.len() / channels;
    let mut chans = vec![Vec::with_capacity(len); channels];
    for frame in samples.chunks_exact(channels) {
        for (c, &s) in chans.iter_mut().zip(frame) {
            c.push(s);
        }
    }
    MultichannelWave::new(spec.sample_rate, chans)
}

pub fn write_wav(path: impl AsRef<Path>, wave: &MultichannelWave, encoding: WavEncoding) -> Result<()> {
    let channels =
        u16::try_from(wave.channels()).map_err(|_| Error::InvalidParameter("too many channels for WAV".into()))?;
    let spec = match encoding {
        WavEncoding::Float32 => WavSpec {
            channels,
            sample_rate: wave.sample_rate(),
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        },
        WavEncoding::Pcm16 => WavSpec {
            channels,
            sample_rate: wave.sample_rate(),
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        },
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    for t in 0..wave.len() {
        for m in 0..wave.channels() {
            let s = wave.channel(m)[t];
            match encoding {
                WavEncoding::Float32 => writer.write_sample(s as f32)?,
                WavEncoding::Pcm16 => {
                    let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(q)?
                }
            }
        }
    }
    writer.finalize()?;
    Ok(())
}
