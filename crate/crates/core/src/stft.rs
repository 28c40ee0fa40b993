//! Short-time Fourier analysis and weighted overlap-add synthesis with a
//! square-root Hann window pair at 50% overlap.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::CVec;

/// Time-domain multichannel signal, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelWave {
    sample_rate: u32,
    samples: Vec<Vec<f64>>,
}

impl MultichannelWave {
    pub fn new(sample_rate: u32, samples: Vec<Vec<f64>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidParameter("wave has no channels".into()));
        }
        let len = samples[0].len();
        if let Some(bad) = samples.iter().position(|c| c.len() != len) {
            return Err(Error::Shape(format!(
                "channel {bad} has {} samples, channel 0 has {len}",
                samples[bad].len()
            )));
        }
        Ok(Self { sample_rate, samples })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.samples[m]
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    /// Sample-wise sum of several equally shaped waves.
    pub fn sum<'a>(waves: impl IntoIterator<Item = &'a MultichannelWave>) -> Result<Self> {
        let mut iter = waves.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InvalidParameter("no waves to sum".into()))?;
        let mut acc = first.clone();
        for w in iter {
            if w.channels() != acc.channels() || w.len() != acc.len() {
                return Err(Error::Shape("waves differ in shape".into()));
            }
            for (a, b) in acc.samples.iter_mut().zip(&w.samples) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
        }
        Ok(acc)
    }

    /// Mean over channels.
    pub fn downmix(&self) -> Self {
        let m = self.channels() as f64;
        let mono = (0..self.len())
            .map(|t| self.samples.iter().map(|c| c[t]).sum::<f64>() / m)
            .collect();
        Self {
            sample_rate: self.sample_rate,
            samples: vec![mono],
        }
    }
}

/// Complex STFT coefficients `x[m, i, j]` (channel, frequency bin, frame).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    channels: usize,
    freqs: usize,
    frames: usize,
    data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn zeros(channels: usize, freqs: usize, frames: usize) -> Self {
        Self {
            channels,
            freqs,
            frames,
            data: vec![Complex64::new(0.0, 0.0); channels * freqs * frames],
        }
    }

    /// Wraps coefficients stored channel-major, then frequency, then frame.
    pub fn from_values(channels: usize, freqs: usize, frames: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != channels * freqs * frames {
            return Err(Error::DimensionMismatch {
                expected: channels * freqs * frames,
                actual: data.len(),
            });
        }
        Ok(Self {
            channels,
            freqs,
            frames,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        freqs: usize,
        frames: usize,
        mut f: impl FnMut(usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut s = Self::zeros(channels, freqs, frames);
        for m in 0..channels {
            for i in 0..freqs {
                for j in 0..frames {
                    s.data[(m * freqs + i) * frames + j] = f(m, i, j);
                }
            }
        }
        s
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn freqs(&self) -> usize {
        self.freqs
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    fn idx(&self, m: usize, i: usize, j: usize) -> usize {
        (m * self.freqs + i) * self.frames + j
    }

    #[inline]
    pub fn get(&self, m: usize, i: usize, j: usize) -> Complex64 {
        self.data[self.idx(m, i, j)]
    }

    #[inline]
    pub fn set(&mut self, m: usize, i: usize, j: usize, v: Complex64) {
        let k = self.idx(m, i, j);
        self.data[k] = v;
    }

    /// Observation vector `x_ij` across channels.
    pub fn vector(&self, i: usize, j: usize) -> CVec {
        CVec::from_iterator(self.channels, (0..self.channels).map(|m| self.get(m, i, j)))
    }

    pub fn set_vector(&mut self, i: usize, j: usize, v: &CVec) {
        for m in 0..self.channels {
            self.set(m, i, j, v[m]);
        }
    }

    /// Row `x[m, i, ..]`.
    pub fn row(&self, m: usize, i: usize) -> &[Complex64] {
        let start = self.idx(m, i, 0);
        &self.data[start..start + self.frames]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.channels == other.channels && self.freqs == other.freqs && self.frames == other.frames
    }

    pub fn add_assign(&mut self, other: &Spectrogram) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape("spectrogram shapes differ".into()));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Sum of several equally shaped spectrograms.
    pub fn sum<'a>(specs: impl IntoIterator<Item = &'a Spectrogram>) -> Result<Self> {
        let mut iter = specs.into_iter();
        let mut acc = iter
            .next()
            .ok_or_else(|| Error::InvalidParameter("no spectrograms to sum".into()))?
            .clone();
        for s in iter {
            acc.add_assign(s)?;
        }
        Ok(acc)
    }
}

/// Boundary handling of the analysis frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    /// Half a frame of zeros at both ends (more at the end if needed), so
    /// every input sample is covered by two overlapping frames.
    #[default]
    Center,
    /// Frames start at sample 0 and stop at the last full frame. An 8 s,
    /// 16 kHz signal with 1024/512 framing gives 249 frames.
    None,
}

/// Analysis/synthesis engine for one frame configuration.
pub struct Stft {
    frame_len: usize,
    shift: usize,
    padding: Padding,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("frame_len", &self.frame_len)
            .field("shift", &self.shift)
            .field("padding", &self.padding)
            .finish()
    }
}

/// Periodic square-root Hann window, `sin(pi n / N)`.
pub fn sqrt_hann(frame_len: usize) -> Vec<f64> {
    (0..frame_len)
        .map(|n| (std::f64::consts::PI * n as f64 / frame_len as f64).sin())
        .collect()
}

impl Stft {
    pub fn new(frame_len: usize, shift: usize) -> Result<Self> {
        if frame_len < 2 || !frame_len.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "frame length {frame_len} is not a power of two"
            )));
        }
        if shift * 2 != frame_len {
            return Err(Error::InvalidParameter(format!(
                "shift {shift} must be half the frame length {frame_len}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            frame_len,
            shift,
            padding: Padding::Center,
            window: sqrt_hann(frame_len),
            forward: planner.plan_fft_forward(frame_len),
            inverse: planner.plan_fft_inverse(frame_len),
        })
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    pub fn freq_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        match self.padding {
            Padding::None => (len - self.frame_len) / self.shift + 1,
            Padding::Center => len.div_ceil(self.shift) + 1,
        }
    }

    fn front_pad(&self) -> usize {
        match self.padding {
            Padding::None => 0,
            Padding::Center => self.frame_len / 2,
        }
    }

    /// Default output length for synthesizing `frames` frames.
    pub fn samples_for(&self, frames: usize) -> usize {
        match self.padding {
            Padding::None => (frames - 1) * self.shift + self.frame_len,
            Padding::Center => (frames - 1) * self.shift,
        }
    }

    pub fn analyze(&self, wave: &MultichannelWave) -> Result<Spectrogram> {
        let len = wave.len();
        if len < self.frame_len {
            return Err(Error::InvalidParameter(format!(
                "signal of {len} samples is shorter than one frame ({})",
                self.frame_len
            )));
        }
        let frames = self.frames_for(len);
        let bins = self.freq_bins();
        let pad = self.front_pad();
        let mut spec = Spectrogram::zeros(wave.channels(), bins, frames);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.frame_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for m in 0..wave.channels() {
            let x = wave.channel(m);
            for j in 0..frames {
                let start = (j * self.shift) as isize - pad as isize;
                for (n, b) in buf.iter_mut().enumerate() {
                    let t = start + n as isize;
                    let s = if t >= 0 && (t as usize) < len {
                        x[t as usize]
                    } else {
                        0.0
                    };
                    *b = Complex64::new(s * self.window[n], 0.0);
                }
                self.forward.process_with_scratch(&mut buf, &mut scratch);
                for (i, v) in buf.iter().take(bins).enumerate() {
                    spec.set(m, i, j, *v);
                }
            }
        }
        Ok(spec)
    }

    pub fn synthesize(&self, spec: &Spectrogram, out_len: usize, sample_rate: u32) -> Result<MultichannelWave> {
        if spec.freqs() != self.freq_bins() {
            return Err(Error::Shape(format!(
                "spectrogram has {} bins, frame length {} needs {}",
                spec.freqs(),
                self.frame_len,
                self.freq_bins()
            )));
        }
        let frames = spec.frames();
        let pad = self.front_pad();
        let span = (frames.saturating_sub(1)) * self.shift + self.frame_len;
        let bins = self.freq_bins();
        let n = self.frame_len;
        let scale = 1.0 / n as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let mut out = Vec::with_capacity(spec.channels());
        for m in 0..spec.channels() {
            let mut acc = vec![0.0; span.max(pad + out_len)];
            for j in 0..frames {
                for k in 0..bins {
                    buf[k] = spec.get(m, k, j);
                }
                // Hermitian completion; DC and Nyquist imaginary parts are dropped
                buf[0].im = 0.0;
                buf[n / 2].im = 0.0;
                for k in 1..n / 2 {
                    buf[n - k] = buf[k].conj();
                }
                self.inverse.process_with_scratch(&mut buf, &mut scratch);
                let start = j * self.shift;
                for (t, v) in buf.iter().enumerate() {
                    acc[start + t] += v.re * scale * self.window[t];
                }
            }
            out.push(acc[pad..pad + out_len].to_vec());
        }
        MultichannelWave::new(sample_rate, out)
    }
}

/// Centered STFT with a square-root Hann window.
pub fn stft(wave: &MultichannelWave, frame_len: usize, shift: usize) -> Result<Spectrogram> {
    Stft::new(frame_len, shift)?.analyze(wave)
}

/// Inverse of [`stft`] by weighted overlap-add.
pub fn istft(
    spec: &Spectrogram,
    frame_len: usize,
    shift: usize,
    out_len: usize,
    sample_rate: u32,
) -> Result<MultichannelWave> {
    Stft::new(frame_len, shift)?.synthesize(spec, out_len, sample_rate)
}
