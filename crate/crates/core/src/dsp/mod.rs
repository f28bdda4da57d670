//! Time-frequency analysis/synthesis and feature extraction.
//!
//! Geometry follows the training setup throughout: 1024-sample frames, hop
//! 512, periodic Hann, 513 retained bins. All functions are pure and
//! deterministic; identical inputs give bitwise identical outputs.

pub mod fft;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Default analysis frame length in samples.
pub const FRAME_SIZE: usize = 1024;
/// Default hop (50% overlap, exact COLA with the periodic Hann).
pub const HOP: usize = 512;
/// Log floor shared by log-magnitude features, MFCC and mask denominators.
pub const LOG_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub enum DspError {
    BadWindowLength(usize),
    BadHop { hop: usize, frame_size: usize },
    BadFrameSize(usize),
    EmptyWaveform,
    NonFiniteSample(usize),
    BadSampleRate,
    GeometryMismatch(String),
    FilterbankTooFine { n_mels: usize, first_empty: usize },
    BadFeatureRequest(String),
}

impl core::fmt::Display for DspError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DspError::BadWindowLength(n) => {
                write!(f, "window length must be even and >= 2, got {n}")
            }
            DspError::BadHop { hop, frame_size } => write!(
                f,
                "hop must satisfy 0 < hop <= frame_size and divide it, got hop {hop} frame {frame_size}"
            ),
            DspError::BadFrameSize(n) => {
                write!(f, "frame size must be an even power of two >= 2, got {n}")
            }
            DspError::EmptyWaveform => write!(f, "waveform has no samples"),
            DspError::NonFiniteSample(i) => write!(f, "non-finite sample at index {i}"),
            DspError::BadSampleRate => write!(f, "sample rate must be positive"),
            DspError::GeometryMismatch(m) => write!(f, "geometry mismatch: {m}"),
            DspError::FilterbankTooFine { n_mels, first_empty } => write!(
                f,
                "{n_mels} mel filters exceed spectral resolution (filter {first_empty} empty)"
            ),
            DspError::BadFeatureRequest(m) => write!(f, "bad feature request: {m}"),
        }
    }
}

/// Mono time-domain audio.
///
/// Samples are nominally in [-1, 1]; intermediate products (reverberant sums,
/// enhanced output) may exceed that and are clamped only at the PCM boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::BadSampleRate);
        }
        if samples.is_empty() {
            return Err(DspError::EmptyWaveform);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::NonFiniteSample(i));
        }
        Ok(Waveform { samples, sample_rate })
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

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Shared frame geometry for TF representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TfGeometry {
    pub frame_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

/// T x F complex spectrogram, frame-major, non-negative bins only
/// (F = frame_size/2 + 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    re: Vec<f64>,
    im: Vec<f64>,
    frames: usize,
    bins: usize,
    pub geometry: TfGeometry,
}

impl ComplexSpectrogram {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn magnitudes(&self) -> MagnitudeSpectrogram {
        let values = self
            .re
            .iter()
            .zip(self.im.iter())
            .map(|(r, i)| libm::sqrt(r * r + i * i))
            .collect();
        MagnitudeSpectrogram {
            values,
            frames: self.frames,
            bins: self.bins,
            geometry: self.geometry,
        }
    }

    /// Replace magnitudes while keeping this spectrogram's phase. Bins with
    /// (near) zero magnitude get zero phase.
    pub fn with_magnitudes(&self, mags: &MagnitudeSpectrogram) -> Result<Self, DspError> {
        if mags.frames != self.frames || mags.bins != self.bins {
            return Err(DspError::GeometryMismatch(format!(
                "magnitudes {}x{} vs spectrogram {}x{}",
                mags.frames, mags.bins, self.frames, self.bins
            )));
        }
        let mut re = vec![0.0; self.re.len()];
        let mut im = vec![0.0; self.im.len()];
        for idx in 0..self.re.len() {
            let m_old = libm::sqrt(self.re[idx] * self.re[idx] + self.im[idx] * self.im[idx]);
            let m_new = mags.values[idx];
            if m_old > 1e-300 {
                let s = m_new / m_old;
                re[idx] = self.re[idx] * s;
                im[idx] = self.im[idx] * s;
            } else {
                re[idx] = m_new;
            }
        }
        Ok(ComplexSpectrogram {
            re,
            im,
            frames: self.frames,
            bins: self.bins,
            geometry: self.geometry,
        })
    }
}

/// T x F non-negative magnitude matrix with the same geometry metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    values: Vec<f64>,
    frames: usize,
    bins: usize,
    pub geometry: TfGeometry,
}

impl MagnitudeSpectrogram {
    pub fn from_values(
        values: Vec<f64>,
        frames: usize,
        bins: usize,
        geometry: TfGeometry,
    ) -> Result<Self, DspError> {
        if values.len() != frames * bins {
            return Err(DspError::GeometryMismatch(format!(
                "{} values for {}x{}",
                values.len(),
                frames,
                bins
            )));
        }
        Ok(MagnitudeSpectrogram { values, frames, bins, geometry })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Mfcc,
    LogMagnitude,
}

/// T x D feature matrix, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    frames: usize,
    dim: usize,
    pub kind: FeatureKind,
}

impl FeatureMatrix {
    /// Assemble from raw frame-major values. Panics if the sizes disagree;
    /// callers pass dimensions they just computed.
    pub fn from_parts(values: Vec<f64>, frames: usize, dim: usize, kind: FeatureKind) -> Self {
        assert_eq!(values.len(), frames * dim, "feature matrix size");
        FeatureMatrix { values, frames, dim, kind }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }
}

/// Periodic (DFT-even) Hann window; exact COLA at hop = length/2.
pub fn hann_window(length: usize) -> Result<Vec<f64>, DspError> {
    if length < 2 || length % 2 != 0 {
        return Err(DspError::BadWindowLength(length));
    }
    Ok((0..length)
        .map(|n| 0.5 * (1.0 - libm::cos(2.0 * core::f64::consts::PI * n as f64 / length as f64)))
        .collect())
}

fn frame_count(len: usize, frame_size: usize, hop: usize) -> usize {
    if len <= frame_size {
        1
    } else {
        (len - frame_size).div_ceil(hop) + 1
    }
}

/// Windowed short-time DFT keeping the non-negative frequency half.
/// The tail is zero-padded so every sample is covered.
pub fn stft(wave: &Waveform, frame_size: usize, hop: usize) -> Result<ComplexSpectrogram, DspError> {
    if frame_size < 2 || !fft::is_power_of_two(frame_size) {
        return Err(DspError::BadFrameSize(frame_size));
    }
    if hop == 0 || hop > frame_size || frame_size % hop != 0 {
        return Err(DspError::BadHop { hop, frame_size });
    }
    let window = hann_window(frame_size)?;
    let frames = frame_count(wave.len(), frame_size, hop);
    let bins = frame_size / 2 + 1;
    let mut re = vec![0.0; frames * bins];
    let mut im = vec![0.0; frames * bins];
    let mut buf_re = vec![0.0; frame_size];
    let mut buf_im = vec![0.0; frame_size];
    let samples = wave.samples();
    for t in 0..frames {
        let start = t * hop;
        for n in 0..frame_size {
            let s = if start + n < samples.len() { samples[start + n] } else { 0.0 };
            buf_re[n] = s * window[n];
            buf_im[n] = 0.0;
        }
        fft::fft_in_place(&mut buf_re, &mut buf_im, false);
        re[t * bins..(t + 1) * bins].copy_from_slice(&buf_re[..bins]);
        im[t * bins..(t + 1) * bins].copy_from_slice(&buf_im[..bins]);
    }
    Ok(ComplexSpectrogram {
        re,
        im,
        frames,
        bins,
        geometry: TfGeometry { frame_size, hop, sample_rate: wave.sample_rate() },
    })
}

/// Weighted overlap-add inverse. Reconstruction is exact wherever the
/// squared-window envelope is supported; callers trim to the original length.
pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform, DspError> {
    let frame_size = spec.geometry.frame_size;
    let hop = spec.geometry.hop;
    if spec.bins != frame_size / 2 + 1 {
        return Err(DspError::GeometryMismatch(format!(
            "{} bins inconsistent with frame size {} (expected {})",
            spec.bins,
            frame_size,
            frame_size / 2 + 1
        )));
    }
    let window = hann_window(frame_size)?;
    let out_len = (spec.frames - 1) * hop + frame_size;
    let mut acc = vec![0.0; out_len];
    let mut env = vec![0.0; out_len];
    let mut buf_re = vec![0.0; frame_size];
    let mut buf_im = vec![0.0; frame_size];
    for t in 0..spec.frames {
        let row_re = &spec.re[t * spec.bins..(t + 1) * spec.bins];
        let row_im = &spec.im[t * spec.bins..(t + 1) * spec.bins];
        buf_re[..spec.bins].copy_from_slice(row_re);
        buf_im[..spec.bins].copy_from_slice(row_im);
        // Conjugate symmetry for the negative-frequency half.
        for k in 1..frame_size / 2 {
            buf_re[frame_size - k] = row_re[k];
            buf_im[frame_size - k] = -row_im[k];
        }
        fft::fft_in_place(&mut buf_re, &mut buf_im, true);
        let start = t * hop;
        for n in 0..frame_size {
            acc[start + n] += buf_re[n] * window[n];
            env[start + n] += window[n] * window[n];
        }
    }
    for (a, e) in acc.iter_mut().zip(env.iter()) {
        if *e > 1e-12 {
            *a /= *e;
        }
    }
    Waveform::new(acc, spec.geometry.sample_rate)
}

/// Mel scale: m = 2595 log10(1 + f/700).
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * libm::log10(1.0 + f / 700.0)
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (libm::pow(10.0, m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over 0..sample_rate/2, returned as an
/// n_mels x (n_fft/2 + 1) row-major matrix of non-negative weights.
pub fn mel_filterbank(n_mels: usize, sample_rate: u32, n_fft: usize) -> Result<Vec<f64>, DspError> {
    if n_mels == 0 {
        return Err(DspError::BadFeatureRequest("n_mels must be >= 1".into()));
    }
    if n_fft < 2 || n_fft % 2 != 0 {
        return Err(DspError::BadFrameSize(n_fft));
    }
    if sample_rate == 0 {
        return Err(DspError::BadSampleRate);
    }
    let bins = n_fft / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    // n_mels + 2 edge points, uniformly spaced on the mel axis.
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut weights = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut any = false;
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let w = if f > lo && f < hi {
                if f <= center {
                    (f - lo) / (center - lo)
                } else {
                    (hi - f) / (hi - center)
                }
            } else {
                0.0
            };
            if w > 0.0 {
                any = true;
            }
            weights[m * bins + k] = w;
        }
        if !any {
            return Err(DspError::FilterbankTooFine { n_mels, first_empty: m });
        }
    }
    Ok(weights)
}

/// DCT-II matrix with orthonormal scaling, n_out x n_in row-major.
pub fn dct_ii_matrix(n_out: usize, n_in: usize) -> Vec<f64> {
    let mut m = vec![0.0; n_out * n_in];
    for j in 0..n_out {
        let scale = if j == 0 {
            libm::sqrt(1.0 / n_in as f64)
        } else {
            libm::sqrt(2.0 / n_in as f64)
        };
        for i in 0..n_in {
            m[j * n_in + i] = scale
                * libm::cos(core::f64::consts::PI * j as f64 * (2 * i + 1) as f64
                    / (2 * n_in) as f64);
        }
    }
    m
}

/// MFCCs from a magnitude spectrogram: per frame, mean-normalized mel
/// energies of the power spectrum, log with floor, then orthonormal DCT-II
/// truncated to `n_mfcc` coefficients.
pub fn mfcc(
    mag: &MagnitudeSpectrogram,
    n_mels: usize,
    n_mfcc: usize,
    eps: f64,
) -> Result<FeatureMatrix, DspError> {
    if n_mfcc == 0 || n_mfcc > n_mels {
        return Err(DspError::BadFeatureRequest(format!(
            "need 1 <= n_mfcc <= n_mels, got n_mfcc {n_mfcc} n_mels {n_mels}"
        )));
    }
    let fb = mel_filterbank(n_mels, mag.geometry.sample_rate, mag.geometry.frame_size)?;
    let bins = mag.bins;
    // Normalizing by each filter's weight sum makes a flat power spectrum map
    // to a flat mel vector, so only DCT coefficient 0 survives.
    let row_sums: Vec<f64> = (0..n_mels)
        .map(|m| fb[m * bins..(m + 1) * bins].iter().sum())
        .collect();
    let dct = dct_ii_matrix(n_mfcc, n_mels);
    let mut values = vec![0.0; mag.frames * n_mfcc];
    let mut mel_log = vec![0.0; n_mels];
    for t in 0..mag.frames {
        let frame = mag.frame(t);
        for m in 0..n_mels {
            let row = &fb[m * bins..(m + 1) * bins];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(frame.iter()) {
                acc += w * v * v;
            }
            mel_log[m] = libm::log(acc / row_sums[m] + eps);
        }
        let out = &mut values[t * n_mfcc..(t + 1) * n_mfcc];
        for (j, o) in out.iter_mut().enumerate() {
            let row = &dct[j * n_mels..(j + 1) * n_mels];
            *o = row.iter().zip(mel_log.iter()).map(|(a, b)| a * b).sum();
        }
    }
    Ok(FeatureMatrix { values, frames: mag.frames, dim: n_mfcc, kind: FeatureKind::Mfcc })
}

/// Elementwise log(|X| + eps) feature matrix (D = bin count).
pub fn log_magnitude(spec: &ComplexSpectrogram, eps: f64) -> FeatureMatrix {
    let values = spec
        .re
        .iter()
        .zip(spec.im.iter())
        .map(|(r, i)| libm::log(libm::sqrt(r * r + i * i) + eps))
        .collect();
    FeatureMatrix {
        values,
        frames: spec.frames,
        dim: spec.bins,
        kind: FeatureKind::LogMagnitude,
    }
}

/// Same transform applied to an already-computed magnitude spectrogram.
pub fn log_magnitude_of(mag: &MagnitudeSpectrogram, eps: f64) -> FeatureMatrix {
    FeatureMatrix {
        values: mag.values.iter().map(|m| libm::log(m + eps)).collect(),
        frames: mag.frames,
        dim: mag.bins,
        kind: FeatureKind::LogMagnitude,
    }
}

/// Invert [`log_magnitude`]: exp(x) - eps, clamped at zero.
pub fn log_magnitude_to_magnitudes(
    feat: &FeatureMatrix,
    geometry: TfGeometry,
    eps: f64,
) -> Result<MagnitudeSpectrogram, DspError> {
    if feat.kind != FeatureKind::LogMagnitude {
        return Err(DspError::BadFeatureRequest(
            "magnitude reconstruction needs log-magnitude features".into(),
        ));
    }
    let values = feat
        .values
        .iter()
        .map(|x| (libm::exp(*x) - eps).max(0.0))
        .collect();
    MagnitudeSpectrogram::from_values(values, feat.frames, feat.dim, geometry)
}
