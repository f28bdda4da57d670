//! Synthetic corpus building blocks: pseudo-speech, shaped noise, room
//! impulse responses, reverberant convolution and SNR-controlled mixing.
//!
//! All generators are pure functions of (parameters, seed). File layout and
//! manifest bookkeeping live in the companion crate; this module only
//! produces waveforms.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dsp::{fft, DspError, Waveform};
use crate::rng::Rng;

const PI: f64 = core::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub enum DatagenError {
    BadDuration(f64),
    BadRt60(f64),
    UnknownNoiseKind(String),
    SampleRateMismatch { left: u32, right: u32 },
    LengthMismatch { left: usize, right: usize },
    ZeroEnergy(&'static str),
    Dsp(DspError),
}

impl core::fmt::Display for DatagenError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DatagenError::BadDuration(d) => write!(f, "duration must be positive, got {d}"),
            DatagenError::BadRt60(r) => write!(f, "rt60 must lie in [0.1, 1.5] s, got {r}"),
            DatagenError::UnknownNoiseKind(k) => write!(f, "unknown noise kind '{k}'"),
            DatagenError::SampleRateMismatch { left, right } => {
                write!(f, "sample rates differ: {left} vs {right}")
            }
            DatagenError::LengthMismatch { left, right } => {
                write!(f, "lengths differ: {left} vs {right}")
            }
            DatagenError::ZeroEnergy(which) => write!(f, "{which} signal has zero energy"),
            DatagenError::Dsp(e) => write!(f, "{e}"),
        }
    }
}

impl From<DspError> for DatagenError {
    fn from(e: DspError) -> Self {
        DatagenError::Dsp(e)
    }
}

/// Background noise flavors standing in for recorded noise corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
    BabbleLike,
}

impl NoiseKind {
    pub fn parse(s: &str) -> Result<Self, DatagenError> {
        match s {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            "babble_like" => Ok(NoiseKind::BabbleLike),
            other => Err(DatagenError::UnknownNoiseKind(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::BabbleLike => "babble_like",
        }
    }
}

/// Synthetic room impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    pub rt60: f64,
}

/// One mixture's recipe; the seed fixes every random draw it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub speech_id: String,
    pub noise_id: String,
    pub room_id: String,
    pub snr_db: f64,
    pub seed: u64,
}

fn peak_normalize(samples: &mut [f64], peak: f64) {
    let max = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if max > 0.0 {
        let g = peak / max;
        for s in samples.iter_mut() {
            *s *= g;
        }
    }
}

/// Deterministic pseudo-speech: harmonics under a drifting fundamental
/// (80-300 Hz), formant-shaped amplitudes and syllabic 2-8 Hz amplitude
/// modulation; peak-normalized to 0.9.
pub fn synth_speech_like(duration_s: f64, seed: u64, sample_rate: u32) -> Result<Waveform, DatagenError> {
    synth_voiced(duration_s, seed, sample_rate, Excitation::Harmonic)
}

/// Same envelope/formant machinery but excited by Gaussian noise instead of
/// harmonics; used for the "unlabeled mixture" interference regime.
pub fn synth_gaussian_speech_like(
    duration_s: f64,
    seed: u64,
    sample_rate: u32,
) -> Result<Waveform, DatagenError> {
    synth_voiced(duration_s, seed, sample_rate, Excitation::Gaussian)
}

enum Excitation {
    Harmonic,
    Gaussian,
}

fn synth_voiced(
    duration_s: f64,
    seed: u64,
    sample_rate: u32,
    excitation: Excitation,
) -> Result<Waveform, DatagenError> {
    if duration_s <= 0.0 {
        return Err(DatagenError::BadDuration(duration_s));
    }
    let fs = sample_rate as f64;
    let n = (duration_s * fs) as usize;
    let n = n.max(1);
    let mut rng = Rng::new(seed);

    // Fundamental drifts sinusoidally inside [80, 300] Hz.
    let f0_center = rng.uniform(120.0, 220.0);
    let f0_span = rng.uniform(0.1, 0.25) * f0_center;
    let drift_hz = rng.uniform(0.2, 0.6);
    let drift_phase = rng.uniform(0.0, 2.0 * PI);

    // Two syllabic modulators inside 2-8 Hz; kept non-zero so the waveform
    // never fully gates out.
    let syl1_hz = rng.uniform(2.5, 4.5);
    let syl2_hz = rng.uniform(5.0, 7.5);
    let syl1_phase = rng.uniform(0.0, 2.0 * PI);
    let syl2_phase = rng.uniform(0.0, 2.0 * PI);

    // Three formant-like resonances.
    let formants = [
        (rng.uniform(350.0, 800.0), rng.uniform(80.0, 140.0), 1.0),
        (rng.uniform(1000.0, 2200.0), rng.uniform(120.0, 220.0), 0.6),
        (rng.uniform(2400.0, 3200.0), rng.uniform(180.0, 300.0), 0.3),
    ];
    let spectral_env = |f: f64| -> f64 {
        let mut g = 0.02; // broadband base so high harmonics never vanish
        for (fc, bw, a) in formants.iter() {
            let d = (f - fc) / bw;
            g += a * libm::exp(-0.5 * d * d);
        }
        g * libm::exp(-f / 4000.0)
    };

    let max_harmonics = ((fs / 2.0 - 100.0) / 80.0) as usize;
    let mut phases: Vec<f64> = (0..max_harmonics).map(|_| rng.uniform(0.0, 2.0 * PI)).collect();
    let mut amps = vec![0.0; max_harmonics];

    let block = 160; // amplitude envelope refreshed every 10 ms at 16 kHz
    let mut samples = vec![0.0; n];
    let mut t_idx = 0;
    while t_idx < n {
        let t = t_idx as f64 / fs;
        let f0 = f0_center + f0_span * libm::sin(2.0 * PI * drift_hz * t + drift_phase);
        let active = ((fs / 2.0 - 100.0) / f0) as usize;
        let active = active.min(max_harmonics);
        for (h, amp) in amps.iter_mut().take(active).enumerate() {
            *amp = spectral_env((h + 1) as f64 * f0);
        }
        let end = (t_idx + block).min(n);
        match excitation {
            Excitation::Harmonic => {
                for i in t_idx..end {
                    let ti = i as f64 / fs;
                    let syl = 0.55
                        + 0.3 * libm::sin(2.0 * PI * syl1_hz * ti + syl1_phase)
                        + 0.15 * libm::sin(2.0 * PI * syl2_hz * ti + syl2_phase);
                    let mut acc = 0.0;
                    for h in 0..active {
                        acc += amps[h] * libm::sin(phases[h]);
                        phases[h] += 2.0 * PI * (h + 1) as f64 * f0 / fs;
                        if phases[h] > 2.0 * PI {
                            phases[h] -= 2.0 * PI;
                        }
                    }
                    samples[i] = syl * acc;
                }
            }
            Excitation::Gaussian => {
                // Noise through the formant envelope: shape a white block by
                // the per-harmonic gains via simple additive bands.
                for i in t_idx..end {
                    let ti = i as f64 / fs;
                    let syl = 0.55
                        + 0.3 * libm::sin(2.0 * PI * syl1_hz * ti + syl1_phase)
                        + 0.15 * libm::sin(2.0 * PI * syl2_hz * ti + syl2_phase);
                    let mut acc = 0.0;
                    for h in 0..active {
                        acc += amps[h] * libm::sin(phases[h]) * rng.gaussian();
                        phases[h] += 2.0 * PI * (h + 1) as f64 * f0 / fs;
                        if phases[h] > 2.0 * PI {
                            phases[h] -= 2.0 * PI;
                        }
                    }
                    samples[i] = syl * acc;
                }
            }
        }
        t_idx = end;
    }

    peak_normalize(&mut samples, 0.9);
    Ok(Waveform::new(samples, sample_rate)?)
}

/// Deterministic noise of the requested spectral shape, peak-normalized to 0.9.
pub fn synth_noise(
    kind: NoiseKind,
    duration_s: f64,
    seed: u64,
    sample_rate: u32,
) -> Result<Waveform, DatagenError> {
    if duration_s <= 0.0 {
        return Err(DatagenError::BadDuration(duration_s));
    }
    let n = ((duration_s * sample_rate as f64) as usize).max(1);
    let mut rng = Rng::new(seed);
    let mut samples = match kind {
        NoiseKind::White => (0..n).map(|_| rng.gaussian()).collect::<Vec<f64>>(),
        NoiseKind::Pink => pink_noise(n, &mut rng, sample_rate),
        NoiseKind::BabbleLike => {
            // Six uncorrelated pseudo-talkers.
            let mut acc = vec![0.0; n];
            for k in 0..6 {
                let talker =
                    synth_speech_like(duration_s, crate::rng::derive_seed(seed, "talker", k), sample_rate)?;
                for (a, s) in acc.iter_mut().zip(talker.samples()) {
                    *a += s;
                }
            }
            acc
        }
    };
    peak_normalize(&mut samples, 0.9);
    Ok(Waveform::new(samples, sample_rate)?)
}

/// 1/f power spectral density by construction: white Gaussian spectrum scaled
/// by 1/sqrt(f), then inverse FFT.
fn pink_noise(n: usize, rng: &mut Rng, sample_rate: u32) -> Vec<f64> {
    let m = fft::next_power_of_two(n.max(2));
    let mut re = vec![0.0; m];
    let mut im = vec![0.0; m];
    let f_ref = 1.0; // Hz; only fixes overall gain
    for k in 1..m / 2 {
        let f = k as f64 * sample_rate as f64 / m as f64;
        let g = libm::sqrt(f_ref / f);
        let (a, b) = (rng.gaussian() * g, rng.gaussian() * g);
        re[k] = a;
        im[k] = b;
        re[m - k] = a;
        im[m - k] = -b;
    }
    re[m / 2] = rng.gaussian() * libm::sqrt(f_ref / (sample_rate as f64 / 2.0));
    fft::fft_in_place(&mut re, &mut im, true);
    re.truncate(n);
    re
}

/// Exponentially decaying noise tail behind a unit direct path. The envelope
/// reaches -60 dB at t = rt60; the tail is long enough to decay below -80 dB
/// even if `duration_s` is shorter.
pub fn synth_rir(
    rt60_s: f64,
    duration_s: f64,
    seed: u64,
    sample_rate: u32,
) -> Result<ImpulseResponse, DatagenError> {
    if !(0.1..=1.5).contains(&rt60_s) {
        return Err(DatagenError::BadRt60(rt60_s));
    }
    let min_dur = rt60_s * 80.0 / 60.0; // -80 dB point
    let dur = duration_s.max(min_dur);
    let n = ((dur * sample_rate as f64) as usize).max(2);
    let mut rng = Rng::new(seed);
    let decay = 6.9077552789821_f64 / rt60_s; // ln(1000): -60 dB amplitude at rt60
    let mut taps = vec![0.0; n];
    taps[0] = 1.0;
    // Diffuse tail after a short pre-delay, scaled for a direct-to-
    // reverberant energy ratio of +3 dB (a close-microphone room).
    let drr_db = 3.0;
    let expected_tail_energy = sample_rate as f64 * rt60_s / (2.0 * 6.9077552789821);
    let tail_gain = libm::sqrt(libm::pow(10.0, -drr_db / 10.0) / expected_tail_energy);
    let pre_delay = (0.004 * sample_rate as f64) as usize;
    for (i, tap) in taps.iter_mut().enumerate().skip(pre_delay.max(1)) {
        let t = i as f64 / sample_rate as f64;
        *tap = tail_gain * rng.gaussian() * libm::exp(-decay * t);
    }
    Ok(ImpulseResponse { taps, sample_rate, rt60: rt60_s })
}

/// Full linear convolution with the RIR, truncated to the input length.
pub fn convolve_rir(wave: &Waveform, rir: &ImpulseResponse) -> Result<Waveform, DatagenError> {
    if wave.sample_rate() != rir.sample_rate {
        return Err(DatagenError::SampleRateMismatch {
            left: wave.sample_rate(),
            right: rir.sample_rate,
        });
    }
    let mut full = fft::fft_convolve(wave.samples(), &rir.taps);
    full.truncate(wave.len());
    // FFT round-off can leave sub-1e-12 imaginary residue; values are real by
    // construction so nothing else to fix.
    Ok(Waveform::new(full, wave.sample_rate())?)
}

/// Scale the interference to reach `snr_db` against the speech and sum.
/// Returns the mixture and the scaled interference actually added.
pub fn mix_at_snr(
    speech: &Waveform,
    interference: &Waveform,
    snr_db: f64,
) -> Result<(Waveform, Waveform), DatagenError> {
    if speech.sample_rate() != interference.sample_rate() {
        return Err(DatagenError::SampleRateMismatch {
            left: speech.sample_rate(),
            right: interference.sample_rate(),
        });
    }
    if speech.len() != interference.len() {
        return Err(DatagenError::LengthMismatch {
            left: speech.len(),
            right: interference.len(),
        });
    }
    let p_s: f64 = speech.samples().iter().map(|s| s * s).sum();
    let p_i: f64 = interference.samples().iter().map(|s| s * s).sum();
    if p_s == 0.0 {
        return Err(DatagenError::ZeroEnergy("speech"));
    }
    if p_i == 0.0 {
        return Err(DatagenError::ZeroEnergy("interference"));
    }
    let g = libm::sqrt(p_s / (p_i * libm::pow(10.0, snr_db / 10.0)));
    let scaled: Vec<f64> = interference.samples().iter().map(|s| g * s).collect();
    let mixture: Vec<f64> = speech
        .samples()
        .iter()
        .zip(scaled.iter())
        .map(|(s, i)| s + i)
        .collect();
    Ok((
        Waveform::new(mixture, speech.sample_rate())?,
        Waveform::new(scaled, speech.sample_rate())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp;

    const FS: u32 = 16_000;

    #[test]
    fn speech_like_deterministic_and_normalized() {
        let a = synth_speech_like(1.0, 7, FS).unwrap();
        let b = synth_speech_like(1.0, 7, FS).unwrap();
        assert_eq!(a, b);
        let peak = a.samples().iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert!((peak - 0.9).abs() < 1e-9, "peak {peak}");
    }

    #[test]
    fn speech_like_rejects_bad_duration() {
        assert!(synth_speech_like(0.0, 1, FS).is_err());
        assert!(synth_speech_like(-1.0, 1, FS).is_err());
    }

    /// Envelope spectrum oracle: RMS track at 100 Hz, then a direct DFT.
    /// The dominant non-DC component must land in the 2-8 Hz band.
    #[test]
    fn speech_like_modulation_in_syllabic_band() {
        let wave = synth_speech_like(4.0, 42, FS).unwrap();
        let hop = 160; // 10 ms -> 100 Hz envelope rate
        let env: Vec<f64> = wave
            .samples()
            .chunks(hop)
            .map(|c| (c.iter().map(|s| s * s).sum::<f64>() / c.len() as f64).sqrt())
            .collect();
        let n = env.len();
        let mean = env.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = env.iter().map(|e| e - mean).collect();
        let env_rate = 100.0;
        let mut best_f = 0.0;
        let mut best_p = 0.0;
        let mut total_p = 0.0;
        for k in 1..n / 2 {
            let f = k as f64 * env_rate / n as f64;
            let mut re = 0.0;
            let mut im = 0.0;
            for (j, &v) in centered.iter().enumerate() {
                let ang = -2.0 * PI * (k * j) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            let p = re * re + im * im;
            total_p += p;
            if p > best_p {
                best_p = p;
                best_f = f;
            }
        }
        assert!(
            (2.0..=8.0).contains(&best_f),
            "dominant modulation at {best_f} Hz"
        );
        // And the band holds the bulk of envelope variance.
        let mut band_p = 0.0;
        for k in 1..n / 2 {
            let f = k as f64 * env_rate / n as f64;
            if (2.0..=8.0).contains(&f) {
                let mut re = 0.0;
                let mut im = 0.0;
                for (j, &v) in centered.iter().enumerate() {
                    let ang = -2.0 * PI * (k * j) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                band_p += re * re + im * im;
            }
        }
        assert!(band_p / total_p > 0.5, "band fraction {}", band_p / total_p);
    }

    /// Averaged periodogram of white noise is flat within +/-3 dB over
    /// 100 Hz - 6 kHz.
    #[test]
    fn white_noise_flat_psd() {
        let wave = synth_noise(NoiseKind::White, 4.0, 3, FS).unwrap();
        let spec = dsp::stft(&wave, 1024, 512).unwrap();
        let mags = spec.magnitudes();
        assert!(mags.frames() >= 100);
        let bins = mags.bins();
        let mut psd = vec![0.0; bins];
        for t in 0..mags.frames() {
            for (k, p) in psd.iter_mut().enumerate() {
                let v = mags.frame(t)[k];
                *p += v * v;
            }
        }
        let band: Vec<(usize, f64)> = (0..bins)
            .map(|k| (k, k as f64 * FS as f64 / 1024.0))
            .filter(|(_, f)| (100.0..=6000.0).contains(f))
            .map(|(k, _)| (k, psd[k] / mags.frames() as f64))
            .collect();
        let mean_db =
            band.iter().map(|(_, p)| 10.0 * p.log10()).sum::<f64>() / band.len() as f64;
        for (k, p) in &band {
            let db = 10.0 * p.log10();
            assert!((db - mean_db).abs() <= 3.0, "bin {k}: {db} vs mean {mean_db}");
        }
    }

    /// Log-log regression oracle: pink PSD slope is -3 dB/octave within 1 dB.
    #[test]
    fn pink_noise_slope() {
        let wave = synth_noise(NoiseKind::Pink, 4.0, 5, FS).unwrap();
        let spec = dsp::stft(&wave, 1024, 512).unwrap();
        let mags = spec.magnitudes();
        let bins = mags.bins();
        let mut psd = vec![0.0; bins];
        for t in 0..mags.frames() {
            for (k, p) in psd.iter_mut().enumerate() {
                let v = mags.frame(t)[k];
                *p += v * v;
            }
        }
        // Regress 10*log10(psd) on log2(f) over the band.
        let pts: Vec<(f64, f64)> = (1..bins)
            .map(|k| (k as f64 * FS as f64 / 1024.0, psd[k]))
            .filter(|(f, _)| (100.0..=6000.0).contains(f))
            .map(|(f, p)| (f.log2(), 10.0 * p.log10()))
            .collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|(x, _)| x).sum();
        let sy: f64 = pts.iter().map(|(_, y)| y).sum();
        let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
        let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((slope + 3.01).abs() <= 1.0, "slope {slope} dB/oct");
    }

    #[test]
    fn noise_deterministic() {
        for kind in [NoiseKind::White, NoiseKind::Pink, NoiseKind::BabbleLike] {
            let a = synth_noise(kind, 0.5, 11, FS).unwrap();
            let b = synth_noise(kind, 0.5, 11, FS).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rir_direct_path_and_envelope() {
        let rir = synth_rir(0.5, 0.8, 9, FS).unwrap();
        assert_eq!(rir.taps[0], 1.0);
        // Envelope at rt60 is 1e-3 of the t=0 envelope by construction:
        // check the decay factor directly on the shaping function.
        let decay = 6.9077552789821_f64 / 0.5;
        let at_rt60 = libm::exp(-decay * 0.5);
        assert!((at_rt60 - 1e-3).abs() < 1e-12);
        // Tail decays below 1e-4 of peak by the end.
        let tail_max = rir.taps[rir.taps.len() - 160..]
            .iter()
            .fold(0.0f64, |m, t| m.max(t.abs()));
        assert!(tail_max < 1e-4, "tail {tail_max}");
    }

    #[test]
    fn rir_rejects_bad_rt60() {
        assert!(synth_rir(0.05, 1.0, 1, FS).is_err());
        assert!(synth_rir(2.0, 1.0, 1, FS).is_err());
    }

    /// Schroeder backward integration oracle: the energy decay curve crosses
    /// -60 dB at rt60 within 10%.
    #[test]
    fn rir_schroeder_decay() {
        for (rt60, seed) in [(0.3, 2u64), (0.6, 3u64)] {
            let rir = synth_rir(rt60, rt60 * 1.6, seed, FS).unwrap();
            // Skip the direct path: the EDC of the diffuse tail carries RT60.
            let tail = &rir.taps[1..];
            let total: f64 = tail.iter().map(|t| t * t).sum();
            let mut acc = total;
            let mut cross = None;
            for (i, t) in tail.iter().enumerate() {
                let db = 10.0 * (acc / total).log10();
                if db <= -60.0 {
                    cross = Some(i as f64 / FS as f64);
                    break;
                }
                acc -= t * t;
            }
            let cross = cross.expect("EDC never crossed -60 dB");
            assert!(
                (cross - rt60).abs() <= 0.1 * rt60,
                "rt60 {rt60}: crossed at {cross}"
            );
        }
    }

    #[test]
    fn convolve_identity_and_delay() {
        let wave = synth_speech_like(0.2, 1, FS).unwrap();
        let identity = ImpulseResponse { taps: vec![1.0], sample_rate: FS, rt60: 0.0 };
        let out = convolve_rir(&wave, &identity).unwrap();
        for (a, b) in wave.samples().iter().zip(out.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
        let delay = ImpulseResponse { taps: vec![0.0, 1.0], sample_rate: FS, rt60: 0.0 };
        let out = convolve_rir(&wave, &delay).unwrap();
        assert!(out.samples()[0].abs() < 1e-12);
        for i in 1..wave.len() {
            assert!((out.samples()[i] - wave.samples()[i - 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn convolve_matches_direct_sum_oracle() {
        let mut rng = Rng::new(13);
        let wave =
            Waveform::new((0..256).map(|_| rng.gaussian()).collect(), FS).unwrap();
        let taps: Vec<f64> = (0..64).map(|_| rng.gaussian()).collect();
        let rir = ImpulseResponse { taps: taps.clone(), sample_rate: FS, rt60: 0.1 };
        let fast = convolve_rir(&wave, &rir).unwrap();
        for n in 0..wave.len() {
            let mut acc = 0.0;
            for (k, &tk) in taps.iter().enumerate() {
                if n >= k {
                    acc += wave.samples()[n - k] * tk;
                }
            }
            assert!((fast.samples()[n] - acc).abs() < 1e-9, "sample {n}");
        }
    }

    #[test]
    fn convolve_rejects_rate_mismatch() {
        let wave = synth_speech_like(0.1, 1, FS).unwrap();
        let rir = ImpulseResponse { taps: vec![1.0], sample_rate: 8_000, rt60: 0.0 };
        assert!(matches!(
            convolve_rir(&wave, &rir),
            Err(DatagenError::SampleRateMismatch { .. })
        ));
    }

    fn power(w: &Waveform) -> f64 {
        w.samples().iter().map(|s| s * s).sum()
    }

    #[test]
    fn mix_snr_exact() {
        let s = synth_speech_like(0.5, 21, FS).unwrap();
        let i = synth_noise(NoiseKind::White, 0.5, 22, FS).unwrap();
        for snr in [-5.0, 0.0, 10.0] {
            let (_, scaled) = mix_at_snr(&s, &i, snr).unwrap();
            let achieved = 10.0 * (power(&s) / power(&scaled)).log10();
            assert!((achieved - snr).abs() < 1e-9, "snr {snr}: got {achieved}");
        }
    }

    #[test]
    fn mix_resums_exactly() {
        let s = synth_speech_like(0.5, 31, FS).unwrap();
        let i = synth_noise(NoiseKind::Pink, 0.5, 32, FS).unwrap();
        let (mix, scaled) = mix_at_snr(&s, &i, 5.0).unwrap();
        for ((m, s), g) in mix.samples().iter().zip(s.samples()).zip(scaled.samples()) {
            assert_eq!(*m, s + g);
        }
    }

    #[test]
    fn mix_rejects_zero_energy() {
        let s = synth_speech_like(0.1, 1, FS).unwrap();
        let z = Waveform::new(vec![0.0; s.len()], FS).unwrap();
        assert!(matches!(mix_at_snr(&s, &z, 0.0), Err(DatagenError::ZeroEnergy(_))));
        assert!(matches!(mix_at_snr(&z, &s, 0.0), Err(DatagenError::ZeroEnergy(_))));
    }
}
