//! Objective quality metrics: SI-SDR, segmental SNR and log-spectral
//! distance. Desk-scale proxies for listening-test composites.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dsp::{MagnitudeSpectrogram, Waveform};

pub const SI_SDR_CAP_DB: f64 = 60.0;
pub const SEG_SNR_MIN_DB: f64 = -10.0;
pub const SEG_SNR_MAX_DB: f64 = 35.0;
const SILENCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    LengthMismatch { est: usize, reference: usize },
    ZeroReference,
    AllFramesSilent,
    GeometryMismatch(String),
}

impl core::fmt::Display for MetricError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetricError::LengthMismatch { est, reference } => {
                write!(f, "lengths differ: estimate {est} vs reference {reference}")
            }
            MetricError::ZeroReference => write!(f, "reference signal has zero energy"),
            MetricError::AllFramesSilent => write!(f, "every reference frame is silent"),
            MetricError::GeometryMismatch(m) => write!(f, "geometry mismatch: {m}"),
        }
    }
}

/// Scale-invariant SDR in dB: project the estimate onto the reference and
/// compare target energy to residual energy. Capped to [-60, +60] dB so
/// perfect or orthogonal estimates stay finite.
pub fn si_sdr(est: &Waveform, reference: &Waveform) -> Result<f64, MetricError> {
    if est.len() != reference.len() {
        return Err(MetricError::LengthMismatch { est: est.len(), reference: reference.len() });
    }
    let r = reference.samples();
    let e = est.samples();
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let er: f64 = e.iter().zip(r.iter()).map(|(a, b)| a * b).sum();
    let alpha = er / rr;
    let target_energy = alpha * alpha * rr;
    let mut residual = 0.0;
    for (a, b) in e.iter().zip(r.iter()) {
        let d = a - alpha * b;
        residual += d * d;
    }
    if residual <= SILENCE_EPS * target_energy.max(1e-300) {
        return Ok(SI_SDR_CAP_DB);
    }
    if target_energy == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * libm::log10(target_energy / residual)).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// Segmental SNR in dB: per-frame ratio of estimate power to error power,
/// clamped to [-10, 35] dB, averaged over frames whose reference carries
/// energy. An all-silent reference is an error.
pub fn seg_snr(est: &Waveform, reference: &Waveform, frame: usize) -> Result<f64, MetricError> {
    if est.len() != reference.len() {
        return Err(MetricError::LengthMismatch { est: est.len(), reference: reference.len() });
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for (ef, rf) in est.samples().chunks(frame).zip(reference.samples().chunks(frame)) {
        let ref_energy: f64 = rf.iter().map(|v| v * v).sum();
        if ref_energy < SILENCE_EPS {
            continue;
        }
        let est_energy: f64 = ef.iter().map(|v| v * v).sum();
        let err_energy: f64 = ef.iter().zip(rf.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        let snr = if err_energy <= SILENCE_EPS * est_energy.max(1e-300) {
            SEG_SNR_MAX_DB
        } else if est_energy == 0.0 {
            SEG_SNR_MIN_DB
        } else {
            (10.0 * libm::log10(est_energy / err_energy)).clamp(SEG_SNR_MIN_DB, SEG_SNR_MAX_DB)
        };
        acc += snr;
        count += 1;
    }
    if count == 0 {
        return Err(MetricError::AllFramesSilent);
    }
    Ok(acc / count as f64)
}

/// Log-spectral distance in dB: per frame, the RMS over bins of
/// 20*(log10(est + eps) - log10(ref + eps)), averaged over frames.
/// Computed as a difference of logs so lsd(a, b) == lsd(b, a) bitwise.
pub fn lsd(
    est: &MagnitudeSpectrogram,
    reference: &MagnitudeSpectrogram,
    eps: f64,
) -> Result<f64, MetricError> {
    if est.frames() != reference.frames() || est.bins() != reference.bins() {
        return Err(MetricError::GeometryMismatch(alloc::format!(
            "{}x{} vs {}x{}",
            est.frames(),
            est.bins(),
            reference.frames(),
            reference.bins()
        )));
    }
    let bins = est.bins() as f64;
    let mut acc = 0.0;
    for t in 0..est.frames() {
        let ef = est.frame(t);
        let rf = reference.frame(t);
        let mut sq = 0.0;
        for (a, b) in ef.iter().zip(rf.iter()) {
            let d = 20.0 * (libm::log10(a + eps) - libm::log10(b + eps));
            sq += d * d;
        }
        acc += libm::sqrt(sq / bins);
    }
    Ok(acc / est.frames() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{self, TfGeometry};
    use crate::rng::Rng;

    const FS: u32 = 16_000;

    fn wave(data: Vec<f64>) -> Waveform {
        Waveform::new(data, FS).unwrap()
    }

    fn noise(len: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        (0..len).map(|_| scale * rng.gaussian()).collect()
    }

    #[test]
    fn si_sdr_caps_and_scale_invariance() {
        let r = wave(noise(4000, 1, 0.3));
        assert_eq!(si_sdr(&r, &r).unwrap(), 60.0);
        let doubled = wave(r.samples().iter().map(|v| 2.0 * v).collect());
        assert_eq!(si_sdr(&doubled, &r).unwrap(), 60.0);
    }

    /// Closed-form projection oracle: est = ref + orthogonalized noise at a
    /// known residual power.
    #[test]
    fn si_sdr_matches_projection_oracle() {
        let r_data = noise(8000, 2, 0.5);
        let mut n_data = noise(8000, 3, 1.0);
        // Orthogonalize the noise against the reference, then scale to a
        // known power ratio.
        let rr: f64 = r_data.iter().map(|v| v * v).sum();
        let nr: f64 = n_data.iter().zip(r_data.iter()).map(|(a, b)| a * b).sum();
        for (n, rv) in n_data.iter_mut().zip(r_data.iter()) {
            *n -= nr / rr * rv;
        }
        let nn: f64 = n_data.iter().map(|v| v * v).sum();
        let target_ratio_db = 12.0;
        let scale = libm::sqrt(rr / (nn * libm::pow(10.0, target_ratio_db / 10.0)));
        let est: Vec<f64> = r_data
            .iter()
            .zip(n_data.iter())
            .map(|(rv, nv)| rv + scale * nv)
            .collect();
        let got = si_sdr(&wave(est), &wave(r_data)).unwrap();
        assert!((got - target_ratio_db).abs() < 0.01, "got {got}");
    }

    #[test]
    fn si_sdr_scaling_estimate_is_exact_invariance() {
        let r = wave(noise(4000, 5, 0.4));
        let e = wave(noise(4000, 6, 0.4));
        let a = si_sdr(&e, &r).unwrap();
        let scaled = wave(e.samples().iter().map(|v| 3.7 * v).collect());
        let b = si_sdr(&scaled, &r).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn si_sdr_rejects_zero_reference() {
        let r = wave(alloc::vec![0.0; 100]);
        let e = wave(noise(100, 7, 0.1));
        assert!(matches!(si_sdr(&e, &r), Err(MetricError::ZeroReference)));
    }

    #[test]
    fn seg_snr_clamps() {
        let r = wave(noise(4096, 8, 0.3));
        assert_eq!(seg_snr(&r, &r, 256).unwrap(), 35.0);
        let silent = wave(alloc::vec![0.0; 4096]);
        assert_eq!(seg_snr(&silent, &r, 256).unwrap(), -10.0);
    }

    #[test]
    fn seg_snr_matches_per_frame_oracle() {
        // Constant per-frame error with known ratio.
        let frame = 128;
        let frames = 16;
        let r: Vec<f64> = (0..frame * frames).map(|i| ((i % 7) as f64 - 3.0) * 0.1).collect();
        let err = 0.05;
        let e: Vec<f64> = r.iter().map(|v| v + err).collect();
        let got = seg_snr(&wave(e.clone()), &wave(r.clone()), frame).unwrap();
        let mut expect = 0.0;
        for t in 0..frames {
            let ef = &e[t * frame..(t + 1) * frame];
            let rf = &r[t * frame..(t + 1) * frame];
            let pe: f64 = ef.iter().map(|v| v * v).sum();
            let pn: f64 = ef.iter().zip(rf).map(|(a, b)| (a - b) * (a - b)).sum();
            expect += (10.0 * (pe / pn).log10()).clamp(-10.0, 35.0);
        }
        expect /= frames as f64;
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn seg_snr_skips_silent_frames_and_errors_when_all_silent() {
        let frame = 64;
        let mut r = alloc::vec![0.0; 4 * frame];
        for v in r[frame..2 * frame].iter_mut() {
            *v = 0.5;
        }
        let e = r.clone();
        assert_eq!(seg_snr(&wave(e), &wave(r), frame).unwrap(), 35.0);
        let all_zero = wave(alloc::vec![0.0; 4 * frame]);
        let est = wave(noise(4 * frame, 9, 0.1));
        assert!(matches!(
            seg_snr(&est, &all_zero, frame),
            Err(MetricError::AllFramesSilent)
        ));
    }

    fn mag_from(values: Vec<f64>, frames: usize, bins: usize) -> MagnitudeSpectrogram {
        let geometry = TfGeometry { frame_size: (bins - 1) * 2, hop: bins - 1, sample_rate: FS };
        MagnitudeSpectrogram::from_values(values, frames, bins, geometry).unwrap()
    }

    #[test]
    fn lsd_zero_and_constant_ratio() {
        let m = mag_from(noise(3 * 129, 10, 1.0).iter().map(|v| v.abs() + 0.5).collect(), 3, 129);
        assert_eq!(lsd(&m, &m, dsp::LOG_EPS).unwrap(), 0.0);
        let ten = mag_from(m.values().iter().map(|v| 10.0 * v).collect(), 3, 129);
        let got = lsd(&ten, &m, dsp::LOG_EPS).unwrap();
        assert!((got - 20.0).abs() < 1e-5, "got {got}");
    }

    #[test]
    fn lsd_matches_double_loop_oracle() {
        let frames = 4;
        let bins = 65;
        let a = mag_from(noise(frames * bins, 11, 1.0).iter().map(|v| v.abs()).collect(), frames, bins);
        let b = mag_from(noise(frames * bins, 12, 1.0).iter().map(|v| v.abs()).collect(), frames, bins);
        let got = lsd(&a, &b, dsp::LOG_EPS).unwrap();
        let mut expect = 0.0;
        for t in 0..frames {
            let mut sq = 0.0;
            for k in 0..bins {
                let d = 20.0
                    * ((a.frame(t)[k] + dsp::LOG_EPS).log10() - (b.frame(t)[k] + dsp::LOG_EPS).log10());
                sq += d * d;
            }
            expect += (sq / bins as f64).sqrt();
        }
        expect /= frames as f64;
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn lsd_symmetric_bitwise() {
        let a = mag_from(noise(2 * 33, 13, 1.0).iter().map(|v| v.abs()).collect(), 2, 33);
        let b = mag_from(noise(2 * 33, 14, 1.0).iter().map(|v| v.abs()).collect(), 2, 33);
        assert_eq!(lsd(&a, &b, dsp::LOG_EPS).unwrap(), lsd(&b, &a, dsp::LOG_EPS).unwrap());
    }
}
