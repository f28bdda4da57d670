//! The two variational autoencoders.
//!
//! Channel schedules:
//!   PAE encoder  input -> 512 -> 256 -> 128 -> {mu, logvar} heads of 64
//!   PAE decoder  64 -> 128 -> 256 -> 512 -> output (linear final layer)
//!   DAE encoder  input -> 512 -> 400 -> 300 -> 200 -> 100 -> heads of 64
//!   DAE decoder  64 -> 100 -> 200 -> 300 -> 400 -> 512 -> output
//!
//! All convolutions use kernel 7 and stride 1 with "same" padding, so every
//! forward preserves the frame count. The decoder always reconstructs the
//! 513-bin log-magnitude representation; MFCC input only changes the
//! encoder's first layer, and the re-encode in the cycle term goes through a
//! differentiable log-magnitude-to-MFCC chain.

use alloc::vec::Vec;

use crate::dsp::{self, FeatureKind, FeatureMatrix};
use crate::graph::{Graph, GraphError, NodeId, ParamSet};
use crate::masking::{init_conv, ConvHead, MaskingModule};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const LATENT_DIM: usize = 64;
pub const KERNEL: usize = 7;
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// Per-frame latent posterior; logvar arrives pre-clamped to [-10, 10].
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalLatent {
    pub mu: Tensor,
    pub logvar: Tensor,
}

/// Sample z = mu + exp(logvar/2) * eta with seeded standard-normal noise.
pub fn reparameterize(latent: &VariationalLatent, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let data: Vec<f64> = latent
        .mu
        .data()
        .iter()
        .zip(latent.logvar.data().iter())
        .map(|(m, lv)| m + libm::exp(0.5 * lv) * rng.gaussian())
        .collect();
    Tensor::from_vec(latent.mu.shape(), data).expect("reparameterize shape")
}

/// Standard-normal noise tensor for the in-graph reparameterization.
pub fn sample_noise(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gaussian()).collect()).expect("noise shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Pae,
    Dae,
}

impl ModelKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelKind::Pae => "pae",
            ModelKind::Dae => "dae",
        }
    }
}

/// Geometry and featurization shared by both models and the enhancer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_kind: FeatureKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub latent_dim: usize,
    pub kernel: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub sample_rate: u32,
    pub frame_size: usize,
    pub hop: usize,
}

impl ModelConfig {
    pub fn new(feature_kind: FeatureKind, sample_rate: u32) -> Self {
        let bins = dsp::FRAME_SIZE / 2 + 1;
        let (n_mels, n_mfcc) = (40, 20);
        ModelConfig {
            feature_kind,
            input_dim: match feature_kind {
                FeatureKind::LogMagnitude => bins,
                FeatureKind::Mfcc => n_mfcc,
            },
            output_dim: bins,
            latent_dim: LATENT_DIM,
            kernel: KERNEL,
            n_mels,
            n_mfcc,
            sample_rate,
            frame_size: dsp::FRAME_SIZE,
            hop: dsp::HOP,
        }
    }

    /// Encoder input features for a waveform.
    pub fn encoder_features(&self, wave: &dsp::Waveform) -> Result<FeatureMatrix, dsp::DspError> {
        let spec = dsp::stft(wave, self.frame_size, self.hop)?;
        match self.feature_kind {
            FeatureKind::LogMagnitude => Ok(dsp::log_magnitude(&spec, dsp::LOG_EPS)),
            FeatureKind::Mfcc => dsp::mfcc(&spec.magnitudes(), self.n_mels, self.n_mfcc, dsp::LOG_EPS),
        }
    }

    /// Reconstruction target (always log-magnitude).
    pub fn target_features(&self, wave: &dsp::Waveform) -> Result<FeatureMatrix, dsp::DspError> {
        let spec = dsp::stft(wave, self.frame_size, self.hop)?;
        Ok(dsp::log_magnitude(&spec, dsp::LOG_EPS))
    }
}

/// Frame-major feature matrix as a T x D tensor.
pub fn feature_to_tensor(feat: &FeatureMatrix) -> Tensor {
    Tensor::from_vec(&[feat.frames(), feat.dim()], feat.values().to_vec())
        .expect("feature tensor shape")
}

/// Differentiable log-magnitude -> MFCC chain matching
/// [`dsp::mfcc`]: power from exp, mean-normalized mel energies, floored log,
/// truncated orthonormal DCT-II.
pub struct MfccTransform {
    mel_norm: Tensor, // n_mels x bins, rows divided by their sums
    dct: Tensor,      // n_mfcc x n_mels
    eps: f64,
}

impl MfccTransform {
    pub fn new(config: &ModelConfig) -> Result<Self, dsp::DspError> {
        let bins = config.output_dim;
        let fb = dsp::mel_filterbank(config.n_mels, config.sample_rate, config.frame_size)?;
        let mut mel_norm = fb;
        for m in 0..config.n_mels {
            let row = &mut mel_norm[m * bins..(m + 1) * bins];
            let sum: f64 = row.iter().sum();
            for w in row.iter_mut() {
                *w /= sum;
            }
        }
        Ok(MfccTransform {
            mel_norm: Tensor::from_vec(&[config.n_mels, bins], mel_norm).expect("mel shape"),
            dct: Tensor::from_vec(
                &[config.n_mfcc, config.n_mels],
                dsp::dct_ii_matrix(config.n_mfcc, config.n_mels),
            )
            .expect("dct shape"),
            eps: dsp::LOG_EPS,
        })
    }

    /// Apply to an in-graph T x bins log-magnitude node.
    pub fn apply(&self, g: &mut Graph, log_mag: NodeId) -> Result<NodeId, GraphError> {
        let mag = g.exp(log_mag);
        let mag = g.add_const(mag, -self.eps);
        let power = g.mul(mag, mag)?;
        let mel = g.matmul_const(self.mel_norm.clone(), power)?;
        let logmel = g.ln_eps(mel, self.eps);
        g.matmul_const(self.dct.clone(), logmel)
    }
}

/// Conv stack ending in parallel mu/logvar heads.
#[derive(Debug, Clone)]
pub struct VarEncoder {
    pub hidden: Vec<ConvHead>,
    pub mu_head: ConvHead,
    pub logvar_head: ConvHead,
    pub schedule: Vec<usize>,
}

impl VarEncoder {
    /// `schedule` lists channel counts from the input up to the layer feeding
    /// the heads, e.g. [513, 512, 256, 128] for the PAE.
    pub fn init(
        params: &mut ParamSet,
        rng: &mut Rng,
        prefix: &str,
        schedule: &[usize],
        latent_dim: usize,
        kernel: usize,
    ) -> Result<Self, GraphError> {
        let mut hidden = Vec::new();
        for i in 0..schedule.len() - 1 {
            hidden.push(init_conv(
                params,
                rng,
                &alloc::format!("{prefix}.conv{i}"),
                kernel,
                schedule[i],
                schedule[i + 1],
            )?);
        }
        let last = *schedule.last().expect("non-empty schedule");
        let mu_head = init_conv(params, rng, &alloc::format!("{prefix}.mu"), kernel, last, latent_dim)?;
        let logvar_head =
            init_conv(params, rng, &alloc::format!("{prefix}.logvar"), kernel, last, latent_dim)?;
        Ok(VarEncoder { hidden, mu_head, logvar_head, schedule: schedule.to_vec() })
    }

    /// ReLU between hidden layers; linear heads; logvar clamped.
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        x: NodeId,
    ) -> Result<(NodeId, NodeId), GraphError> {
        let mut h = x;
        for layer in &self.hidden {
            let w = g.param(params, layer.w);
            let b = g.param(params, layer.b);
            h = g.conv1d(h, w, b)?;
            h = g.relu(h);
        }
        let wm = g.param(params, self.mu_head.w);
        let bm = g.param(params, self.mu_head.b);
        let mu = g.conv1d(h, wm, bm)?;
        let wl = g.param(params, self.logvar_head.w);
        let bl = g.param(params, self.logvar_head.b);
        let logvar = g.conv1d(h, wl, bl)?;
        let logvar = g.clamp(logvar, LOGVAR_MIN, LOGVAR_MAX);
        Ok((mu, logvar))
    }
}

/// Mirrored conv stack; ReLU between layers, linear final layer.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub layers: Vec<ConvHead>,
    pub schedule: Vec<usize>,
}

impl Decoder {
    /// `schedule` lists channel counts from the latent to the output,
    /// e.g. [64, 128, 256, 512, 513].
    pub fn init(
        params: &mut ParamSet,
        rng: &mut Rng,
        prefix: &str,
        schedule: &[usize],
        kernel: usize,
    ) -> Result<Self, GraphError> {
        let mut layers = Vec::new();
        for i in 0..schedule.len() - 1 {
            layers.push(init_conv(
                params,
                rng,
                &alloc::format!("{prefix}.conv{i}"),
                kernel,
                schedule[i],
                schedule[i + 1],
            )?);
        }
        Ok(Decoder { layers, schedule: schedule.to_vec() })
    }

    pub fn forward(&self, g: &mut Graph, params: &ParamSet, z: NodeId) -> Result<NodeId, GraphError> {
        let mut h = z;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = g.param(params, layer.w);
            let b = g.param(params, layer.b);
            h = g.conv1d(h, w, b)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

/// Pre-training autoencoder: encoder, decoder and the masking module.
#[derive(Debug, Clone)]
pub struct PaeModel {
    pub params: ParamSet,
    pub encoder: VarEncoder,
    pub decoder: Decoder,
    pub masking: MaskingModule,
    pub config: ModelConfig,
    /// False when trained with the single-pre-task ablation; the enhancer
    /// then skips the masking module.
    pub multi_task: bool,
}

impl PaeModel {
    pub fn encoder_schedule(config: &ModelConfig) -> Vec<usize> {
        [config.input_dim, 512, 256, 128].to_vec()
    }

    pub fn decoder_schedule(config: &ModelConfig) -> Vec<usize> {
        [config.latent_dim, 128, 256, 512, config.output_dim].to_vec()
    }

    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, GraphError> {
        let mut params = ParamSet::new();
        let mut rng = Rng::new(crate::rng::derive_seed(seed, "pae-init", 0));
        let encoder = VarEncoder::init(
            &mut params,
            &mut rng,
            "e1",
            &Self::encoder_schedule(&config),
            config.latent_dim,
            config.kernel,
        )?;
        let decoder =
            Decoder::init(&mut params, &mut rng, "d1", &Self::decoder_schedule(&config), config.kernel)?;
        let masking = MaskingModule::init(&mut params, &mut rng, config.latent_dim, config.kernel)?;
        Ok(PaeModel { params, encoder, decoder, masking, config, multi_task: true })
    }

    /// Encode features to the clamped variational latent (no sampling).
    pub fn encode(&self, features: &FeatureMatrix) -> Result<VariationalLatent, GraphError> {
        self.check_input(features)?;
        let mut g = Graph::new();
        let x = g.constant(feature_to_tensor(features));
        let (mu, logvar) = self.encoder.forward(&mut g, &self.params, x)?;
        Ok(VariationalLatent { mu: g.value(mu).clone(), logvar: g.value(logvar).clone() })
    }

    /// Decode a T x 64 latent to log-magnitude features.
    pub fn decode(&self, z: &Tensor) -> Result<FeatureMatrix, GraphError> {
        decode_with(&self.decoder, &self.params, z)
    }

    fn check_input(&self, features: &FeatureMatrix) -> Result<(), GraphError> {
        if features.dim() != self.config.input_dim {
            return Err(GraphError::ShapeMismatch {
                op: "encode",
                lhs: [features.frames(), features.dim()].to_vec(),
                rhs: [features.frames(), self.config.input_dim].to_vec(),
            });
        }
        Ok(())
    }
}

/// Downstream-task autoencoder.
#[derive(Debug, Clone)]
pub struct DaeModel {
    pub params: ParamSet,
    pub encoder: VarEncoder,
    pub decoder: Decoder,
    pub config: ModelConfig,
}

impl DaeModel {
    pub fn encoder_schedule(config: &ModelConfig) -> Vec<usize> {
        [config.input_dim, 512, 400, 300, 200, 100].to_vec()
    }

    pub fn decoder_schedule(config: &ModelConfig) -> Vec<usize> {
        [config.latent_dim, 100, 200, 300, 400, 512, config.output_dim].to_vec()
    }

    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, GraphError> {
        let mut params = ParamSet::new();
        let mut rng = Rng::new(crate::rng::derive_seed(seed, "dae-init", 0));
        let encoder = VarEncoder::init(
            &mut params,
            &mut rng,
            "e2",
            &Self::encoder_schedule(&config),
            config.latent_dim,
            config.kernel,
        )?;
        let decoder =
            Decoder::init(&mut params, &mut rng, "d2", &Self::decoder_schedule(&config), config.kernel)?;
        Ok(DaeModel { params, encoder, decoder, config })
    }

    pub fn encode(&self, features: &FeatureMatrix) -> Result<VariationalLatent, GraphError> {
        if features.dim() != self.config.input_dim {
            return Err(GraphError::ShapeMismatch {
                op: "encode",
                lhs: [features.frames(), features.dim()].to_vec(),
                rhs: [features.frames(), self.config.input_dim].to_vec(),
            });
        }
        let mut g = Graph::new();
        let x = g.constant(feature_to_tensor(features));
        let (mu, logvar) = self.encoder.forward(&mut g, &self.params, x)?;
        Ok(VariationalLatent { mu: g.value(mu).clone(), logvar: g.value(logvar).clone() })
    }

    pub fn decode(&self, z: &Tensor) -> Result<FeatureMatrix, GraphError> {
        decode_with(&self.decoder, &self.params, z)
    }
}

fn decode_with(decoder: &Decoder, params: &ParamSet, z: &Tensor) -> Result<FeatureMatrix, GraphError> {
    let mut g = Graph::new();
    let zn = g.constant(z.clone());
    let out = decoder.forward(&mut g, params, zn)?;
    let (t, d) = g.value(out).dims2();
    Ok(FeatureMatrix::from_parts(
        g.value(out).data().to_vec(),
        t,
        d,
        FeatureKind::LogMagnitude,
    ))
}

/// Expected scalar parameter count of a conv stack over a full channel
/// schedule (weights K*c_in*c_out plus biases).
pub fn conv_stack_param_count(schedule: &[usize], kernel: usize) -> usize {
    schedule
        .windows(2)
        .map(|w| kernel * w[0] * w[1] + w[1])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureKind;

    fn test_config() -> ModelConfig {
        ModelConfig::new(FeatureKind::LogMagnitude, 16_000)
    }

    fn tiny_features(t: usize, d: usize, seed: u64) -> FeatureMatrix {
        let mut rng = Rng::new(seed);
        FeatureMatrix::from_parts(
            (0..t * d).map(|_| rng.gaussian()).collect(),
            t,
            d,
            FeatureKind::LogMagnitude,
        )
    }

    #[test]
    fn pae_shapes_and_clamp() {
        let config = test_config();
        let pae = PaeModel::new(config.clone(), 42).unwrap();
        let feats = tiny_features(9, config.input_dim, 1);
        let latent = pae.encode(&feats).unwrap();
        assert_eq!(latent.mu.shape(), &[9, 64]);
        assert_eq!(latent.logvar.shape(), &[9, 64]);
        assert!(latent.logvar.data().iter().all(|v| (-10.0..=10.0).contains(v)));
        let z = reparameterize(&latent, 7);
        let out = pae.decode(&z).unwrap();
        assert_eq!(out.frames(), 9);
        assert_eq!(out.dim(), config.output_dim);
    }

    #[test]
    fn dae_shapes() {
        let config = test_config();
        let dae = DaeModel::new(config.clone(), 42).unwrap();
        let feats = tiny_features(5, config.input_dim, 2);
        let latent = dae.encode(&feats).unwrap();
        assert_eq!(latent.mu.shape(), &[5, 64]);
        let out = dae.decode(&latent.mu).unwrap();
        assert_eq!(out.dim(), config.output_dim);
        assert_eq!(out.frames(), 5);
    }

    #[test]
    fn encode_rejects_wrong_dim() {
        let pae = PaeModel::new(test_config(), 1).unwrap();
        let feats = tiny_features(4, 10, 3);
        assert!(matches!(pae.encode(&feats), Err(GraphError::ShapeMismatch { .. })));
    }

    #[test]
    fn parameter_counts_match_schedules() {
        let config = test_config();
        let pae = PaeModel::new(config.clone(), 9).unwrap();
        // Encoder: hidden stack 513->512->256->128 plus two 128->64 heads.
        let enc_hidden = conv_stack_param_count(&[513, 512, 256, 128], 7);
        let heads = 2 * (7 * 128 * 64 + 64);
        let dec = conv_stack_param_count(&[64, 128, 256, 512, 513], 7);
        // Masking: four 64->64 convs plus the PReLU slope.
        let mask = 4 * (7 * 64 * 64 + 64) + 1;
        assert_eq!(pae.params.total_len(), enc_hidden + heads + dec + mask);

        let dae = DaeModel::new(config, 9).unwrap();
        let enc_hidden = conv_stack_param_count(&[513, 512, 400, 300, 200, 100], 7);
        let heads = 2 * (7 * 100 * 64 + 64);
        let dec = conv_stack_param_count(&[64, 100, 200, 300, 400, 512, 513], 7);
        assert_eq!(dae.params.total_len(), enc_hidden + heads + dec);
    }

    #[test]
    fn mirror_property() {
        let config = test_config();
        // Decoder channel transitions are the encoder's reversed, including
        // the latent boundary.
        let enc: Vec<(usize, usize)> = {
            let s = PaeModel::encoder_schedule(&config);
            let mut v: Vec<(usize, usize)> = s.windows(2).map(|w| (w[0], w[1])).collect();
            v.push((*s.last().unwrap(), config.latent_dim));
            v
        };
        let dec: Vec<(usize, usize)> = PaeModel::decoder_schedule(&config)
            .windows(2)
            .map(|w| (w[0], w[1]))
            .collect();
        let mirrored: Vec<(usize, usize)> = enc.iter().rev().map(|(a, b)| (*b, *a)).collect();
        assert_eq!(dec, mirrored);

        let enc: Vec<(usize, usize)> = {
            let s = DaeModel::encoder_schedule(&config);
            let mut v: Vec<(usize, usize)> = s.windows(2).map(|w| (w[0], w[1])).collect();
            v.push((*s.last().unwrap(), config.latent_dim));
            v
        };
        let dec: Vec<(usize, usize)> = DaeModel::decoder_schedule(&config)
            .windows(2)
            .map(|w| (w[0], w[1]))
            .collect();
        let mirrored: Vec<(usize, usize)> = enc.iter().rev().map(|(a, b)| (*b, *a)).collect();
        assert_eq!(dec, mirrored);
    }

    #[test]
    fn zero_input_zero_heads_gives_bias() {
        let config = test_config();
        let mut pae = PaeModel::new(config.clone(), 5).unwrap();
        // Zero the head weights, set distinct biases.
        for (head, bias) in [(pae.encoder.mu_head, 0.3), (pae.encoder.logvar_head, -0.7)] {
            for v in pae.params.value_mut(head.w).data_mut() {
                *v = 0.0;
            }
            for v in pae.params.value_mut(head.b).data_mut() {
                *v = bias;
            }
        }
        let feats = FeatureMatrix::from_parts(
            alloc::vec![0.0; 6 * config.input_dim],
            6,
            config.input_dim,
            FeatureKind::LogMagnitude,
        );
        let latent = pae.encode(&feats).unwrap();
        assert!(latent.mu.data().iter().all(|v| (*v - 0.3).abs() < 1e-12));
        assert!(latent.logvar.data().iter().all(|v| (*v + 0.7).abs() < 1e-12));
    }

    /// Layer-by-layer composition oracle: the full encoder forward equals
    /// manually chaining conv1d + relu through a fresh graph.
    #[test]
    fn encoder_matches_manual_composition() {
        let mut params = ParamSet::new();
        let mut rng = Rng::new(11);
        let enc = VarEncoder::init(&mut params, &mut rng, "enc", &[6, 5, 4], 3, 3).unwrap();
        let x_t = tiny_features(7, 6, 12);
        let xt = feature_to_tensor(&x_t);

        let mut g = Graph::new();
        let x = g.constant(xt.clone());
        let (mu, _) = enc.forward(&mut g, &params, x).unwrap();
        let full = g.value(mu).clone();

        let mut g2 = Graph::new();
        let mut h = g2.constant(xt);
        for layer in &enc.hidden {
            let w = g2.param(&params, layer.w);
            let b = g2.param(&params, layer.b);
            h = g2.conv1d(h, w, b).unwrap();
            h = g2.relu(h);
        }
        let w = g2.param(&params, enc.mu_head.w);
        let b = g2.param(&params, enc.mu_head.b);
        let mu2 = g2.conv1d(h, w, b).unwrap();
        assert_eq!(full, g2.value(mu2).clone());
    }

    #[test]
    fn reparameterize_behaviour() {
        let latent = VariationalLatent {
            mu: Tensor::filled(&[4, 8], 0.7),
            logvar: Tensor::filled(&[4, 8], LOGVAR_MIN),
        };
        // Vanishing std: |z - mu| <= 1e-2 * |eta| since exp(-5) < 1e-2.
        let z = reparameterize(&latent, 3);
        let mut eta_rng = Rng::new(3);
        for (zv, mv) in z.data().iter().zip(latent.mu.data()) {
            let eta = eta_rng.gaussian();
            assert!((zv - mv).abs() <= 1e-2 * eta.abs() + 1e-15);
        }
        assert_eq!(reparameterize(&latent, 5), reparameterize(&latent, 5));

        // Monte-Carlo: mean over draws approaches mu within 3 sigma / sqrt(n).
        let latent = VariationalLatent {
            mu: Tensor::filled(&[1, 1], 0.25),
            logvar: Tensor::filled(&[1, 1], 0.0),
        };
        let n = 10_000;
        let mut acc = 0.0;
        for k in 0..n {
            acc += reparameterize(&latent, 1000 + k).data()[0];
        }
        let mean = acc / n as f64;
        assert!((mean - 0.25).abs() < 3.0 / 100.0, "mean {mean}");
    }

    #[test]
    fn mfcc_transform_matches_dsp_featurizer() {
        // The differentiable chain must agree with dsp::mfcc on the same
        // log-magnitude input.
        let config = ModelConfig::new(FeatureKind::Mfcc, 16_000);
        let wave = crate::datagen::synth_speech_like(0.3, 77, 16_000).unwrap();
        let spec = dsp::stft(&wave, config.frame_size, config.hop).unwrap();
        let logmag = dsp::log_magnitude(&spec, dsp::LOG_EPS);
        let reference = dsp::mfcc(&spec.magnitudes(), config.n_mels, config.n_mfcc, dsp::LOG_EPS).unwrap();

        let transform = MfccTransform::new(&config).unwrap();
        let mut g = Graph::new();
        let lm = g.constant(feature_to_tensor(&logmag));
        let out = transform.apply(&mut g, lm).unwrap();
        let got = g.value(out);
        assert_eq!(got.shape(), &[logmag.frames(), config.n_mfcc]);
        for (a, b) in got.data().iter().zip(reference.values()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}
