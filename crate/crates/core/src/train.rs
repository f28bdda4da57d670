//! Training loops and the enhancement path.
//!
//! PAE pre-training runs two pre-tasks per step: clean-speech latent
//! learning (encode, sample, decode, KL + reconstruction + cycle) and mask
//! estimation (encode the mixture, run the masking module on the sampled
//! mixture latent, decode the masked representation averaged with the clean
//! latent sample, same loss shape). DAE training freezes the PAE and fits
//! the mixture autoencoder with an L2 alignment pull toward the PAE's
//! masked latent of the same mixture.
//!
//! Every random draw comes from seeds derived off `TrainConfig::seed`, so a
//! rerun reproduces the loss trajectory bitwise.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dsp::{self, FeatureKind, Waveform};
use crate::graph::{Graph, GraphError, NodeId, ParamSet};
use crate::loss;
use crate::masking;
use crate::models::{feature_to_tensor, sample_noise, DaeModel, MfccTransform, PaeModel};
use crate::optim::{adam_step, AdamState};
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    EmptyDataset(&'static str),
    NonFiniteLoss { step: u64 },
    BadConfig(String),
    Graph(GraphError),
    Dsp(dsp::DspError),
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::EmptyDataset(which) => write!(f, "empty dataset: no {which}"),
            TrainError::NonFiniteLoss { step } => {
                write!(f, "non-finite loss at step {step}; aborting")
            }
            TrainError::BadConfig(m) => write!(f, "bad training config: {m}"),
            TrainError::Graph(e) => write!(f, "{e}"),
            TrainError::Dsp(e) => write!(f, "{e}"),
        }
    }
}

impl From<GraphError> for TrainError {
    fn from(e: GraphError) -> Self {
        TrainError::Graph(e)
    }
}

impl From<dsp::DspError> for TrainError {
    fn from(e: dsp::DspError) -> Self {
        TrainError::Dsp(e)
    }
}

/// Hyperparameters. Paper-scale values are lr 1e-3, batch 20 and 700/1500
/// epochs; the desk defaults below scale the epochs and batch down while
/// keeping the loss coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_pae: usize,
    pub epochs_dae: usize,
    pub theta1: f64,
    pub theta2: f64,
    pub alignment_weight: f64,
    pub seed: u64,
    pub feature_kind: FeatureKind,
    pub sample_rate: u32,
    /// Train both pre-tasks; false is the single-pre-task ablation.
    pub multi_task: bool,
    /// Ramp the KL coefficient linearly over the first 10% of steps.
    pub kl_warmup: bool,
    /// Alternate the two pre-tasks between steps instead of summing them.
    pub alternate_tasks: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 4,
            epochs_pae: 50,
            epochs_dae: 100,
            theta1: 1e-3,
            theta2: 1e-3,
            alignment_weight: 1.0,
            seed: 42,
            feature_kind: FeatureKind::LogMagnitude,
            sample_rate: 16_000,
            multi_task: true,
            kl_warmup: true,
            alternate_tasks: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.lr <= 0.0 || self.batch_size == 0 || self.epochs_pae == 0 || self.epochs_dae == 0 {
            return Err(TrainError::BadConfig(
                "lr, batch_size and epoch counts must be positive".into(),
            ));
        }
        if self.theta1 < 0.0 || self.theta2 < 0.0 || self.alignment_weight < 0.0 {
            return Err(TrainError::BadConfig("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// One PAE training example: the clean utterance and its reverberant mixture.
#[derive(Debug, Clone)]
pub struct PaePair {
    pub clean: Waveform,
    pub mixture: Waveform,
}

/// Per-step loss record. `total` is exactly
/// theta1_eff*kl + recon + cycle + alignment_weight*alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub theta1_eff: f64,
    pub kl: f64,
    pub recon: f64,
    pub cycle: f64,
    pub alignment: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub kl: f64,
    pub recon: f64,
    pub cycle: f64,
    pub alignment: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossReport {
    pub steps: Vec<StepRecord>,
    pub alignment_weight: f64,
}

impl LossReport {
    pub fn epoch_summaries(&self) -> Vec<EpochRecord> {
        let mut out: Vec<EpochRecord> = Vec::new();
        for s in &self.steps {
            match out.last_mut() {
                Some(e) if e.epoch == s.epoch => {
                    e.kl += s.kl;
                    e.recon += s.recon;
                    e.cycle += s.cycle;
                    e.alignment += s.alignment;
                    e.total += s.total;
                }
                _ => out.push(EpochRecord {
                    epoch: s.epoch,
                    kl: s.kl,
                    recon: s.recon,
                    cycle: s.cycle,
                    alignment: s.alignment,
                    total: s.total,
                }),
            }
        }
        for e in &mut out {
            let n = self.steps.iter().filter(|s| s.epoch == e.epoch).count() as f64;
            e.kl /= n;
            e.recon /= n;
            e.cycle /= n;
            e.alignment /= n;
            e.total /= n;
        }
        out
    }

    pub fn first_total(&self) -> Option<f64> {
        self.steps.first().map(|s| s.total)
    }

    pub fn last_total(&self) -> Option<f64> {
        self.steps.last().map(|s| s.total)
    }
}

/// Progress sink; the CLI prints these to stderr.
pub type ProgressFn<'a> = &'a mut dyn FnMut(&StepRecord);

fn effective_theta1(config: &TrainConfig, step: u64, total_steps: u64) -> f64 {
    if !config.kl_warmup {
        return config.theta1;
    }
    let ramp = (total_steps / 10).max(1);
    let f = ((step + 1) as f64 / ramp as f64).min(1.0);
    config.theta1 * f
}

fn batch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(derive_seed(seed, "batch-order", epoch as u64));
    rng.shuffle(&mut order);
    order
}

struct PaeItemFeatures {
    enc_clean: Tensor,
    enc_mix: Tensor,
    target_clean: Tensor,
}

/// In-graph reparameterization: z = mu + exp(logvar/2) .* eta.
fn reparam_node(g: &mut Graph, mu: NodeId, logvar: NodeId, eta: Tensor) -> Result<NodeId, GraphError> {
    let half = g.scale(logvar, 0.5);
    let std = g.exp(half);
    let eta = g.constant(eta);
    let noise = g.mul(std, eta)?;
    g.add(mu, noise)
}

/// Re-encode a decoded log-magnitude estimate with the PAE encoder,
/// returning the mu head. Converts through the differentiable MFCC chain
/// when the encoder consumes MFCCs.
fn reencode_mu(
    g: &mut Graph,
    pae: &PaeModel,
    mfcc: Option<&MfccTransform>,
    decoded_logmag: NodeId,
) -> Result<NodeId, GraphError> {
    let enc_in = match mfcc {
        Some(t) => t.apply(g, decoded_logmag)?,
        None => decoded_logmag,
    };
    let (mu, _) = pae.encoder.forward(g, &pae.params, enc_in)?;
    Ok(mu)
}

struct ItemTerms {
    kl: f64,
    recon: f64,
    cycle: f64,
    alignment: f64,
}

/// Train the PAE on clean/mixture pairs. Returns the loss report and the
/// optimizer state for checkpointing.
pub fn train_pae(
    model: &mut PaeModel,
    pairs: &[PaePair],
    config: &TrainConfig,
    mut progress: Option<ProgressFn<'_>>,
) -> Result<(LossReport, AdamState), TrainError> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::EmptyDataset("PAE pairs"));
    }
    model.multi_task = config.multi_task;
    let mfcc = match config.feature_kind {
        FeatureKind::Mfcc => Some(MfccTransform::new(&model.config).map_err(dsp::DspError::from)?),
        FeatureKind::LogMagnitude => None,
    };

    let items: Vec<PaeItemFeatures> = pairs
        .iter()
        .map(|p| {
            Ok(PaeItemFeatures {
                enc_clean: feature_to_tensor(&model.config.encoder_features(&p.clean)?),
                enc_mix: feature_to_tensor(&model.config.encoder_features(&p.mixture)?),
                target_clean: feature_to_tensor(&model.config.target_features(&p.clean)?),
            })
        })
        .collect::<Result<_, dsp::DspError>>()?;

    let steps_per_epoch = pairs.len().div_ceil(config.batch_size);
    let total_steps = (config.epochs_pae * steps_per_epoch) as u64;
    let mut adam = AdamState::new(&model.params, config.lr);
    let mut report = LossReport { steps: Vec::new(), alignment_weight: config.alignment_weight };
    let mut step: u64 = 0;
    let mut noise_counter: u64 = 0;

    for epoch in 0..config.epochs_pae {
        let order = batch_order(items.len(), config.seed, epoch);
        for batch in order.chunks(config.batch_size) {
            let theta1 = effective_theta1(config, step, total_steps);
            // Sum mode optimizes both pre-tasks every step; alternation mode
            // optimizes task 1 on even steps and task 2 on odd steps. The
            // clean-latent subgraph always exists since task 2 consumes it.
            let include_task1 =
                !config.multi_task || !config.alternate_tasks || step % 2 == 0;
            let include_task2 = config.multi_task && (!config.alternate_tasks || step % 2 == 1);

            model.params.zero_grads();
            let mut sums = ItemTerms { kl: 0.0, recon: 0.0, cycle: 0.0, alignment: 0.0 };
            for &idx in batch {
                let item = &items[idx];
                let mut g = Graph::new();
                let terms = pae_item_loss(
                    &mut g,
                    model,
                    mfcc.as_ref(),
                    item,
                    config,
                    theta1,
                    include_task1,
                    include_task2,
                    &mut noise_counter,
                )?;
                g.accumulate_grads_into(&mut model.params, 1.0 / batch.len() as f64);
                sums.kl += terms.kl;
                sums.recon += terms.recon;
                sums.cycle += terms.cycle;
            }
            let n = batch.len() as f64;
            let (kl, recon, cycle) = (sums.kl / n, sums.recon / n, sums.cycle / n);
            let total = loss::masking_loss_value(kl, recon, cycle, theta1);
            let record = StepRecord {
                step,
                epoch,
                theta1_eff: theta1,
                kl,
                recon,
                cycle,
                alignment: 0.0,
                total,
            };
            if !total.is_finite() || model.params.any_non_finite_grad() {
                return Err(TrainError::NonFiniteLoss { step });
            }
            adam_step(&mut model.params, &mut adam);
            if let Some(cb) = progress.as_deref_mut() {
                cb(&record);
            }
            report.steps.push(record);
            step += 1;
        }
    }
    Ok((report, adam))
}

#[allow(clippy::too_many_arguments)]
fn pae_item_loss(
    g: &mut Graph,
    model: &PaeModel,
    mfcc: Option<&MfccTransform>,
    item: &PaeItemFeatures,
    config: &TrainConfig,
    theta1: f64,
    include_task1: bool,
    include_task2: bool,
    noise_counter: &mut u64,
) -> Result<ItemTerms, TrainError> {
    let latent_shape = [item.enc_clean.shape()[0], model.config.latent_dim];
    let target = g.constant(item.target_clean.clone());

    // Task 1: clean-speech latent representation. Built even when its loss
    // is excluded, because task 2 consumes the clean latent sample.
    let x_clean = g.constant(item.enc_clean.clone());
    let (mu1, lv1) = model.encoder.forward(g, &model.params, x_clean)?;
    let kl1 = loss::kl_loss(g, mu1, lv1)?;
    let eta1 = sample_noise(&latent_shape, derive_seed(config.seed, "pae-noise", *noise_counter));
    *noise_counter += 1;
    let z1 = reparam_node(g, mu1, lv1, eta1)?;
    let s_hat1 = model.decoder.forward(g, &model.params, z1)?;
    let ls1 = loss::recon_loss(g, target, s_hat1)?;
    let mu1_re = reencode_mu(g, model, mfcc, s_hat1)?;
    let cyc1 = loss::cycle_loss(g, target, s_hat1, z1, mu1_re, config.theta2)?;
    let total1 = loss::masking_loss(g, kl1, ls1, cyc1, theta1)?;

    let mut terms = ItemTerms { kl: 0.0, recon: 0.0, cycle: 0.0, alignment: 0.0 };
    let mut total: Option<NodeId> = None;
    if include_task1 {
        terms.kl += g.value(kl1).item();
        terms.recon += g.value(ls1).item();
        terms.cycle += g.value(cyc1).item();
        total = Some(total1);
    }

    // Task 2: mask estimation on the mixture latent.
    if include_task2 {
        let x_mix = g.constant(item.enc_mix.clone());
        let (mu2, lv2) = model.encoder.forward(g, &model.params, x_mix)?;
        let kl2 = loss::kl_loss(g, mu2, lv2)?;
        let eta2 = sample_noise(&latent_shape, derive_seed(config.seed, "pae-noise", *noise_counter));
        *noise_counter += 1;
        let z2 = reparam_node(g, mu2, lv2, eta2)?;
        let (s_lat, _, _) = model.masking.forward(g, &model.params, z2)?;
        // The decoder sees the masked mixture latent averaged with the clean
        // latent sample from task 1.
        let summed = g.add(s_lat, z1)?;
        let averaged = g.scale(summed, 0.5);
        let s_hat2 = model.decoder.forward(g, &model.params, averaged)?;
        let ls2 = loss::recon_loss(g, target, s_hat2)?;
        let mu2_re = reencode_mu(g, model, mfcc, s_hat2)?;
        let cyc2 = loss::cycle_loss(g, target, s_hat2, z1, mu2_re, config.theta2)?;
        let total2 = loss::masking_loss(g, kl2, ls2, cyc2, theta1)?;
        terms.kl += g.value(kl2).item();
        terms.recon += g.value(ls2).item();
        terms.cycle += g.value(cyc2).item();
        total = Some(match total {
            Some(t1) => g.add(t1, total2)?,
            None => total2,
        });
    }

    let total = total.expect("at least one task active");
    g.backward(total)?;
    Ok(terms)
}

/// Frozen-PAE latent target for one mixture: encode with E1 (mu path, no
/// sampling) and, for multi-task models, pass through the masking module.
pub fn pae_masked_latent(pae: &PaeModel, enc_mix: &Tensor) -> Result<Tensor, GraphError> {
    let mut g = Graph::new();
    let x = g.constant(enc_mix.clone());
    let (mu, _) = pae.encoder.forward(&mut g, &pae.params, x)?;
    if pae.multi_task {
        let (s_lat, _, _) = pae.masking.forward(&mut g, &pae.params, mu)?;
        Ok(g.value(s_lat).clone())
    } else {
        Ok(g.value(mu).clone())
    }
}

/// Train the DAE on unlabeled mixtures against a frozen PAE.
pub fn train_dae(
    dae: &mut DaeModel,
    pae: &PaeModel,
    mixtures: &[Waveform],
    config: &TrainConfig,
    mut progress: Option<ProgressFn<'_>>,
) -> Result<(LossReport, AdamState), TrainError> {
    config.validate()?;
    if mixtures.is_empty() {
        return Err(TrainError::EmptyDataset("DAE mixtures"));
    }
    struct DaeItem {
        enc_mix: Tensor,
        target_mix: Tensor,
        align_target: Tensor,
    }
    let items: Vec<DaeItem> = mixtures
        .iter()
        .map(|wave| {
            let enc_mix = feature_to_tensor(&dae.config.encoder_features(wave)?);
            let target_mix = feature_to_tensor(&dae.config.target_features(wave)?);
            let align_target =
                pae_masked_latent(pae, &enc_mix).map_err(TrainError::Graph)?;
            Ok(DaeItem { enc_mix, target_mix, align_target })
        })
        .collect::<Result<_, TrainError>>()?;

    let steps_per_epoch = mixtures.len().div_ceil(config.batch_size);
    let total_steps = (config.epochs_dae * steps_per_epoch) as u64;
    let mut adam = AdamState::new(&dae.params, config.lr);
    let mut report = LossReport { steps: Vec::new(), alignment_weight: config.alignment_weight };
    let mut step: u64 = 0;
    let mut noise_counter: u64 = 0;

    for epoch in 0..config.epochs_dae {
        let order = batch_order(items.len(), derive_seed(config.seed, "dae", 0), epoch);
        for batch in order.chunks(config.batch_size) {
            let theta1 = effective_theta1(config, step, total_steps);
            dae.params.zero_grads();
            let mut sums = ItemTerms { kl: 0.0, recon: 0.0, cycle: 0.0, alignment: 0.0 };
            for &idx in batch {
                let item = &items[idx];
                let mut g = Graph::new();
                let latent_shape = [item.enc_mix.shape()[0], dae.config.latent_dim];
                let x = g.constant(item.enc_mix.clone());
                let (mu, lv) = dae.encoder.forward(&mut g, &dae.params, x)?;
                let kl = loss::kl_loss(&mut g, mu, lv)?;
                let eta = sample_noise(
                    &latent_shape,
                    derive_seed(config.seed, "dae-noise", noise_counter),
                );
                noise_counter += 1;
                let z = reparam_node(&mut g, mu, lv, eta)?;
                let y_hat = dae.decoder.forward(&mut g, &dae.params, z)?;
                let target = g.constant(item.target_mix.clone());
                let recon = loss::recon_loss(&mut g, target, y_hat)?;
                let align_const = g.constant(item.align_target.clone());
                let align = g.mse(z, align_const)?;
                let weighted_kl = g.scale(kl, theta1);
                let weighted_align = g.scale(align, config.alignment_weight);
                let partial = g.add(weighted_kl, recon)?;
                let total = g.add(partial, weighted_align)?;
                g.backward(total)?;
                g.accumulate_grads_into(&mut dae.params, 1.0 / batch.len() as f64);
                sums.kl += g.value(kl).item();
                sums.recon += g.value(recon).item();
                sums.alignment += g.value(align).item();
            }
            let n = batch.len() as f64;
            let (kl, recon, alignment) = (sums.kl / n, sums.recon / n, sums.alignment / n);
            let total = theta1 * kl + recon + config.alignment_weight * alignment;
            let record = StepRecord {
                step,
                epoch,
                theta1_eff: theta1,
                kl,
                recon,
                cycle: 0.0,
                alignment,
                total,
            };
            if !total.is_finite() || dae.params.any_non_finite_grad() {
                return Err(TrainError::NonFiniteLoss { step });
            }
            adam_step(&mut dae.params, &mut adam);
            if let Some(cb) = progress.as_deref_mut() {
                cb(&record);
            }
            report.steps.push(record);
            step += 1;
        }
    }
    Ok((report, adam))
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnhanceError {
    SampleRateMismatch { input: u32, model: u32 },
    ConfigMismatch(String),
    Graph(GraphError),
    Dsp(dsp::DspError),
}

impl core::fmt::Display for EnhanceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EnhanceError::SampleRateMismatch { input, model } => {
                write!(f, "input sample rate {input} differs from training rate {model}")
            }
            EnhanceError::ConfigMismatch(m) => write!(f, "model configs incompatible: {m}"),
            EnhanceError::Graph(e) => write!(f, "{e}"),
            EnhanceError::Dsp(e) => write!(f, "{e}"),
        }
    }
}

impl From<GraphError> for EnhanceError {
    fn from(e: GraphError) -> Self {
        EnhanceError::Graph(e)
    }
}

impl From<dsp::DspError> for EnhanceError {
    fn from(e: dsp::DspError) -> Self {
        EnhanceError::Dsp(e)
    }
}

/// Enhance a reverberant mixture: E2 mu (no sampling), the PAE masking
/// module (unless single-task), D1, then magnitude reconstruction with the
/// mixture phase. Output length equals input length.
pub fn enhance(mixture: &Waveform, pae: &PaeModel, dae: &DaeModel) -> Result<Waveform, EnhanceError> {
    if mixture.sample_rate() != dae.config.sample_rate {
        return Err(EnhanceError::SampleRateMismatch {
            input: mixture.sample_rate(),
            model: dae.config.sample_rate,
        });
    }
    if pae.config != dae.config {
        return Err(EnhanceError::ConfigMismatch(alloc::format!(
            "PAE {:?}/{} vs DAE {:?}/{}",
            pae.config.feature_kind,
            pae.config.input_dim,
            dae.config.feature_kind,
            dae.config.input_dim
        )));
    }
    let spec = dsp::stft(mixture, dae.config.frame_size, dae.config.hop)?;
    let feats = feature_to_tensor(&dae.config.encoder_features(mixture)?);

    let mut g = Graph::new();
    let x = g.constant(feats);
    let (mu, _) = dae.encoder.forward(&mut g, &dae.params, x)?;
    let latent = if pae.multi_task {
        let (s_lat, _, _) = pae.masking.forward(&mut g, &pae.params, mu)?;
        s_lat
    } else {
        mu
    };
    let logmag = pae.decoder.forward(&mut g, &pae.params, latent)?;
    let (t, d) = g.value(logmag).dims2();
    let feat = dsp::FeatureMatrix::from_parts(
        g.value(logmag).data().to_vec(),
        t,
        d,
        FeatureKind::LogMagnitude,
    );
    let mags = dsp::log_magnitude_to_magnitudes(&feat, spec.geometry, dsp::LOG_EPS)?;
    let enhanced_spec = spec.with_magnitudes(&mags)?;
    let full = dsp::istft(&enhanced_spec)?;
    let trimmed: Vec<f64> = full.samples()[..mixture.len()].to_vec();
    Ok(Waveform::new(trimmed, mixture.sample_rate()).expect("trimmed waveform"))
}

/// Oracle-mask ceiling: dereverberate and denoise with masks computed from
/// the stored clean and interference components, bypassing the networks.
pub fn enhance_with_oracle_masks(
    clean: &Waveform,
    interference: &Waveform,
    mixture: &Waveform,
    frame_size: usize,
    hop: usize,
) -> Result<Waveform, EnhanceError> {
    let spec_s = dsp::stft(clean, frame_size, hop)?;
    let spec_i = dsp::stft(interference, frame_size, hop)?;
    let spec_y = dsp::stft(mixture, frame_size, hop)?;
    let to_tensor = |m: &dsp::MagnitudeSpectrogram| {
        Tensor::from_vec(&[m.frames(), m.bins()], m.values().to_vec()).expect("mag tensor")
    };
    let s = to_tensor(&spec_s.magnitudes());
    let i = to_tensor(&spec_i.magnitudes());
    let y = to_tensor(&spec_y.magnitudes());
    let dm = masking::oracle_dm(&s, &i, &y, masking::MASK_EPS)?;
    let y_d = masking::apply_dm(&y, &dm)?;
    let erm = masking::oracle_erm(&s, &y_d, masking::MASK_EPS)?;
    let s_hat = masking::compose_estimate(&y, &dm, &erm, 0.25)?;
    let mags = dsp::MagnitudeSpectrogram::from_values(
        s_hat.data().to_vec(),
        spec_y.frames(),
        spec_y.bins(),
        spec_y.geometry,
    )?;
    let enhanced = spec_y.with_magnitudes(&mags)?;
    let full = dsp::istft(&enhanced)?;
    let trimmed: Vec<f64> = full.samples()[..mixture.len()].to_vec();
    Ok(Waveform::new(trimmed, mixture.sample_rate()).expect("trimmed waveform"))
}
