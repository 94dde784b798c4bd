//! End-to-end supervised training.
//!
//! Every optimization step draws the next V messages of each of the Z
//! training sequences (Mersenne-twister streams; test data comes from a
//! Tausworthe generator so the two sets share no construction rule),
//! encodes them with carried recurrent states, interleaves the Z x V
//! blocks into one channel waveform in sequence-major order, propagates
//! it with freshly sampled noise, de-interleaves, decodes, and averages
//! the cross entropy over the mini-batch. Backpropagation runs through
//! the receiver, the channel (noise frozen) and the transmitter; one
//! Adam update is applied. Carried states are detached at step
//! boundaries and re-initialized to zero every `reinit_period` steps.

use rand::Rng;
use rayon::prelude::*;

use crate::autoencoder::{
    rx_backward, rx_decode_traced, tx_backward, tx_encode, tx_encode_traced, AutoencoderDims,
    TransceiverParams,
};
use crate::channel::{Channel, NoiseRealization, Waveform};
use crate::estimator::{self, WeightVector, WindowConfig};
use crate::rng::{derive_seed, noise_rng, MessageRng, Mt19937, RngFamily};
use crate::{Error, Result};

/// Floor inside log() so an exactly-zero probability cannot produce
/// an infinite loss.
pub const LOG_FLOOR: f64 = 1e-30;

/// Sequences per gradient-accumulation chunk. Fixed (not tied to the
/// thread count) so reduction order, and therefore every bit of the
/// result, is schedule-independent.
const GRAD_CHUNK: usize = 8;

/// Stream ids for deriving isolated noise/message generators.
const STREAM_CALIBRATION: u64 = 0x0C_A1_1B;
const STREAM_VALIDATION_MSGS: u64 = 0x7A_05_88;
const STREAM_VALIDATION_NOISE: u64 = 1 << 62;

/// Cross entropy against a one-hot target: -log p[target].
pub fn cross_entropy(target: usize, p: &[f64]) -> f64 {
    -p[target].max(LOG_FLOOR).ln()
}

/// I.i.d. uniform messages over {0..alphabet-1} from the given
/// generator family.
pub fn generate_messages(
    count: usize,
    family: RngFamily,
    seed: u64,
    alphabet: usize,
) -> Vec<usize> {
    let mut rng = MessageRng::new(family, seed);
    (0..count).map(|_| rng.gen_range(0..alphabet)).collect()
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam state over the transceiver's arrays (bias-corrected moments).
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &TransceiverParams) -> Self {
        let shapes: Vec<usize> = params.named_arrays().iter().map(|(_, _, a)| a.len()).collect();
        Adam {
            cfg,
            step: 0,
            m: shapes.iter().map(|&l| vec![0.0; l]).collect(),
            v: shapes.iter().map(|&l| vec![0.0; l]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut TransceiverParams, grads: &TransceiverParams) {
        self.step += 1;
        let t = self.step;
        let grad_arrays: Vec<Vec<f64>> =
            grads.named_arrays().iter().map(|(_, _, a)| a.to_vec()).collect();
        for (((arr, g), m), v) in
            params.arrays_mut().into_iter().zip(&grad_arrays).zip(&mut self.m).zip(&mut self.v)
        {
            for i in 0..arr.len() {
                let (theta, mi, vi) =
                    adam_scalar_step(arr[i], m[i], v[i], g[i], t, &self.cfg);
                arr[i] = theta;
                m[i] = mi;
                v[i] = vi;
            }
        }
    }
}

/// One scalar Adam update with bias-corrected first and second moments.
pub fn adam_scalar_step(
    theta: f64,
    m: f64,
    v: f64,
    g: f64,
    t: u64,
    cfg: &AdamConfig,
) -> (f64, f64, f64) {
    let m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    let v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    let m_hat = m / (1.0 - cfg.beta1.powi(t as i32));
    let v_hat = v / (1.0 - cfg.beta2.powi(t as i32));
    (theta - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps), m, v)
}

/// Training schedule and data-generation parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Number of parallel training sequences Z.
    pub sequences: usize,
    /// Messages per sequence T_train (the stream each sequence draws from).
    pub train_length: usize,
    /// Messages per sequence consumed per step, V.
    pub batch_messages: usize,
    /// Carried states are zeroed every this many steps.
    pub reinit_period: usize,
    pub max_iters: usize,
    pub adam: AdamConfig,
    pub seed_train: u64,
    pub seed_test: u64,
    /// Validation cadence in steps (0 disables validation).
    pub validate_every: usize,
    /// Estimated messages per validation run.
    pub val_messages: usize,
    /// Sliding-window length used for validation BLER.
    pub val_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sequences: 250,
            train_length: 1_000_000,
            batch_messages: 10,
            reinit_period: 100,
            max_iters: 100_000,
            adam: AdamConfig::default(),
            seed_train: 1,
            seed_test: 2,
            validate_every: 1000,
            val_messages: 1000,
            val_window: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sequences < 1
            || self.train_length < 1
            || self.batch_messages < 1
            || self.reinit_period < 1
        {
            return Err(Error::config("sequence counts and periods must be >= 1"));
        }
        if self.batch_messages.saturating_mul(self.max_iters) > self.train_length {
            return Err(Error::config(
                "batch_messages * max_iters exceeds the training stream length",
            ));
        }
        if self.validate_every > 0 && (self.val_window < 1 || self.val_messages < self.val_window)
        {
            return Err(Error::config("validation window larger than validation sequence"));
        }
        Ok(())
    }
}

/// Mini-batch: V message indices per training sequence.
pub type Batch = Vec<Vec<usize>>;

/// Carried recurrent states, per sequence and direction.
#[derive(Debug, Clone)]
pub struct Carried {
    tx_fwd: Vec<Vec<f64>>,
    tx_bwd: Vec<Vec<f64>>,
    rx_fwd: Vec<Vec<f64>>,
    rx_bwd: Vec<Vec<f64>>,
}

impl Carried {
    fn zeros(dims: AutoencoderDims, sequences: usize) -> Self {
        Carried {
            tx_fwd: vec![vec![0.0; dims.block_len]; sequences],
            tx_bwd: vec![vec![0.0; dims.block_len]; sequences],
            rx_fwd: vec![vec![0.0; dims.rx_state()]; sequences],
            rx_bwd: vec![vec![0.0; dims.rx_state()]; sequences],
        }
    }

    fn reset(&mut self) {
        for s in self
            .tx_fwd
            .iter_mut()
            .chain(self.tx_bwd.iter_mut())
            .chain(self.rx_fwd.iter_mut())
            .chain(self.rx_bwd.iter_mut())
        {
            s.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Result of one full batch pass.
pub struct BatchPass {
    pub loss: f64,
    pub grads: Option<TransceiverParams>,
    pub carried_out: Carried,
}

/// Sequence-major interleave of per-sequence blocks into one waveform.
fn interleave(blocks: &[Vec<Vec<f64>>], block_len: usize, rate: f64) -> Waveform {
    let total: usize = blocks.iter().map(|b| b.len() * block_len).sum();
    let mut samples = Vec::with_capacity(total);
    for seq in blocks {
        for b in seq {
            samples.extend_from_slice(b);
        }
    }
    Waveform::new(samples, rate)
}

fn deinterleave(samples: &[f64], sequences: usize, per_seq: usize, block_len: usize) -> Vec<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(sequences);
    let mut cursor = 0;
    for _ in 0..sequences {
        let mut seq = Vec::with_capacity(per_seq);
        for _ in 0..per_seq {
            seq.push(samples[cursor..cursor + block_len].to_vec());
            cursor += block_len;
        }
        out.push(seq);
    }
    out
}

/// Encodes, propagates and decodes one mini-batch, returning the
/// average cross entropy and (optionally) parameter gradients under the
/// frozen noise realization. Gradient accumulation runs over fixed-size
/// sequence chunks reduced in index order, so results do not depend on
/// the thread schedule.
pub fn batch_pass(
    params: &TransceiverParams,
    batch: &Batch,
    carried: &Carried,
    channel: &Channel,
    noise: &NoiseRealization,
    want_grads: bool,
) -> Result<BatchPass> {
    let dims = params.dims;
    let z = batch.len();
    let v = batch.first().map(|b| b.len()).unwrap_or(0);
    if z == 0 || v == 0 {
        return Err(Error::Empty("empty batch".into()));
    }
    let n = dims.block_len;
    let rate = channel.config().sim_rate();
    let total = z * v;
    let weight = 1.0 / total as f64;

    // Transmitter forward over every sequence.
    let tx_out: Vec<_> = (0..z)
        .into_par_iter()
        .map(|i| tx_encode_traced(params, &batch[i], &carried.tx_fwd[i], &carried.tx_bwd[i]))
        .collect();

    let wave = interleave(
        &tx_out.iter().map(|(b, _)| b.clone()).collect::<Vec<_>>(),
        n,
        rate,
    );

    // Channel.
    let (rx_wave, ch_trace) = if want_grads {
        let (w, t) = channel.forward_traced(&wave, noise)?;
        (w, Some(t))
    } else {
        (channel.forward_with(&wave, noise)?, None)
    };
    let rx_blocks = deinterleave(&rx_wave.samples, z, v, n);

    // Receiver: loss, logit gradients, BPTT, in deterministic chunks.
    let indices: Vec<usize> = (0..z).collect();
    let rx_chunks: Vec<_> = indices
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut chunk_grads =
                if want_grads { Some(TransceiverParams::zeros(dims)) } else { None };
            let mut chunk_loss = 0.0;
            let mut per_seq = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (probs, trace) =
                    rx_decode_traced(params, &rx_blocks[i], &carried.rx_fwd[i], &carried.rx_bwd[i]);
                for (p, &m) in probs.iter().zip(&batch[i]) {
                    chunk_loss += cross_entropy(m, p);
                }
                let grad_blocks = if let Some(g) = chunk_grads.as_mut() {
                    let grad_logits: Vec<Vec<f64>> = probs
                        .iter()
                        .zip(&batch[i])
                        .map(|(p, &m)| {
                            p.iter()
                                .enumerate()
                                .map(|(j, &pj)| {
                                    weight * (pj - if j == m { 1.0 } else { 0.0 })
                                })
                                .collect()
                        })
                        .collect();
                    rx_backward(params, &trace, &grad_logits, g)
                } else {
                    Vec::new()
                };
                per_seq.push((
                    grad_blocks,
                    trace.last_fwd_state().to_vec(),
                    trace.last_bwd_state().to_vec(),
                ));
            }
            (chunk_grads, chunk_loss, per_seq)
        })
        .collect();

    let mut loss = 0.0;
    let mut carried_out = Carried::zeros(dims, z);
    let mut grad_blocks_all: Vec<Vec<Vec<f64>>> = Vec::with_capacity(z);
    let mut grads = if want_grads { Some(TransceiverParams::zeros(dims)) } else { None };
    for (chunk_grads, chunk_loss, per_seq) in rx_chunks {
        loss += chunk_loss;
        if let (Some(total_g), Some(cg)) = (grads.as_mut(), chunk_grads) {
            accumulate_params(total_g, &cg);
        }
        for (gb, f, b) in per_seq {
            let i = grad_blocks_all.len();
            carried_out.rx_fwd[i] = f;
            carried_out.rx_bwd[i] = b;
            grad_blocks_all.push(gb);
        }
    }
    loss *= weight;

    // Transmitter carried states come from the forward traces.
    for (i, (_, trace)) in tx_out.iter().enumerate() {
        carried_out.tx_fwd[i] = trace.last_fwd_state().to_vec();
        carried_out.tx_bwd[i] = trace.last_bwd_state().to_vec();
    }

    if let Some(total_g) = grads.as_mut() {
        // Through the channel.
        let grad_wave = interleave(&grad_blocks_all, n, rate);
        let grad_tx_wave = channel.backward(&ch_trace.expect("trace captured"), &grad_wave.samples);
        let grad_tx_blocks = deinterleave(&grad_tx_wave, z, v, n);

        // Transmitter BPTT, same deterministic chunking.
        let tx_chunks: Vec<TransceiverParams> = indices
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut cg = TransceiverParams::zeros(dims);
                for &i in chunk {
                    tx_backward(params, &tx_out[i].1, &grad_tx_blocks[i], &mut cg);
                }
                cg
            })
            .collect();
        for cg in &tx_chunks {
            accumulate_params(total_g, cg);
        }
    }

    Ok(BatchPass { loss, grads, carried_out })
}

fn accumulate_params(acc: &mut TransceiverParams, other: &TransceiverParams) {
    let src: Vec<Vec<f64>> = other.named_arrays().iter().map(|(_, _, a)| a.to_vec()).collect();
    for (dst, s) in acc.arrays_mut().into_iter().zip(&src) {
        for (d, x) in dst.iter_mut().zip(s) {
            *d += x;
        }
    }
}

/// Per-step record of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub val_bler: Option<f64>,
}

/// Outcome of a training run.
pub struct TrainOutcome {
    /// Parameters after the final step.
    pub params: TransceiverParams,
    /// Parameters at the best validation BLER (final params if
    /// validation never ran).
    pub best_params: TransceiverParams,
    pub best_val_bler: Option<f64>,
    pub trace: Vec<TraceRow>,
}

/// Statistics returned by one step.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub step: usize,
    pub loss: f64,
}

/// Driver owning the parameters, optimizer state, carried states and
/// per-sequence message streams.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    channel: &'a Channel,
    params: TransceiverParams,
    adam: Adam,
    msg_rngs: Vec<Mt19937>,
    carried: Carried,
    step_idx: usize,
    consumed: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, channel: &'a Channel, dims: AutoencoderDims) -> Result<Self> {
        cfg.validate()?;
        dims.validate()?;
        let params = TransceiverParams::init(dims, derive_seed(cfg.seed_train, 0))?;
        Self::with_params(cfg, channel, params)
    }

    /// Resumes from existing parameters (fresh optimizer state).
    pub fn with_params(
        cfg: TrainConfig,
        channel: &'a Channel,
        params: TransceiverParams,
    ) -> Result<Self> {
        cfg.validate()?;
        let dims = params.dims;
        let adam = Adam::new(cfg.adam, &params);
        let msg_rngs = (0..cfg.sequences)
            .map(|i| Mt19937::seed_u32(derive_seed(cfg.seed_train, 1 + i as u64) as u32))
            .collect();
        let carried = Carried::zeros(dims, cfg.sequences);

        // ADC calibration once per configuration, from a representative
        // waveform of the initial transmitter.
        if channel.adc_delta().is_none() {
            let mut rng = noise_rng(cfg.seed_train, STREAM_CALIBRATION);
            let msgs: Vec<usize> = (0..cfg.sequences.max(16) * cfg.batch_messages)
                .map(|_| rng.gen_range(0..dims.alphabet))
                .collect();
            let blocks = tx_encode(
                &params,
                &msgs,
                &params.tx_zero_state(),
                &params.tx_zero_state(),
            );
            let wave = interleave(&[blocks], dims.block_len, channel.config().sim_rate());
            channel.calibrate_adc(&wave);
        }

        Ok(Trainer { cfg, channel, params, adam, msg_rngs, carried, step_idx: 0, consumed: 0 })
    }

    pub fn params(&self) -> &TransceiverParams {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn step_index(&self) -> usize {
        self.step_idx
    }

    /// Total draws consumed from the Mersenne training streams.
    pub fn train_stream_draws(&self) -> u64 {
        self.msg_rngs.iter().map(|r| r.draws()).sum()
    }

    /// Zeroes all carried recurrent states.
    pub fn reset_carried_states(&mut self) {
        self.carried.reset();
    }

    fn next_batch(&mut self) -> Result<Batch> {
        let v = self.cfg.batch_messages;
        if self.consumed + v > self.cfg.train_length {
            return Err(Error::config("training message stream exhausted"));
        }
        let m = self.params.dims.alphabet;
        let batch = self
            .msg_rngs
            .iter_mut()
            .map(|rng| (0..v).map(|_| rng.gen_range(0..m)).collect())
            .collect();
        self.consumed += v;
        Ok(batch)
    }

    /// One optimization step: encode, propagate, decode, backpropagate,
    /// Adam update. Aborts (parameters untouched) on non-finite loss or
    /// gradients.
    pub fn step(&mut self) -> Result<StepStats> {
        if self.step_idx % self.cfg.reinit_period == 0 {
            self.carried.reset();
        }
        let batch = self.next_batch()?;
        let wave_len = self.cfg.sequences * self.cfg.batch_messages * self.params.dims.block_len;
        let mut rng = noise_rng(self.cfg.seed_train, self.step_idx as u64);
        let noise = self.channel.sample_noise(
            wave_len,
            &mut rng,
            Some((self.cfg.seed_train, self.step_idx as u64)),
        );

        let pass = batch_pass(&self.params, &batch, &self.carried, self.channel, &noise, true)?;
        let grads = pass.grads.expect("gradients requested");

        if !pass.loss.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite loss {} at step {}; aborting step",
                pass.loss, self.step_idx
            )));
        }
        if grads.named_arrays().iter().any(|(_, _, a)| a.iter().any(|x| !x.is_finite())) {
            return Err(Error::numeric(format!(
                "non-finite gradient at step {}; aborting step",
                self.step_idx
            )));
        }

        self.adam.update(&mut self.params, &grads);
        self.carried = pass.carried_out;
        let stats = StepStats { step: self.step_idx, loss: pass.loss };
        self.step_idx += 1;
        Ok(stats)
    }

    /// BLER on a held-out Tausworthe sequence with uniform combining
    /// weights. Never touches the Mersenne training streams.
    pub fn validate(&self) -> Result<f64> {
        let w = self.cfg.val_window;
        let estimated = self.cfg.val_messages;
        let cfg = WindowConfig { window: w, estimated };
        let msgs = generate_messages(
            cfg.block_count(),
            RngFamily::Tausworthe,
            derive_seed(self.cfg.seed_test, STREAM_VALIDATION_MSGS),
            self.params.dims.alphabet,
        );
        let z = self.params.tx_zero_state();
        let blocks = tx_encode(&self.params, &msgs, &z, &z);
        let wave = interleave(&[blocks], self.params.dims.block_len, self.channel.config().sim_rate());
        let mut rng =
            noise_rng(self.cfg.seed_train, STREAM_VALIDATION_NOISE | self.step_idx as u64);
        let noise = self.channel.sample_noise(wave.len(), &mut rng, None);
        let rx_wave = self.channel.forward_with(&wave, &noise)?;
        let rx_blocks =
            deinterleave(&rx_wave.samples, 1, cfg.block_count(), self.params.dims.block_len);
        let finals =
            estimator::slide(&self.params, &rx_blocks[0], &cfg, &WeightVector::uniform(w))?;
        estimator::bler(&msgs, &finals)
    }

    /// Runs up to `max_iters` steps. `on_step` observes each trace row
    /// and the current parameters (for checkpoint sinks).
    pub fn run(
        &mut self,
        mut on_step: impl FnMut(&TraceRow, &TransceiverParams),
    ) -> Result<TrainOutcome> {
        let mut trace = Vec::with_capacity(self.cfg.max_iters);
        let mut best_params = self.params.clone();
        let mut best_val: Option<f64> = None;
        for _ in 0..self.cfg.max_iters {
            let stats = self.step()?;
            let mut row = TraceRow { step: stats.step, loss: stats.loss, val_bler: None };
            if self.cfg.validate_every > 0 && (stats.step + 1) % self.cfg.validate_every == 0 {
                let bler = self.validate()?;
                row.val_bler = Some(bler);
                if best_val.map_or(true, |b| bler < b) {
                    best_val = Some(bler);
                    best_params = self.params.clone();
                }
            }
            on_step(&row, &self.params);
            trace.push(row);
        }
        if best_val.is_none() {
            best_params = self.params.clone();
        }
        Ok(TrainOutcome {
            params: self.params.clone(),
            best_params,
            best_val_bler: best_val,
            trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelConfig, MzmModel};

    fn toy_channel(distance_km: f64, noise: bool) -> Channel {
        Channel::new(ChannelConfig {
            distance_km,
            enable_dac_noise: noise,
            enable_rx_noise: noise,
            enable_adc_noise: noise,
            ..ChannelConfig::default()
        })
        .unwrap()
    }

    fn toy_cfg(z: usize, v: usize, iters: usize) -> TrainConfig {
        TrainConfig {
            sequences: z,
            train_length: v * iters.max(1) + v,
            batch_messages: v,
            reinit_period: 100,
            max_iters: iters,
            validate_every: 0,
            val_messages: 100,
            val_window: 2,
            ..TrainConfig::default()
        }
    }

    // -----------------------------------------------------------------------
    // cross entropy
    // -----------------------------------------------------------------------

    #[test]
    fn cross_entropy_known_values() {
        let onehot = [0.0, 1.0, 0.0];
        assert_eq!(cross_entropy(1, &onehot), 0.0);
        let uniform = vec![1.0 / 64.0; 64];
        assert!((cross_entropy(7, &uniform) - 64f64.ln()).abs() < 1e-12);
        assert!((64f64.ln() - 4.1589).abs() < 1e-4);
        let half = [0.5, 0.5];
        assert!((cross_entropy(0, &half) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_floors_zero_probability() {
        let p = [0.0, 1.0];
        let ce = cross_entropy(0, &p);
        assert!(ce.is_finite());
        assert!((ce - -(LOG_FLOOR.ln())).abs() < 1e-9);
    }

    // -----------------------------------------------------------------------
    // message generation
    // -----------------------------------------------------------------------

    #[test]
    fn messages_reproducible_and_family_dependent() {
        let a = generate_messages(100, RngFamily::MersenneTwister, 5, 64);
        let b = generate_messages(100, RngFamily::MersenneTwister, 5, 64);
        let c = generate_messages(100, RngFamily::Tausworthe, 5, 64);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|&m| m < 64));
    }

    #[test]
    fn messages_pass_chi_square_uniformity() {
        // 1e6 draws over M = 64; p-value above 0.001 for both families.
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let chi2 = ChiSquared::new(63.0).unwrap();
        for family in [RngFamily::MersenneTwister, RngFamily::Tausworthe] {
            let msgs = generate_messages(1_000_000, family, 77, 64);
            let mut counts = [0u64; 64];
            for m in msgs {
                counts[m] += 1;
            }
            let expect = 1_000_000.0 / 64.0;
            let stat: f64 =
                counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
            let p_value = 1.0 - chi2.cdf(stat);
            assert!(p_value > 0.001, "{family:?}: chi2 {stat}, p {p_value}");
        }
    }

    // -----------------------------------------------------------------------
    // Adam
    // -----------------------------------------------------------------------

    #[test]
    fn adam_matches_scripted_scalar_recursion() {
        // Three-step oracle frozen from an independent transcription of
        // the bias-corrected recursion (lr 0.1, betas 0.9 / 0.999).
        let cfg = AdamConfig { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let mut theta = 0.5;
        let (mut m, mut v) = (0.0, 0.0);
        let grads = [1.0, -2.0, 0.5];
        let expect = [0.400000001, 0.43661035347207483, 0.45027941967382146];
        for (t, (&g, &e)) in grads.iter().zip(&expect).enumerate() {
            let (th, mi, vi) = adam_scalar_step(theta, m, v, g, t as u64 + 1, &cfg);
            theta = th;
            m = mi;
            v = vi;
            assert!((theta - e).abs() < 1e-15, "step {t}: {theta} vs {e}");
        }
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let channel = toy_channel(0.0, false);
        let mut cfg = toy_cfg(2, 2, 1);
        cfg.adam.lr = 0.0;
        let dims = AutoencoderDims::new(4, 4).unwrap();
        let mut trainer = Trainer::new(cfg, &channel, dims).unwrap();
        let before = trainer.params().clone();
        trainer.step().unwrap();
        assert_eq!(&before, trainer.params());
    }

    // -----------------------------------------------------------------------
    // training behaviour
    // -----------------------------------------------------------------------

    #[test]
    fn initial_loss_is_log_m_with_zero_softmax() {
        let channel = toy_channel(0.0, false);
        let cfg = toy_cfg(3, 4, 1);
        let dims = AutoencoderDims::new(8, 4).unwrap();
        let mut trainer = Trainer::new(cfg, &channel, dims).unwrap();
        // Zero the softmax layer: outputs become exactly uniform.
        trainer.params.rx.w_softmax.fill(0.0);
        trainer.params.rx.b_softmax.iter_mut().for_each(|x| *x = 0.0);
        let stats = trainer.step().unwrap();
        assert!((stats.loss - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let channel = toy_channel(5.0, true);
        let dims = AutoencoderDims::new(4, 4).unwrap();
        let run = || {
            let mut t = Trainer::new(toy_cfg(3, 3, 5), &channel, dims).unwrap();
            (0..5).map(|_| t.step().unwrap().loss).collect::<Vec<f64>>()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn reinit_every_step_matches_manual_state_reset() {
        let channel = toy_channel(2.0, true);
        let dims = AutoencoderDims::new(4, 3).unwrap();

        let mut cfg_a = toy_cfg(2, 3, 4);
        cfg_a.reinit_period = 1;
        let mut a = Trainer::new(cfg_a, &channel, dims).unwrap();

        let mut cfg_b = toy_cfg(2, 3, 4);
        cfg_b.reinit_period = 1_000_000;
        let mut b = Trainer::new(cfg_b, &channel, dims).unwrap();

        for _ in 0..4 {
            b.reset_carried_states();
            let la = a.step().unwrap().loss;
            let lb = b.step().unwrap().loss;
            assert_eq!(la, lb);
        }
    }

    #[test]
    fn validation_leaves_training_stream_untouched() {
        let channel = toy_channel(1.0, true);
        let dims = AutoencoderDims::new(4, 3).unwrap();
        let mut cfg = toy_cfg(2, 2, 3);
        cfg.val_messages = 40;
        cfg.val_window = 2;
        let mut t = Trainer::new(cfg, &channel, dims).unwrap();
        t.step().unwrap();
        let draws_before = t.train_stream_draws();
        let _ = t.validate().unwrap();
        assert_eq!(t.train_stream_draws(), draws_before);
    }

    #[test]
    fn max_iters_zero_returns_initialization() {
        let channel = toy_channel(0.0, false);
        let cfg = toy_cfg(2, 2, 0);
        let dims = AutoencoderDims::new(4, 4).unwrap();
        let mut t = Trainer::new(cfg, &channel, dims).unwrap();
        let init = t.params().clone();
        let out = t.run(|_, _| {}).unwrap();
        assert_eq!(out.params, init);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn stream_exhaustion_is_reported() {
        let channel = toy_channel(0.0, false);
        let mut cfg = toy_cfg(2, 4, 1);
        cfg.train_length = 4; // room for exactly one step
        cfg.max_iters = 1;
        let dims = AutoencoderDims::new(4, 3).unwrap();
        let mut t = Trainer::new(cfg, &channel, dims).unwrap();
        t.step().unwrap();
        assert!(matches!(t.step(), Err(Error::Config(_))));
    }

    #[test]
    fn toy_training_reduces_loss() {
        // Back-to-back noiseless link: the loss should clearly decay
        // from its initial value for almost every seed.
        let channel = Channel::new(ChannelConfig {
            distance_km: 0.0,
            mzm: MzmModel::Identity,
            lpf_bandwidth: 336e9 / 2.0,
            enable_dac_noise: false,
            enable_rx_noise: false,
            enable_adc_noise: false,
            ..ChannelConfig::default()
        })
        .unwrap();
        let dims = AutoencoderDims::new(2, 2).unwrap();
        let mut wins = 0;
        let seeds = 8;
        for seed in 0..seeds {
            let mut cfg = toy_cfg(4, 4, 200);
            cfg.seed_train = 100 + seed;
            cfg.adam.lr = 5e-3;
            let mut t = Trainer::new(cfg, &channel, dims).unwrap();
            let losses: Vec<f64> = (0..200).map(|_| t.step().unwrap().loss).collect();
            let head: f64 = losses[..20].iter().sum::<f64>() / 20.0;
            let tail: f64 = losses[180..].iter().sum::<f64>() / 20.0;
            if tail < head {
                wins += 1;
            }
        }
        assert!(wins >= seeds - 1, "loss decreased in only {wins}/{seeds} seeds");
    }

    // -----------------------------------------------------------------------
    // gradient check through the full step
    // -----------------------------------------------------------------------

    #[test]
    fn batch_gradient_matches_finite_differences() {
        // Toy configuration (M = 2, n = 2, V = 2, Z = 2), noise frozen.
        let channel = toy_channel(1.0, true);
        let dims = AutoencoderDims::new(2, 2).unwrap();
        let mut params = TransceiverParams::init(dims, 99).unwrap();
        // Bias activations away from the clipping and ReLU kinks.
        params.tx.b_fwd.iter_mut().for_each(|b| *b = 0.3);
        params.tx.b_bwd.iter_mut().for_each(|b| *b = 0.3);
        params.rx.b_fwd.iter_mut().for_each(|b| *b = 0.4);
        params.rx.b_bwd.iter_mut().for_each(|b| *b = 0.4);

        let batch: Batch = vec![vec![0, 1], vec![1, 0]];
        let carried = Carried::zeros(dims, 2);
        let wave_len = 2 * 2 * 2;
        channel.calibrate_adc(&Waveform::new(
            vec![0.1, 0.5, 0.2, 0.6, 0.3, 0.4, 0.25, 0.45],
            channel.config().sim_rate(),
        ));
        let mut rng = noise_rng(7, 7);
        let noise = channel.sample_noise(wave_len, &mut rng, None);

        let pass = batch_pass(&params, &batch, &carried, &channel, &noise, true).unwrap();
        let grads = pass.grads.unwrap();

        let loss_of = |p: &TransceiverParams| -> f64 {
            batch_pass(p, &batch, &carried, &channel, &noise, false).unwrap().loss
        };

        let h = 1e-6;
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        let n_arrays = params.named_arrays().len();
        for idx in 0..n_arrays {
            let len = params.clone().arrays_mut()[idx].len();
            for i in 0..len {
                let mut plus = params.clone();
                plus.arrays_mut()[idx][i] += h;
                let mut minus = params.clone();
                minus.arrays_mut()[idx][i] -= h;
                numeric.push((loss_of(&plus) - loss_of(&minus)) / (2.0 * h));
                analytic.push(grads.clone().arrays_mut()[idx][i]);
            }
        }
        let err = crate::math::rel_err(&analytic, &numeric);
        assert!(err < 1e-5, "batch gradient mismatch: rel err {err}");
    }
}
