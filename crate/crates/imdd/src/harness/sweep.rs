//! Distance sweeps: per distance, train-or-load (SBRNN) or build the
//! expectation table (MLSD), optimize receiver-side knobs, evaluate on
//! the Tausworthe test set and attach the analytic FLOPS counts.
//! Distances fan out as independent jobs; every random stream derives
//! from the configured seeds, so a sweep is reproducible bit for bit.

use std::path::Path;

use rayon::prelude::*;

use crate::autoencoder::{tx_encode, TransceiverParams};
use crate::channel::{Channel, ChannelConfig, Waveform};
use crate::complexity::{flops_mlsd, flops_sbrnn_rx, flops_sbrnn_tx};
use crate::estimator::{
    collect_tensor, combine, decisions, optimize_weights, WeightOpt, WeightVector, WindowConfig,
};
use crate::labeling::{
    ber_lower_bound, confusion_from_counts, tabu_search, BitLabeling, ConfusionMatrix,
    TABU_ITERS, TABU_LIST_SIZE,
};
use crate::mlsd::{estimate_nu, mlsd_ber};
use crate::rng::{derive_seed, noise_rng};
use crate::trainer::{generate_messages, Trainer};
use crate::{Error, Result};

use super::checkpoint::{read_checkpoint, write_checkpoint};
use super::config::{ExperimentConfig, SystemKind};
use super::emit::ResultRow;

/// Stream identifiers for derived seeds (documented layout: test
/// sequences use ids 1_000_000 + i).
const STREAM_REPRESENTATIVE: u64 = 0x5E_BA_11;
const STREAM_REP_NOISE: u64 = 0x01_23;
const STREAM_TEST_NOISE: u64 = 0xE0_A7;
const STREAM_TABU: u64 = 0x7A_B0;
const STREAM_RANDOM_LABELING: u64 = 0x5A_17;

fn test_stream_id(sequence: usize) -> u64 {
    1_000_000 + sequence as u64
}

/// Per-distance artifacts of the receiver-side optimizations.
pub struct SbrnnArtifacts {
    pub params: TransceiverParams,
    pub weight_opt: WeightOpt,
    /// Confusion estimated on the representative (validation) run.
    pub confusion: ConfusionMatrix,
    /// (variant name, labeling) per requested variant.
    pub labelings: Vec<(String, BitLabeling)>,
}

/// One evaluated weights variant over the whole test set.
pub struct SbrnnEval {
    pub weights_name: String,
    pub bler: f64,
    /// (labeling variant, BER).
    pub bers: Vec<(String, f64)>,
    pub ber_lower_bound: f64,
    pub blocks: usize,
}

/// Per-distance weight-optimization record for the auxiliary CSV.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WeightsRecord {
    pub distance_km: f64,
    pub window: usize,
    /// Optimized coefficients, `;`-joined.
    pub weights: String,
    pub cost_uniform: f64,
    pub cost_optimized: f64,
    pub bler_uniform: Option<f64>,
    pub bler_optimized: Option<f64>,
    pub ber_optimized: Option<f64>,
}

fn encode_to_wave(params: &TransceiverParams, msgs: &[usize], rate: f64) -> Waveform {
    let z = params.tx_zero_state();
    let blocks = tx_encode(params, msgs, &z, &z);
    let mut samples = Vec::with_capacity(blocks.len() * params.dims.block_len);
    for b in blocks {
        samples.extend_from_slice(&b);
    }
    Waveform::new(samples, rate)
}

fn wave_to_blocks(samples: &[f64], block_len: usize) -> Vec<Vec<f64>> {
    samples.chunks_exact(block_len).map(|c| c.to_vec()).collect()
}

/// Runs the representative (held-out) sequence, fits the combining
/// weights, estimates the confusion matrix from its decisions and
/// builds the requested bit labelings. The representative stream is
/// disjoint from every test stream and never enters reported rates.
pub fn prepare_sbrnn_artifacts(
    cfg: &ExperimentConfig,
    channel: &Channel,
    params: TransceiverParams,
) -> Result<SbrnnArtifacts> {
    let dims = params.dims;
    let wcfg = WindowConfig { window: cfg.estimator.window, estimated: cfg.harness.test_length };
    let seed_test = cfg.trainer.seed_test;

    let msgs = generate_messages(
        wcfg.block_count(),
        crate::rng::RngFamily::Tausworthe,
        derive_seed(seed_test, STREAM_REPRESENTATIVE),
        dims.alphabet,
    );
    let wave = encode_to_wave(&params, &msgs, channel.config().sim_rate());
    channel.calibrate_adc(&wave);
    let mut rng = noise_rng(seed_test, STREAM_REP_NOISE);
    let noise = channel.sample_noise(wave.len(), &mut rng, None);
    let rx = channel.forward_with(&wave, &noise)?;
    let rx_blocks = wave_to_blocks(&rx.samples, dims.block_len);

    let tensor = collect_tensor(&params, &rx_blocks, &wcfg)?;
    let weight_opt = optimize_weights(&tensor, &msgs)?;

    let finals = combine(&tensor, &weight_opt.weights)?;
    let decided = decisions(&finals);
    let confusion =
        crate::labeling::estimate_confusion(&msgs[..decided.len()], &decided, dims.alphabet)?;

    let mut labelings = Vec::new();
    for variant in &cfg.harness.labeling_variants {
        let labeling = match variant.as_str() {
            "optimized" => {
                let mut rng = noise_rng(seed_test, STREAM_TABU);
                tabu_search(&confusion, TABU_LIST_SIZE, TABU_ITERS, &mut rng)?.labeling
            }
            "gray" => BitLabeling::gray_on_index(dims.alphabet)?,
            "random" => {
                let mut rng = noise_rng(seed_test, STREAM_RANDOM_LABELING);
                BitLabeling::random(dims.alphabet, &mut rng)?
            }
            other => return Err(Error::config(format!("unknown labeling variant `{other}`"))),
        };
        labelings.push((variant.clone(), labeling));
    }

    Ok(SbrnnArtifacts { params, weight_opt, confusion, labelings })
}

/// Evaluates every weights variant over the Tausworthe test set,
/// reusing one window-decode pass per sequence. Returns one record per
/// weights variant, each carrying the BER of every labeling variant.
pub fn evaluate_sbrnn(
    cfg: &ExperimentConfig,
    channel: &Channel,
    artifacts: &SbrnnArtifacts,
    weight_variants: &[(String, WeightVector)],
) -> Result<Vec<SbrnnEval>> {
    let params = &artifacts.params;
    let dims = params.dims;
    let m = dims.alphabet;
    let wcfg = WindowConfig { window: cfg.estimator.window, estimated: cfg.harness.test_length };
    let seed_test = cfg.trainer.seed_test;

    struct Acc {
        block_errors: u64,
        blocks: u64,
        bit_errors: Vec<u64>,
        conf_counts: Vec<u64>,
    }
    let mut accs: Vec<Acc> = weight_variants
        .iter()
        .map(|_| Acc {
            block_errors: 0,
            blocks: 0,
            bit_errors: vec![0; artifacts.labelings.len()],
            conf_counts: vec![0; m * m],
        })
        .collect();

    for seq in 0..cfg.harness.test_sequences {
        let msgs = generate_messages(
            wcfg.block_count(),
            crate::rng::RngFamily::Tausworthe,
            derive_seed(seed_test, test_stream_id(seq)),
            m,
        );
        let wave = encode_to_wave(params, &msgs, channel.config().sim_rate());
        channel.calibrate_adc(&wave);
        let mut rng = noise_rng(derive_seed(seed_test, STREAM_TEST_NOISE), seq as u64);
        let noise = channel.sample_noise(wave.len(), &mut rng, None);
        let rx = channel.forward_with(&wave, &noise)?;
        let rx_blocks = wave_to_blocks(&rx.samples, dims.block_len);
        let tensor = collect_tensor(params, &rx_blocks, &wcfg)?;

        for (acc, (_, weights)) in accs.iter_mut().zip(weight_variants) {
            let finals = combine(&tensor, weights)?;
            let decided = decisions(&finals);
            for (i, (&d, &truth)) in decided.iter().zip(&msgs).enumerate() {
                debug_assert!(i < wcfg.estimated);
                acc.blocks += 1;
                acc.conf_counts[truth * m + d] += 1;
                if d != truth {
                    acc.block_errors += 1;
                    for (be, (_, labeling)) in
                        acc.bit_errors.iter_mut().zip(&artifacts.labelings)
                    {
                        *be += labeling.distance(truth, d) as u64;
                    }
                }
            }
        }
    }

    let bits = dims.bits();
    accs.iter()
        .zip(weight_variants)
        .map(|(acc, (name, _))| {
            let confusion = confusion_from_counts(&acc.conf_counts, m)?;
            Ok(SbrnnEval {
                weights_name: name.clone(),
                bler: acc.block_errors as f64 / acc.blocks as f64,
                bers: artifacts
                    .labelings
                    .iter()
                    .zip(&acc.bit_errors)
                    .map(|((label, _), &be)| {
                        (label.clone(), be as f64 / (acc.blocks as f64 * bits as f64))
                    })
                    .collect(),
                ber_lower_bound: ber_lower_bound(&confusion, bits),
                blocks: acc.blocks as usize,
            })
        })
        .collect()
}

fn weight_variant_set(
    cfg: &ExperimentConfig,
    opt: &WeightOpt,
) -> Result<Vec<(String, WeightVector)>> {
    let mut out = Vec::new();
    for variant in &cfg.harness.weight_variants {
        match variant.as_str() {
            "optimized" => out.push((variant.clone(), opt.weights.clone())),
            "uniform" => out.push((variant.clone(), WeightVector::uniform(cfg.estimator.window))),
            other => return Err(Error::config(format!("unknown weights variant `{other}`"))),
        }
    }
    if out.is_empty() {
        out.push(("optimized".into(), opt.weights.clone()));
    }
    Ok(out)
}

/// Path of the per-distance checkpoint for a given config hash.
pub fn checkpoint_path(dir: &Path, hash: &str, distance_km: f64) -> std::path::PathBuf {
    dir.join(format!("sbrnn_{hash}_{distance_km}km.ckpt"))
}

fn sbrnn_distance_job(
    cfg: &ExperimentConfig,
    distance_idx: usize,
    ckpt_dir: &Path,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<(Vec<ResultRow>, Option<WeightsRecord>)> {
    let distance_km = cfg.harness.distances_km[distance_idx];
    let dims = cfg.autoencoder.dims()?;
    let channel =
        Channel::new(ChannelConfig { distance_km, ..cfg.channel.clone() })?;
    let hash = cfg.hash();

    let ckpt = checkpoint_path(ckpt_dir, &hash, distance_km);
    let params = if ckpt.exists() {
        progress(&format!("{distance_km} km: loading {}", ckpt.display()));
        read_checkpoint(&ckpt)?
    } else if cfg.harness.train {
        progress(&format!("{distance_km} km: training ({} steps)", cfg.trainer.max_iters));
        let mut trainer_cfg = cfg.trainer.clone();
        trainer_cfg.seed_train = derive_seed(cfg.trainer.seed_train, distance_idx as u64);
        trainer_cfg.val_window = cfg.estimator.window;
        let mut trainer = Trainer::new(trainer_cfg, &channel, dims)?;
        let outcome = trainer.run(|row, _| {
            if row.step % 200 == 0 || row.val_bler.is_some() {
                progress(&format!(
                    "{distance_km} km: step {} loss {:.4}{}",
                    row.step,
                    row.loss,
                    row.val_bler.map(|b| format!(" val BLER {b:.4}")).unwrap_or_default()
                ));
            }
        })?;
        write_checkpoint(&ckpt, &outcome.best_params)?;
        outcome.best_params
    } else {
        return Err(Error::config(format!(
            "no checkpoint at {} and training not requested (set harness.train or pass --train)",
            ckpt.display()
        )));
    };

    // Evaluate on a fresh channel instance so the ADC calibration
    // always derives from the trained transmitter's representative
    // waveform, independent of whether training just ran.
    let eval_channel = Channel::new(ChannelConfig { distance_km, ..cfg.channel.clone() })?;
    let artifacts = prepare_sbrnn_artifacts(cfg, &eval_channel, params)?;
    let weight_variants = weight_variant_set(cfg, &artifacts.weight_opt)?;
    let evals = evaluate_sbrnn(cfg, &eval_channel, &artifacts, &weight_variants)?;

    let eta = cfg.estimator.window * dims.bits();
    let flops = flops_sbrnn_tx(dims.alphabet, dims.block_len)
        + flops_sbrnn_rx(dims.alphabet, dims.block_len, cfg.estimator.window);
    let mut rows = Vec::new();
    for eval in &evals {
        for (labeling, ber) in &eval.bers {
            rows.push(ResultRow {
                system: SystemKind::Sbrnn.as_str().into(),
                distance_km,
                eta,
                bler: eval.bler,
                ber: *ber,
                ber_lower_bound: Some(eval.ber_lower_bound),
                labeling: labeling.clone(),
                weights: eval.weights_name.clone(),
                flops_pdb: flops,
                seed: cfg.harness.seed,
            });
        }
    }

    let bler_of = |name: &str| evals.iter().find(|e| e.weights_name == name).map(|e| e.bler);
    let ber_opt = evals
        .iter()
        .find(|e| e.weights_name == "optimized")
        .and_then(|e| e.bers.first().map(|(_, b)| *b));
    let record = WeightsRecord {
        distance_km,
        window: cfg.estimator.window,
        weights: artifacts
            .weight_opt
            .weights
            .as_slice()
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(";"),
        cost_uniform: artifacts.weight_opt.cost_uniform,
        cost_optimized: artifacts.weight_opt.cost_optimized,
        bler_uniform: bler_of("uniform"),
        bler_optimized: bler_of("optimized"),
        ber_optimized: ber_opt,
    };

    Ok((rows, Some(record)))
}

fn mlsd_distance_job(
    cfg: &ExperimentConfig,
    distance_idx: usize,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<(Vec<ResultRow>, Option<WeightsRecord>)> {
    let distance_km = cfg.harness.distances_km[distance_idx];
    let channel =
        Channel::new(ChannelConfig { distance_km, ..cfg.channel.clone() })?;
    let pam = &cfg.mlsd.pam;
    let mu = cfg.mlsd.memory;
    let seed = derive_seed(cfg.harness.seed, distance_idx as u64);

    progress(&format!(
        "{distance_km} km: estimating expectation table ({} symbols, {} states)",
        cfg.mlsd.train_symbols,
        pam.states(mu)
    ));
    let table = estimate_nu(pam, &channel, mu, cfg.mlsd.train_symbols, seed)?;
    if table.coverage() < 1.0 {
        progress(&format!(
            "{distance_km} km: warning: table coverage {:.3} < 1; raise train_symbols",
            table.coverage()
        ));
    }

    let data_symbols = cfg.harness.test_sequences * cfg.harness.test_length;
    progress(&format!("{distance_km} km: detecting {data_symbols} symbols"));
    let eval = mlsd_ber(
        pam,
        &channel,
        &table,
        data_symbols,
        cfg.harness.block_symbols,
        derive_seed(seed, 1),
    )?;

    let bits = pam.bits_per_symbol();
    let row = ResultRow {
        system: cfg.harness.system.as_str().into(),
        distance_km,
        eta: mu * bits,
        bler: eval.symbol_error_rate,
        ber: eval.ber,
        ber_lower_bound: Some(eval.symbol_error_rate / bits as f64),
        labeling: "gray".into(),
        weights: "n/a".into(),
        flops_pdb: flops_mlsd(pam.order, mu),
        seed: cfg.harness.seed,
    };
    Ok((vec![row], None))
}

/// Runs the configured sweep over every distance. Distances execute as
/// independent parallel jobs; results are gathered in distance order
/// (and sorted again at emission).
pub fn run_sweep(
    cfg: &ExperimentConfig,
    ckpt_dir: &Path,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<(Vec<ResultRow>, Vec<WeightsRecord>)> {
    cfg.validate()?;
    let system = cfg.harness.system;
    match system {
        SystemKind::Pam2Mlsd => {
            if cfg.mlsd.pam.order != 2 {
                return Err(Error::config("system pam2_mlsd needs mlsd.order = 2"));
            }
        }
        SystemKind::Pam4Mlsd => {
            if cfg.mlsd.pam.order != 4 {
                return Err(Error::config("system pam4_mlsd needs mlsd.order = 4"));
            }
        }
        SystemKind::Sbrnn => {}
    }

    let jobs: Vec<Result<(Vec<ResultRow>, Option<WeightsRecord>)>> = (0..cfg
        .harness
        .distances_km
        .len())
        .into_par_iter()
        .map(|idx| match system {
            SystemKind::Sbrnn => sbrnn_distance_job(cfg, idx, ckpt_dir, progress),
            SystemKind::Pam2Mlsd | SystemKind::Pam4Mlsd => mlsd_distance_job(cfg, idx, progress),
        })
        .collect();

    let mut rows = Vec::new();
    let mut weights = Vec::new();
    for job in jobs {
        let (r, w) = job?;
        rows.extend(r);
        weights.extend(w);
    }
    Ok((rows, weights))
}
