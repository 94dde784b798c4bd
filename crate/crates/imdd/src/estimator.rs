//! Sliding-window sequence estimation.
//!
//! A trained receiver decodes overlapping windows of W received blocks;
//! block i therefore collects up to W probability vectors, one per
//! window offset. Interior blocks (those covered by all W windows)
//! combine their estimates with a weight vector on the simplex; blocks
//! near the leading edge average the estimates available so far; the
//! final W-1 blocks are not fully estimated and are dropped.
//!
//! The weights themselves are fitted offline on one representative
//! sequence by minimizing the average cross entropy of the combined
//! estimate, a convex problem solved with projected gradient descent.

use rayon::prelude::*;

use crate::autoencoder::{rx_decode, TransceiverParams};
use crate::labeling::BitLabeling;
use crate::math::{argmax, project_simplex};
use crate::{Error, Result};

/// Window length and number of estimated messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WindowConfig {
    /// Processing window W, in blocks.
    pub window: usize,
    /// Fully estimated message count T.
    pub estimated: usize,
}

impl WindowConfig {
    /// T must dominate W for the edge losses to be negligible.
    pub fn new(window: usize, estimated: usize) -> Result<Self> {
        if window < 1 {
            return Err(Error::config("window must be >= 1"));
        }
        if estimated < 100 * window {
            return Err(Error::config("estimated count must be at least 100x the window"));
        }
        Ok(WindowConfig { window, estimated })
    }

    /// Number of received blocks a sequence must provide: T + W - 1.
    pub fn block_count(&self) -> usize {
        self.estimated + self.window - 1
    }
}

/// Convex-combination weights over window offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::config("weight vector must be non-empty"));
        }
        if a.iter().any(|&x| x < 0.0) {
            return Err(Error::config("weights must be nonnegative"));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::config(format!("weights sum to {sum}, expected 1")));
        }
        Ok(WeightVector(a))
    }

    pub fn uniform(len: usize) -> Self {
        WeightVector(vec![1.0 / len as f64; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-window receiver outputs for one sequence: `outputs[t][j]` is the
/// probability vector for block t + j produced by the window starting
/// at block t.
#[derive(Debug, Clone)]
pub struct ProbabilityTensor {
    window: usize,
    estimated: usize,
    outputs: Vec<Vec<Vec<f64>>>,
}

impl ProbabilityTensor {
    /// Wraps raw per-window outputs, checking shape and that every
    /// stored vector is a distribution.
    pub fn from_window_outputs(outputs: Vec<Vec<Vec<f64>>>, window: usize) -> Result<Self> {
        let estimated = outputs.len();
        for win in &outputs {
            if win.len() != window {
                return Err(Error::dimension("window output length differs from W"));
            }
            for p in win {
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&x| x < 0.0) {
                    return Err(Error::numeric("window output is not a distribution"));
                }
            }
        }
        Ok(ProbabilityTensor { window, estimated, outputs })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn estimated(&self) -> usize {
        self.estimated
    }

    /// p_i^{(i-k)}: the estimate of block `i` from the window starting
    /// k slots earlier. Valid for i - k in [0, T) and k < W.
    pub fn estimate(&self, block: usize, offset: usize) -> Option<&[f64]> {
        if offset >= self.window || offset > block {
            return None;
        }
        let t = block - offset;
        if t >= self.estimated {
            return None;
        }
        Some(&self.outputs[t][offset])
    }
}

/// Decodes every window position of a received sequence. Windows are
/// independent (zero initial states) and run in parallel.
pub fn collect_tensor(
    params: &TransceiverParams,
    blocks: &[Vec<f64>],
    cfg: &WindowConfig,
) -> Result<ProbabilityTensor> {
    if blocks.len() != cfg.block_count() {
        return Err(Error::dimension(format!(
            "sequence has {} blocks, window config needs {}",
            blocks.len(),
            cfg.block_count()
        )));
    }
    let init_f = params.rx_zero_state();
    let init_b = params.rx_zero_state();
    let outputs: Vec<Vec<Vec<f64>>> = (0..cfg.estimated)
        .into_par_iter()
        .map(|t| rx_decode(params, &blocks[t..t + cfg.window], &init_f, &init_b))
        .collect();
    ProbabilityTensor::from_window_outputs(outputs, cfg.window)
}

/// Combines per-window estimates into final probability vectors for
/// blocks 0..T: the first W-1 blocks average whatever estimates exist
/// (uniform over the available set), interior blocks use the weight
/// vector.
pub fn combine(tensor: &ProbabilityTensor, weights: &WeightVector) -> Result<Vec<Vec<f64>>> {
    let w = tensor.window();
    if weights.len() != w {
        return Err(Error::dimension("weight count differs from window length"));
    }
    let t_count = tensor.estimated();
    let mut finals = Vec::with_capacity(t_count);
    for i in 0..t_count {
        let mut acc: Option<Vec<f64>> = None;
        if i < w - 1 {
            // Leading edge: i+1 estimates available, averaged equally.
            let share = 1.0 / (i + 1) as f64;
            for k in 0..=i {
                let p = tensor.estimate(i, k).expect("edge estimate in range");
                accumulate(&mut acc, p, share);
            }
        } else {
            for (k, &a) in weights.as_slice().iter().enumerate() {
                let p = tensor.estimate(i, k).expect("interior estimate in range");
                accumulate(&mut acc, p, a);
            }
        }
        finals.push(acc.expect("at least one estimate per block"));
    }
    Ok(finals)
}

fn accumulate(acc: &mut Option<Vec<f64>>, p: &[f64], scale: f64) {
    match acc {
        None => *acc = Some(p.iter().map(|&x| x * scale).collect()),
        Some(v) => {
            for (vi, &pi) in v.iter_mut().zip(p) {
                *vi += scale * pi;
            }
        }
    }
}

/// Full sliding-window estimation: decode all windows, then combine.
pub fn slide(
    params: &TransceiverParams,
    blocks: &[Vec<f64>],
    cfg: &WindowConfig,
    weights: &WeightVector,
) -> Result<Vec<Vec<f64>>> {
    let tensor = collect_tensor(params, blocks, cfg)?;
    combine(&tensor, weights)
}

/// Average cross entropy of the weighted combination against the true
/// labels, over interior blocks only.
pub fn average_cross_entropy(
    tensor: &ProbabilityTensor,
    labels: &[usize],
    weights: &WeightVector,
) -> Result<f64> {
    let q = true_class_matrix(tensor, labels)?;
    Ok(cost(&q, weights.as_slice()))
}

/// Outcome of the weight optimization.
#[derive(Debug, Clone)]
pub struct WeightOpt {
    pub weights: WeightVector,
    pub cost_uniform: f64,
    pub cost_optimized: f64,
    pub iterations: usize,
}

const WEIGHT_OPT_TOL: f64 = 1e-9;
const WEIGHT_OPT_MAX_ITERS: usize = 100_000;

/// Minimizes the average cross entropy over the weight simplex by
/// projected gradient descent with backtracking, starting from uniform
/// weights. The result is never worse than the uniform start. The
/// problem is convex, so first-order stationarity is global.
pub fn optimize_weights(tensor: &ProbabilityTensor, labels: &[usize]) -> Result<WeightOpt> {
    let w = tensor.window();
    let q = true_class_matrix(tensor, labels)?;

    let mut a = vec![1.0 / w as f64; w];
    let cost_uniform = cost(&q, &a);
    let mut f = cost_uniform;
    let mut iterations = 0;

    if w == 1 {
        return Ok(WeightOpt {
            weights: WeightVector::new(a)?,
            cost_uniform,
            cost_optimized: f,
            iterations,
        });
    }

    for iter in 0..WEIGHT_OPT_MAX_ITERS {
        iterations = iter + 1;
        let g = gradient(&q, &a);

        // Gradient-mapping stationarity at unit step.
        let mapped = project_simplex(&step(&a, &g, 1.0));
        let gm_norm: f64 =
            a.iter().zip(&mapped).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        if gm_norm < WEIGHT_OPT_TOL {
            break;
        }

        // Backtracking line search along the projection arc.
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = project_simplex(&step(&a, &g, s));
            let dist2: f64 = cand.iter().zip(&a).map(|(x, y)| (x - y) * (x - y)).sum();
            let fc = cost(&q, &cand);
            if fc <= f - 1e-4 / s * dist2 {
                a = cand;
                f = fc;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(WeightOpt { weights: WeightVector::new(a)?, cost_uniform, cost_optimized: f, iterations })
}

fn step(a: &[f64], g: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(g).map(|(x, gi)| x - s * gi).collect()
}

/// q[r][k] = probability assigned to the true label of interior block
/// (W-1)+r by the offset-k estimate.
fn true_class_matrix(tensor: &ProbabilityTensor, labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    let w = tensor.window();
    let t_count = tensor.estimated();
    if t_count < w {
        return Err(Error::dimension("no interior blocks to fit weights on"));
    }
    if labels.len() < t_count {
        return Err(Error::dimension("label sequence shorter than estimated blocks"));
    }
    let mut q = Vec::with_capacity(t_count - w + 1);
    for i in (w - 1)..t_count {
        let row: Vec<f64> = (0..w)
            .map(|k| tensor.estimate(i, k).expect("interior estimate")[labels[i]])
            .collect();
        q.push(row);
    }
    Ok(q)
}

fn cost(q: &[Vec<f64>], a: &[f64]) -> f64 {
    let mut acc = 0.0;
    for row in q {
        let mix: f64 = row.iter().zip(a).map(|(x, y)| x * y).sum();
        acc -= mix.max(1e-300).ln();
    }
    acc / q.len() as f64
}

fn gradient(q: &[Vec<f64>], a: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; a.len()];
    for row in q {
        let mix: f64 = row.iter().zip(a).map(|(x, y)| x * y).sum();
        let inv = 1.0 / mix.max(1e-300);
        for (gk, &qk) in g.iter_mut().zip(row) {
            *gk -= qk * inv;
        }
    }
    let scale = 1.0 / q.len() as f64;
    g.iter_mut().for_each(|x| *x *= scale);
    g
}

/// Hard decisions: argmax per final vector, ties to the lowest index.
pub fn decisions(finals: &[Vec<f64>]) -> Vec<usize> {
    finals.iter().map(|p| argmax(p)).collect()
}

/// Block error rate over the estimated set.
pub fn bler(labels: &[usize], finals: &[Vec<f64>]) -> Result<f64> {
    if finals.is_empty() {
        return Err(Error::Empty("no estimated blocks for BLER".into()));
    }
    if labels.len() < finals.len() {
        return Err(Error::dimension("label sequence shorter than finals"));
    }
    let errors = finals.iter().zip(labels).filter(|(p, &m)| argmax(p) != m).count();
    Ok(errors as f64 / finals.len() as f64)
}

/// Bit error rate under a labeling: Hamming distance between the
/// codewords of the true and decided messages, per transmitted bit.
pub fn ber(labels: &[usize], finals: &[Vec<f64>], labeling: &BitLabeling) -> Result<f64> {
    if finals.is_empty() {
        return Err(Error::Empty("no estimated blocks for BER".into()));
    }
    if labels.len() < finals.len() {
        return Err(Error::dimension("label sequence shorter than finals"));
    }
    let mut bit_errors = 0u64;
    for (p, &m) in finals.iter().zip(labels) {
        bit_errors += labeling.distance(m, argmax(p)) as u64;
    }
    Ok(bit_errors as f64 / (labeling.width() as f64 * finals.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::AutoencoderDims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_params(seed: u64) -> TransceiverParams {
        TransceiverParams::init(AutoencoderDims::new(4, 3).unwrap(), seed).unwrap()
    }

    fn random_blocks(count: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| (0..len).map(|_| rng.gen::<f64>() * 0.5).collect()).collect()
    }

    fn small_cfg(window: usize, estimated: usize) -> WindowConfig {
        // Tests bypass the T >= 100 W production constraint.
        WindowConfig { window, estimated }
    }

    // -----------------------------------------------------------------------
    // slide
    // -----------------------------------------------------------------------

    #[test]
    fn window_one_passes_estimates_through() {
        let params = toy_params(1);
        let cfg = small_cfg(1, 6);
        let blocks = random_blocks(6, 3, 2);
        let finals = slide(&params, &blocks, &cfg, &WeightVector::new(vec![1.0]).unwrap()).unwrap();
        let init = params.rx_zero_state();
        for (i, f) in finals.iter().enumerate() {
            let direct = rx_decode(&params, &blocks[i..=i], &init, &init);
            assert_eq!(f, &direct[0]);
        }
    }

    #[test]
    fn window_three_walkthrough() {
        // First few steps for W = 3: p1 = p1^(1), p2 = (p2^(1)+p2^(2))/2,
        // p3 = a0 p3^(3) + a1 p3^(2) + a2 p3^(1)  (1-based indices).
        let params = toy_params(3);
        let cfg = small_cfg(3, 5);
        let blocks = random_blocks(7, 3, 4);
        let a = WeightVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let finals = slide(&params, &blocks, &cfg, &a).unwrap();

        let init = params.rx_zero_state();
        let win = |t: usize| rx_decode(&params, &blocks[t..t + 3], &init, &init);
        let w0 = win(0);
        let w1 = win(1);
        let w2 = win(2);

        // Block 0 (1-based p1): only window 0 saw it.
        for j in 0..4 {
            assert!((finals[0][j] - w0[0][j]).abs() < 1e-14);
        }
        // Block 1 (p2): average of windows 0 and 1.
        for j in 0..4 {
            let expect = 0.5 * (w0[1][j] + w1[0][j]);
            assert!((finals[1][j] - expect).abs() < 1e-14);
        }
        // Block 2 (p3): weighted, offset 0 from window 2, offset 2 from window 0.
        for j in 0..4 {
            let expect = 0.5 * w2[0][j] + 0.3 * w1[1][j] + 0.2 * w0[2][j];
            assert!((finals[2][j] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_window_outputs_pass_through_any_weights() {
        // Zero receiver parameters: every estimate is uniform, so every
        // final is uniform regardless of the weights.
        let dims = AutoencoderDims::new(4, 3).unwrap();
        let params = TransceiverParams::zeros(dims);
        let cfg = small_cfg(3, 8);
        let blocks = random_blocks(10, 3, 5);
        let a = WeightVector::new(vec![0.7, 0.2, 0.1]).unwrap();
        let finals = slide(&params, &blocks, &cfg, &a).unwrap();
        for f in finals {
            for &p in &f {
                assert!((p - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn finals_are_distributions() {
        let params = toy_params(6);
        let cfg = small_cfg(4, 12);
        let blocks = random_blocks(15, 3, 7);
        let a = WeightVector::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let finals = slide(&params, &blocks, &cfg, &a).unwrap();
        assert_eq!(finals.len(), 12);
        for f in finals {
            let sum: f64 = f.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10);
            assert!(f.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn uniform_weights_match_direct_averaging() {
        // Regression against the equal-weights scheme, implemented
        // independently here.
        let params = toy_params(8);
        let w = 3;
        let cfg = small_cfg(w, 9);
        let blocks = random_blocks(11, 3, 9);
        let tensor = collect_tensor(&params, &blocks, &cfg).unwrap();
        let finals = combine(&tensor, &WeightVector::uniform(w)).unwrap();
        for i in (w - 1)..9 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..w {
                    acc += tensor.estimate(i, k).unwrap()[j];
                }
                acc /= w as f64;
                assert!((finals[i][j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn slide_rejects_wrong_length() {
        let params = toy_params(1);
        let cfg = small_cfg(3, 5);
        let blocks = random_blocks(6, 3, 2); // needs 7
        assert!(slide(&params, &blocks, &cfg, &WeightVector::uniform(3)).is_err());
    }

    // -----------------------------------------------------------------------
    // weight vector / config validation
    // -----------------------------------------------------------------------

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.6, 0.5]).is_err());
        assert!(WeightVector::new(vec![1.1, -0.1]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }

    #[test]
    fn window_config_enforces_separation() {
        assert!(WindowConfig::new(0, 100).is_err());
        assert!(WindowConfig::new(2, 150).is_err());
        let c = WindowConfig::new(2, 200).unwrap();
        assert_eq!(c.block_count(), 201);
    }

    // -----------------------------------------------------------------------
    // optimize_weights
    // -----------------------------------------------------------------------

    fn onehot_p(m: usize, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[m] = 1.0;
        v
    }

    #[test]
    fn optimize_single_offset_returns_unit_weight() {
        let params = toy_params(10);
        let cfg = small_cfg(1, 6);
        let blocks = random_blocks(6, 3, 11);
        let tensor = collect_tensor(&params, &blocks, &cfg).unwrap();
        let labels = vec![0usize; 6];
        let opt = optimize_weights(&tensor, &labels).unwrap();
        assert_eq!(opt.weights.as_slice(), &[1.0]);
    }

    #[test]
    fn optimize_finds_vertex_when_one_offset_is_perfect() {
        // Offset 0 estimates are exact one-hots of the labels; offset 1
        // estimates are uniform. The optimum is a = (1, 0).
        let m_count = 4;
        let t_count = 40;
        let w = 2;
        let labels: Vec<usize> = (0..t_count).map(|i| i % m_count).collect();
        let uniform = vec![1.0 / m_count as f64; m_count];
        let mut outputs = Vec::new();
        for t in 0..t_count {
            // outputs[t][0] estimates block t; outputs[t][1] block t+1.
            outputs.push(vec![onehot_p(labels[t], m_count), uniform.clone()]);
        }
        let tensor = ProbabilityTensor::from_window_outputs(outputs, w).unwrap();
        let opt = optimize_weights(&tensor, &labels).unwrap();
        assert!((opt.weights.as_slice()[0] - 1.0).abs() < 1e-3);
        assert!(opt.weights.as_slice()[1] < 1e-3);
        assert!(opt.cost_optimized <= opt.cost_uniform);
    }

    #[test]
    fn optimize_never_worse_than_uniform() {
        for seed in 0..5 {
            let params = toy_params(20 + seed);
            let cfg = small_cfg(3, 30);
            let blocks = random_blocks(32, 3, 30 + seed);
            let tensor = collect_tensor(&params, &blocks, &cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
            let labels: Vec<usize> = (0..32).map(|_| rng.gen_range(0..4)).collect();
            let opt = optimize_weights(&tensor, &labels).unwrap();
            assert!(opt.cost_optimized <= opt.cost_uniform);
            let check = average_cross_entropy(&tensor, &labels, &opt.weights).unwrap();
            assert!((check - opt.cost_optimized).abs() < 1e-12);
        }
    }

    #[test]
    fn optimize_degenerate_inputs_keep_uniform() {
        // All estimates identical: the cost is constant, uniform stays.
        let m_count = 4;
        let uniform = vec![0.25; 4];
        let outputs: Vec<Vec<Vec<f64>>> =
            (0..20).map(|_| vec![uniform.clone(), uniform.clone()]).collect();
        let tensor = ProbabilityTensor::from_window_outputs(outputs, 2).unwrap();
        let labels: Vec<usize> = (0..20).map(|i| i % m_count).collect();
        let opt = optimize_weights(&tensor, &labels).unwrap();
        for &w in opt.weights.as_slice() {
            assert!((w - 0.5).abs() < 1e-12);
        }
    }

    // -----------------------------------------------------------------------
    // bler / ber
    // -----------------------------------------------------------------------

    #[test]
    fn bler_zero_on_perfect_finals() {
        let labels = vec![2usize, 0, 3, 1];
        let finals: Vec<Vec<f64>> = labels.iter().map(|&m| onehot_p(m, 4)).collect();
        assert_eq!(bler(&labels, &finals).unwrap(), 0.0);
    }

    #[test]
    fn bler_uniform_finals_tie_break_to_zero() {
        let labels = vec![0usize, 1, 2, 3, 0, 0];
        let finals = vec![vec![0.25; 4]; 6];
        // argmax ties resolve to index 0: errors exactly where label != 0.
        let expect = labels.iter().filter(|&&m| m != 0).count() as f64 / 6.0;
        assert_eq!(bler(&labels, &finals).unwrap(), expect);
    }

    #[test]
    fn bler_counts_mismatches() {
        let labels = vec![0usize; 10];
        let mut finals: Vec<Vec<f64>> = (0..10).map(|_| onehot_p(0, 4)).collect();
        finals[1] = onehot_p(2, 4);
        finals[4] = onehot_p(1, 4);
        finals[7] = onehot_p(3, 4);
        assert!((bler(&labels, &finals).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn bler_empty_is_error() {
        assert!(matches!(bler(&[], &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn ber_perfect_decisions() {
        let labels = vec![1usize, 2, 3, 0];
        let finals: Vec<Vec<f64>> = labels.iter().map(|&m| onehot_p(m, 4)).collect();
        let gray = BitLabeling::gray_on_index(4).unwrap();
        assert_eq!(ber(&labels, &finals, &gray).unwrap(), 0.0);
    }

    #[test]
    fn ber_single_bit_errors_hit_lower_bound() {
        // Every error flips exactly one bit: BER = BLER / B.
        let gray = BitLabeling::gray_on_index(4).unwrap();
        let labels = vec![0usize; 8];
        let mut finals: Vec<Vec<f64>> = (0..8).map(|_| onehot_p(0, 4)).collect();
        finals[0] = onehot_p(1, 4); // gray(0)=00, gray(1)=01: one bit
        finals[5] = onehot_p(1, 4);
        let b = ber(&labels, &finals, &gray).unwrap();
        let bl = bler(&labels, &finals).unwrap();
        assert!((b - bl / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ber_all_bits_flipped_equals_bler() {
        // Natural labeling: 00 vs 11 flips both bits.
        let natural = BitLabeling::natural(4).unwrap();
        let labels = vec![0usize; 8];
        let mut finals: Vec<Vec<f64>> = (0..8).map(|_| onehot_p(0, 4)).collect();
        finals[2] = onehot_p(3, 4);
        finals[6] = onehot_p(3, 4);
        let b = ber(&labels, &finals, &natural).unwrap();
        let bl = bler(&labels, &finals).unwrap();
        assert!((b - bl).abs() < 1e-15);
    }

    #[test]
    fn ber_bounds_hold_for_random_decisions() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let gray = BitLabeling::gray_on_index(8).unwrap();
        for _ in 0..20 {
            let labels: Vec<usize> = (0..100).map(|_| rng.gen_range(0..8)).collect();
            let finals: Vec<Vec<f64>> =
                (0..100).map(|_| onehot_p(rng.gen_range(0..8), 8)).collect();
            let b = ber(&labels, &finals, &gray).unwrap();
            let bl = bler(&labels, &finals).unwrap();
            assert!(bl / 3.0 <= b + 1e-15);
            assert!(b <= bl + 1e-15);
        }
    }
}
