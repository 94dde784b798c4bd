//! Bidirectional recurrent transceiver.
//!
//! The transmitter maps one-hot messages to blocks of `n` drive samples
//! through forward and backward recurrent cells whose outputs are
//! averaged and clipped to [0, pi/4]. The receiver runs forward and
//! backward ReLU cells over received blocks, concatenates the two
//! outputs and applies a softmax layer, producing one probability
//! vector over the `M` messages per block. Forward and backward
//! directions keep independent parameter sets; initial recurrent
//! states are zero unless carried in explicitly.
//!
//! Backward passes are hand-written backpropagation through time over
//! the processed slice; traces hold the intermediates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::Mat;
use crate::{Error, Result};

/// Upper clip of the transmitter activation (modulator drive range).
pub const CLIP_MAX: f64 = std::f64::consts::FRAC_PI_4;

/// Alphabet size and samples per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AutoencoderDims {
    /// Alphabet size M (a power of two).
    pub alphabet: usize,
    /// Samples per transmitted block n.
    pub block_len: usize,
}

impl AutoencoderDims {
    pub fn new(alphabet: usize, block_len: usize) -> Result<Self> {
        let d = AutoencoderDims { alphabet, block_len };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet < 2 || !self.alphabet.is_power_of_two() {
            return Err(Error::config("alphabet size must be a power of two >= 2"));
        }
        if self.block_len == 0 {
            return Err(Error::config("block length must be >= 1"));
        }
        Ok(())
    }

    /// Bits per message, B = log2(M).
    pub fn bits(&self) -> usize {
        self.alphabet.trailing_zeros() as usize
    }

    /// Receiver cell width 2M.
    pub fn rx_state(&self) -> usize {
        2 * self.alphabet
    }
}

/// Elementwise clipping activation: relu(x) - relu(x - pi/4).
pub fn clipping_activation(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.clamp(0.0, CLIP_MAX)).collect()
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    assert!(!x.is_empty());
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// Vector-Jacobian product of softmax: given the output `p` and a
/// gradient with respect to `p`, returns the gradient with respect to
/// the logits.
pub fn softmax_vjp(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    p.iter().zip(grad_p).map(|(&pi, &gi)| pi * (gi - dot)).collect()
}

/// Cell activation used by the recurrent passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Clipping,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Clipping => z.clamp(0.0, CLIP_MAX),
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    fn slope(self, z: f64) -> f64 {
        match self {
            Activation::Clipping => {
                if z > 0.0 && z < CLIP_MAX {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Transmitter cell parameters: per direction, W in R^{n x (M+n)} and
/// b in R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct TxParams {
    pub w_fwd: Mat,
    pub b_fwd: Vec<f64>,
    pub w_bwd: Mat,
    pub b_bwd: Vec<f64>,
}

/// Receiver parameters: per direction, W in R^{2M x (n+2M)} and b in
/// R^{2M}, plus the softmax layer W in R^{M x 4M}, b in R^M.
#[derive(Debug, Clone, PartialEq)]
pub struct RxParams {
    pub w_fwd: Mat,
    pub b_fwd: Vec<f64>,
    pub w_bwd: Mat,
    pub b_bwd: Vec<f64>,
    pub w_softmax: Mat,
    pub b_softmax: Vec<f64>,
}

/// All trainable arrays of the transceiver.
#[derive(Debug, Clone, PartialEq)]
pub struct TransceiverParams {
    pub dims: AutoencoderDims,
    pub tx: TxParams,
    pub rx: RxParams,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    let scale = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect();
    Mat::from_vec(rows, cols, data)
}

impl TransceiverParams {
    /// Glorot-uniform weights, zero biases, seeded.
    pub fn init(dims: AutoencoderDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (dims.alphabet, dims.block_len);
        let tx = TxParams {
            w_fwd: glorot(n, m + n, &mut rng),
            b_fwd: vec![0.0; n],
            w_bwd: glorot(n, m + n, &mut rng),
            b_bwd: vec![0.0; n],
        };
        let s = dims.rx_state();
        let rx = RxParams {
            w_fwd: glorot(s, n + s, &mut rng),
            b_fwd: vec![0.0; s],
            w_bwd: glorot(s, n + s, &mut rng),
            b_bwd: vec![0.0; s],
            w_softmax: glorot(m, 2 * s, &mut rng),
            b_softmax: vec![0.0; m],
        };
        Ok(TransceiverParams { dims, tx, rx })
    }

    /// All arrays zeroed; used as a gradient accumulator.
    pub fn zeros(dims: AutoencoderDims) -> Self {
        let (m, n) = (dims.alphabet, dims.block_len);
        let s = dims.rx_state();
        TransceiverParams {
            dims,
            tx: TxParams {
                w_fwd: Mat::zeros(n, m + n),
                b_fwd: vec![0.0; n],
                w_bwd: Mat::zeros(n, m + n),
                b_bwd: vec![0.0; n],
            },
            rx: RxParams {
                w_fwd: Mat::zeros(s, n + s),
                b_fwd: vec![0.0; s],
                w_bwd: Mat::zeros(s, n + s),
                b_bwd: vec![0.0; s],
                w_softmax: Mat::zeros(m, 2 * s),
                b_softmax: vec![0.0; m],
            },
        }
    }

    /// Array names, in the fixed serialization order.
    pub const ARRAY_NAMES: [&'static str; 10] = [
        "tx.w_fwd",
        "tx.b_fwd",
        "tx.w_bwd",
        "tx.b_bwd",
        "rx.w_fwd",
        "rx.b_fwd",
        "rx.w_bwd",
        "rx.b_bwd",
        "rx.w_softmax",
        "rx.b_softmax",
    ];

    /// (name, shape, values) for every array, in fixed order.
    pub fn named_arrays(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let t = &self.tx;
        let r = &self.rx;
        vec![
            ("tx.w_fwd", vec![t.w_fwd.rows(), t.w_fwd.cols()], t.w_fwd.as_slice()),
            ("tx.b_fwd", vec![t.b_fwd.len()], t.b_fwd.as_slice()),
            ("tx.w_bwd", vec![t.w_bwd.rows(), t.w_bwd.cols()], t.w_bwd.as_slice()),
            ("tx.b_bwd", vec![t.b_bwd.len()], t.b_bwd.as_slice()),
            ("rx.w_fwd", vec![r.w_fwd.rows(), r.w_fwd.cols()], r.w_fwd.as_slice()),
            ("rx.b_fwd", vec![r.b_fwd.len()], r.b_fwd.as_slice()),
            ("rx.w_bwd", vec![r.w_bwd.rows(), r.w_bwd.cols()], r.w_bwd.as_slice()),
            ("rx.b_bwd", vec![r.b_bwd.len()], r.b_bwd.as_slice()),
            ("rx.w_softmax", vec![r.w_softmax.rows(), r.w_softmax.cols()], r.w_softmax.as_slice()),
            ("rx.b_softmax", vec![r.b_softmax.len()], r.b_softmax.as_slice()),
        ]
    }

    /// Mutable flat views of every array, in the same fixed order.
    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.tx.w_fwd.as_mut_slice(),
            self.tx.b_fwd.as_mut_slice(),
            self.tx.w_bwd.as_mut_slice(),
            self.tx.b_bwd.as_mut_slice(),
            self.rx.w_fwd.as_mut_slice(),
            self.rx.b_fwd.as_mut_slice(),
            self.rx.w_bwd.as_mut_slice(),
            self.rx.b_bwd.as_mut_slice(),
            self.rx.w_softmax.as_mut_slice(),
            self.rx.b_softmax.as_mut_slice(),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.named_arrays().iter().map(|(_, _, v)| v.len()).sum()
    }

    /// Transmitter zero state (per direction).
    pub fn tx_zero_state(&self) -> Vec<f64> {
        vec![0.0; self.dims.block_len]
    }

    /// Receiver zero state (per direction).
    pub fn rx_zero_state(&self) -> Vec<f64> {
        vec![0.0; self.dims.rx_state()]
    }
}

// ---------------------------------------------------------------------------
// Generic bidirectional pass
// ---------------------------------------------------------------------------

/// Runs the recurrent cell in both directions over dense inputs and
/// returns the per-position forward and backward state sequences.
/// `init_fwd` seeds the forward pass at the left edge; `init_bwd` seeds
/// the backward pass at the right edge.
#[allow(clippy::too_many_arguments)]
pub fn brnn_pass(
    inputs: &[Vec<f64>],
    w_fwd: &Mat,
    b_fwd: &[f64],
    w_bwd: &Mat,
    b_bwd: &[f64],
    activation: Activation,
    init_fwd: &[f64],
    init_bwd: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let state = w_fwd.rows();
    let input_dim = w_fwd.cols().checked_sub(state).ok_or_else(|| {
        Error::dimension("cell weight matrix narrower than its state dimension")
    })?;
    if w_bwd.rows() != state || w_bwd.cols() != w_fwd.cols() {
        return Err(Error::dimension("forward/backward weight shapes differ"));
    }
    if b_fwd.len() != state || b_bwd.len() != state {
        return Err(Error::dimension("bias length does not match cell output"));
    }
    if init_fwd.len() != state || init_bwd.len() != state {
        return Err(Error::dimension("initial state length does not match cell output"));
    }
    for x in inputs {
        if x.len() != input_dim {
            return Err(Error::dimension(format!(
                "input dimension {} does not match weight matrix ({input_dim})",
                x.len()
            )));
        }
    }

    let t_len = inputs.len();
    let state_zeros = vec![0.0; state];

    let mut fwd: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    for (t, x) in inputs.iter().enumerate() {
        let prev = if t == 0 { init_fwd } else { &fwd[t - 1] };
        let mut z = state_zeros.clone();
        w_fwd.matvec_concat(x, prev, b_fwd, &mut z);
        for v in &mut z {
            *v = activation.apply(*v);
        }
        fwd.push(z);
    }

    let mut bwd = vec![Vec::new(); t_len];
    for (t, x) in inputs.iter().enumerate().rev() {
        let next = if t + 1 == t_len { init_bwd } else { &bwd[t + 1] };
        let mut z = state_zeros.clone();
        w_bwd.matvec_concat(x, next, b_bwd, &mut z);
        for v in &mut z {
            *v = activation.apply(*v);
        }
        bwd[t] = z;
    }

    Ok((fwd, bwd))
}

// ---------------------------------------------------------------------------
// Transmitter
// ---------------------------------------------------------------------------

/// Intermediates of one transmitter pass, kept for backpropagation.
pub struct TxTrace {
    msgs: Vec<usize>,
    zf: Vec<Vec<f64>>,
    zb: Vec<Vec<f64>>,
    hf: Vec<Vec<f64>>,
    hb: Vec<Vec<f64>>,
    init_fwd: Vec<f64>,
    init_bwd: Vec<f64>,
}

impl TxTrace {
    /// Final forward state (rightmost position), for carrying across steps.
    pub fn last_fwd_state(&self) -> &[f64] {
        self.hf.last().map(|v| v.as_slice()).unwrap_or(&self.init_fwd)
    }

    /// Final backward state (leftmost position), for carrying across steps.
    pub fn last_bwd_state(&self) -> &[f64] {
        self.hb.first().map(|v| v.as_slice()).unwrap_or(&self.init_bwd)
    }
}

fn tx_cell(w: &Mat, b: &[f64], msg: usize, alphabet: usize, prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut z = vec![0.0; w.rows()];
    w.matvec_onehot_concat(msg, alphabet, prev, b, &mut z);
    let h = clipping_activation(&z);
    (z, h)
}

/// Encodes messages into drive-sample blocks: per position, the average
/// of the clipped forward and backward cell outputs. Every output
/// sample lies in [0, pi/4].
pub fn tx_encode(
    params: &TransceiverParams,
    msgs: &[usize],
    init_fwd: &[f64],
    init_bwd: &[f64],
) -> Vec<Vec<f64>> {
    tx_encode_traced(params, msgs, init_fwd, init_bwd).0
}

/// As [`tx_encode`], returning the trace for [`tx_backward`].
pub fn tx_encode_traced(
    params: &TransceiverParams,
    msgs: &[usize],
    init_fwd: &[f64],
    init_bwd: &[f64],
) -> (Vec<Vec<f64>>, TxTrace) {
    let m = params.dims.alphabet;
    let t_len = msgs.len();
    debug_assert!(msgs.iter().all(|&x| x < m));

    let mut zf = Vec::with_capacity(t_len);
    let mut hf: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    for (t, &msg) in msgs.iter().enumerate() {
        let prev = if t == 0 { init_fwd } else { &hf[t - 1] };
        let (z, h) = tx_cell(&params.tx.w_fwd, &params.tx.b_fwd, msg, m, prev);
        zf.push(z);
        hf.push(h);
    }

    let mut zb = vec![Vec::new(); t_len];
    let mut hb = vec![Vec::new(); t_len];
    for (t, &msg) in msgs.iter().enumerate().rev() {
        let next = if t + 1 == t_len { init_bwd } else { &hb[t + 1] };
        let (z, h) = tx_cell(&params.tx.w_bwd, &params.tx.b_bwd, msg, m, next);
        zb[t] = z;
        hb[t] = h;
    }

    let blocks = (0..t_len)
        .map(|t| hf[t].iter().zip(&hb[t]).map(|(a, b)| 0.5 * (a + b)).collect())
        .collect();
    let trace = TxTrace {
        msgs: msgs.to_vec(),
        zf,
        zb,
        hf,
        hb,
        init_fwd: init_fwd.to_vec(),
        init_bwd: init_bwd.to_vec(),
    };
    (blocks, trace)
}

/// Accumulates parameter gradients from gradients on the transmitted
/// blocks (backpropagation through time over the whole slice).
pub fn tx_backward(
    params: &TransceiverParams,
    trace: &TxTrace,
    grad_blocks: &[Vec<f64>],
    grads: &mut TransceiverParams,
) {
    let m = params.dims.alphabet;
    let n = params.dims.block_len;
    let t_len = trace.msgs.len();
    assert_eq!(grad_blocks.len(), t_len);

    // Forward direction: walk right to left.
    let mut carry = vec![0.0; n];
    for t in (0..t_len).rev() {
        let delta: Vec<f64> = grad_blocks[t]
            .iter()
            .zip(&carry)
            .zip(&trace.zf[t])
            .map(|((g, c), &z)| (0.5 * g + c) * Activation::Clipping.slope(z))
            .collect();
        let prev = if t == 0 { &trace.init_fwd } else { &trace.hf[t - 1] };
        grads.tx.w_fwd.add_outer_onehot_concat(&delta, trace.msgs[t], m, prev);
        for (gb, d) in grads.tx.b_fwd.iter_mut().zip(&delta) {
            *gb += d;
        }
        carry.iter_mut().for_each(|c| *c = 0.0);
        params.tx.w_fwd.add_tr_matvec_cols(&delta, m, m + n, &mut carry);
    }

    // Backward direction: walk left to right.
    let mut carry = vec![0.0; n];
    for t in 0..t_len {
        let delta: Vec<f64> = grad_blocks[t]
            .iter()
            .zip(&carry)
            .zip(&trace.zb[t])
            .map(|((g, c), &z)| (0.5 * g + c) * Activation::Clipping.slope(z))
            .collect();
        let next = if t + 1 == t_len { &trace.init_bwd } else { &trace.hb[t + 1] };
        grads.tx.w_bwd.add_outer_onehot_concat(&delta, trace.msgs[t], m, next);
        for (gb, d) in grads.tx.b_bwd.iter_mut().zip(&delta) {
            *gb += d;
        }
        carry.iter_mut().for_each(|c| *c = 0.0);
        params.tx.w_bwd.add_tr_matvec_cols(&delta, m, m + n, &mut carry);
    }
}

// ---------------------------------------------------------------------------
// Receiver
// ---------------------------------------------------------------------------

/// Intermediates of one receiver pass, kept for backpropagation.
pub struct RxTrace {
    blocks: Vec<Vec<f64>>,
    zf: Vec<Vec<f64>>,
    zb: Vec<Vec<f64>>,
    hf: Vec<Vec<f64>>,
    hb: Vec<Vec<f64>>,
    init_fwd: Vec<f64>,
    init_bwd: Vec<f64>,
}

impl RxTrace {
    pub fn last_fwd_state(&self) -> &[f64] {
        self.hf.last().map(|v| v.as_slice()).unwrap_or(&self.init_fwd)
    }

    pub fn last_bwd_state(&self) -> &[f64] {
        self.hb.first().map(|v| v.as_slice()).unwrap_or(&self.init_bwd)
    }
}

fn rx_cell(w: &Mat, b: &[f64], x: &[f64], prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut z = vec![0.0; w.rows()];
    w.matvec_concat(x, prev, b, &mut z);
    let h = z.iter().map(|&v| v.max(0.0)).collect();
    (z, h)
}

/// Decodes a window of received blocks into one probability vector over
/// the message alphabet per position. ReLU cells, concatenation merge,
/// softmax output layer.
pub fn rx_decode(
    params: &TransceiverParams,
    blocks: &[Vec<f64>],
    init_fwd: &[f64],
    init_bwd: &[f64],
) -> Vec<Vec<f64>> {
    rx_decode_traced(params, blocks, init_fwd, init_bwd).0
}

/// As [`rx_decode`], returning the trace for [`rx_backward`].
pub fn rx_decode_traced(
    params: &TransceiverParams,
    blocks: &[Vec<f64>],
    init_fwd: &[f64],
    init_bwd: &[f64],
) -> (Vec<Vec<f64>>, RxTrace) {
    let t_len = blocks.len();

    let mut zf = Vec::with_capacity(t_len);
    let mut hf: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    for (t, x) in blocks.iter().enumerate() {
        let prev = if t == 0 { init_fwd } else { &hf[t - 1] };
        let (z, h) = rx_cell(&params.rx.w_fwd, &params.rx.b_fwd, x, prev);
        zf.push(z);
        hf.push(h);
    }

    let mut zb = vec![Vec::new(); t_len];
    let mut hb = vec![Vec::new(); t_len];
    for (t, x) in blocks.iter().enumerate().rev() {
        let next = if t + 1 == t_len { init_bwd } else { &hb[t + 1] };
        let (z, h) = rx_cell(&params.rx.w_bwd, &params.rx.b_bwd, x, next);
        zb[t] = z;
        hb[t] = h;
    }

    let mut probs = Vec::with_capacity(t_len);
    let mut logits = vec![0.0; params.dims.alphabet];
    for t in 0..t_len {
        params.rx.w_softmax.matvec_concat(&hf[t], &hb[t], &params.rx.b_softmax, &mut logits);
        probs.push(softmax(&logits));
    }

    let trace = RxTrace {
        blocks: blocks.to_vec(),
        zf,
        zb,
        hf,
        hb,
        init_fwd: init_fwd.to_vec(),
        init_bwd: init_bwd.to_vec(),
    };
    (probs, trace)
}

/// Accumulates parameter gradients and returns gradients with respect
/// to the received blocks, given gradients with respect to the softmax
/// logits (for cross entropy on softmax outputs, `p - onehot`).
pub fn rx_backward(
    params: &TransceiverParams,
    trace: &RxTrace,
    grad_logits: &[Vec<f64>],
    grads: &mut TransceiverParams,
) -> Vec<Vec<f64>> {
    let n = params.dims.block_len;
    let s = params.dims.rx_state();
    let t_len = trace.blocks.len();
    assert_eq!(grad_logits.len(), t_len);

    // Softmax layer: split the state gradient into the two directions.
    let mut g_hf = vec![vec![0.0; s]; t_len];
    let mut g_hb = vec![vec![0.0; s]; t_len];
    for t in 0..t_len {
        let dl = &grad_logits[t];
        grads.rx.w_softmax.add_outer_concat(dl, &trace.hf[t], &trace.hb[t]);
        for (gb, d) in grads.rx.b_softmax.iter_mut().zip(dl) {
            *gb += d;
        }
        params.rx.w_softmax.add_tr_matvec_cols(dl, 0, s, &mut g_hf[t]);
        params.rx.w_softmax.add_tr_matvec_cols(dl, s, 2 * s, &mut g_hb[t]);
    }

    let mut grad_blocks = vec![vec![0.0; n]; t_len];

    // Forward direction BPTT.
    let mut carry = vec![0.0; s];
    for t in (0..t_len).rev() {
        let delta: Vec<f64> = g_hf[t]
            .iter()
            .zip(&carry)
            .zip(&trace.zf[t])
            .map(|((g, c), &z)| (g + c) * Activation::Relu.slope(z))
            .collect();
        let prev = if t == 0 { &trace.init_fwd } else { &trace.hf[t - 1] };
        grads.rx.w_fwd.add_outer_concat(&delta, &trace.blocks[t], prev);
        for (gb, d) in grads.rx.b_fwd.iter_mut().zip(&delta) {
            *gb += d;
        }
        params.rx.w_fwd.add_tr_matvec_cols(&delta, 0, n, &mut grad_blocks[t]);
        carry.iter_mut().for_each(|c| *c = 0.0);
        params.rx.w_fwd.add_tr_matvec_cols(&delta, n, n + s, &mut carry);
    }

    // Backward direction BPTT.
    let mut carry = vec![0.0; s];
    for t in 0..t_len {
        let delta: Vec<f64> = g_hb[t]
            .iter()
            .zip(&carry)
            .zip(&trace.zb[t])
            .map(|((g, c), &z)| (g + c) * Activation::Relu.slope(z))
            .collect();
        let next = if t + 1 == t_len { &trace.init_bwd } else { &trace.hb[t + 1] };
        grads.rx.w_bwd.add_outer_concat(&delta, &trace.blocks[t], next);
        for (gb, d) in grads.rx.b_bwd.iter_mut().zip(&delta) {
            *gb += d;
        }
        params.rx.w_bwd.add_tr_matvec_cols(&delta, 0, n, &mut grad_blocks[t]);
        carry.iter_mut().for_each(|c| *c = 0.0);
        params.rx.w_bwd.add_tr_matvec_cols(&delta, n, n + s, &mut carry);
    }

    grad_blocks
}
