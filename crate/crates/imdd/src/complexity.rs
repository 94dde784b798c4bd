//! Closed-form FLOPS-per-decoded-bit accounting for both systems.
//!
//! The counts cover matrix multiplications, bias additions and
//! element-wise activations of the recurrent transceiver, and branch
//! metric evaluations, additions and comparisons of the Viterbi
//! processor (N_s = 2). They are analytic formulas, not runtime
//! measurements; inactive neurons and one-hot embedding lookups would
//! reduce the practical counts.

/// FLOPS per encoded bit of the recurrent transmitter:
/// 2n(2(M+n)+1) / log2(M).
pub fn flops_sbrnn_tx(alphabet: usize, block_len: usize) -> f64 {
    assert!(alphabet.is_power_of_two() && alphabet >= 2);
    assert!(block_len >= 1);
    let m = alphabet as f64;
    let n = block_len as f64;
    2.0 * n * (2.0 * (m + n) + 1.0) / m.log2()
}

/// FLOPS per decoded bit of the sliding-window receiver:
/// W(24M^2 + 8Mn + 5M + 2) / log2(M). Linear in the window length.
pub fn flops_sbrnn_rx(alphabet: usize, block_len: usize, window: usize) -> f64 {
    assert!(alphabet.is_power_of_two() && alphabet >= 2);
    assert!(block_len >= 1);
    let m = alphabet as f64;
    let n = block_len as f64;
    let w = window as f64;
    w * (24.0 * m * m + 8.0 * m * n + 5.0 * m + 2.0) / m.log2()
}

/// FLOPS per decoded bit of the Viterbi detector at 2 samples per
/// symbol: 9 M^(mu+1) / log2(M). Exponential in the processed memory.
pub fn flops_mlsd(pam_order: usize, memory: usize) -> f64 {
    assert!(pam_order == 2 || pam_order == 4);
    let m = pam_order as f64;
    9.0 * m.powi(memory as i32 + 1) / m.log2()
}

/// Analytic complexity record for one system configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlopsReport {
    pub alphabet: usize,
    pub block_len: usize,
    pub window: usize,
    pub sbrnn_tx: f64,
    pub sbrnn_rx: f64,
    pub pam_order: usize,
    pub memory: usize,
    pub mlsd: f64,
}

impl FlopsReport {
    pub fn new(
        alphabet: usize,
        block_len: usize,
        window: usize,
        pam_order: usize,
        memory: usize,
    ) -> Self {
        FlopsReport {
            alphabet,
            block_len,
            window,
            sbrnn_tx: flops_sbrnn_tx(alphabet, block_len),
            sbrnn_rx: flops_sbrnn_rx(alphabet, block_len, window),
            pam_order,
            memory,
            mlsd: flops_mlsd(pam_order, memory),
        }
    }
}

/// Receiver FLOPS of both systems for a range of matched memory
/// parameters eta (bits spanned by the window / the Viterbi state).
/// Returns (eta, sbrnn_rx, mlsd) rows for eta = step, 2*step, ...
pub fn eta_sweep(
    alphabet: usize,
    block_len: usize,
    pam_order: usize,
    eta_max: usize,
) -> Vec<(usize, f64, f64)> {
    let bits_msg = (alphabet as f64).log2() as usize;
    let bits_pam = (pam_order as f64).log2() as usize;
    let step = lcm(bits_msg, bits_pam);
    let mut rows = Vec::new();
    let mut eta = step;
    while eta <= eta_max {
        let window = eta / bits_msg;
        let memory = eta / bits_pam;
        rows.push((
            eta,
            flops_sbrnn_rx(alphabet, block_len, window),
            flops_mlsd(pam_order, memory),
        ));
        eta += step;
    }
    rows
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
