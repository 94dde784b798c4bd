//! PAM transmitter with maximum-likelihood sequence detection.
//!
//! The reference system: Gray-labelled PAM2/PAM4 levels in the
//! modulator drive range, root-raised-cosine shaping at 2 samples per
//! symbol, the shared fiber channel, and a Viterbi detector whose
//! branch metric is the squared distance between the square roots of
//! the received samples and their data-driven expectations. The
//! expectation table (one entry per combination of mu surrounding
//! symbols, center symbol and sample phase) is estimated by
//! transmitting a long random symbol stream through the same channel.
//!
//! Trellis states are the last mu symbols seen; consuming one more
//! symbol completes a (mu+1)-symbol window whose center supplies the
//! branch metric. Each detected block is framed by mu/2 known symbols
//! on both sides.

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{lowpass_filter, Channel, Waveform};
use crate::rng::noise_rng;
use crate::{Error, Result};

/// Highest PAM level (the modulator drive ceiling).
const LEVEL_MAX: f64 = std::f64::consts::FRAC_PI_4;

/// Symbols transmitted per training chunk when estimating the
/// expectation table (chunks are independent transmissions).
const NU_CHUNK_SYMBOLS: usize = 16_384;

/// PAM transmitter parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PamConfig {
    /// PAM order (2 or 4).
    pub order: usize,
    /// Drive levels, ascending within [0, pi/4].
    pub levels: Vec<f64>,
    /// Root-raised-cosine roll-off.
    pub rolloff: f64,
    /// DAC samples per symbol (N_s).
    pub samples_per_symbol: usize,
    /// RRC truncation, in symbols on each side.
    pub rrc_span_symbols: usize,
}

impl Default for PamConfig {
    fn default() -> Self {
        PamConfig::pam2()
    }
}

impl PamConfig {
    pub fn pam2() -> Self {
        PamConfig {
            order: 2,
            levels: vec![0.0, LEVEL_MAX],
            rolloff: 0.25,
            samples_per_symbol: 2,
            rrc_span_symbols: 16,
        }
    }

    pub fn pam4() -> Self {
        PamConfig {
            order: 4,
            levels: vec![
                0.0,
                std::f64::consts::PI / 12.0,
                std::f64::consts::PI / 6.0,
                LEVEL_MAX,
            ],
            rolloff: 0.25,
            samples_per_symbol: 2,
            rrc_span_symbols: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order != 2 && self.order != 4 {
            return Err(Error::config("PAM order must be 2 or 4"));
        }
        if self.levels.len() != self.order {
            return Err(Error::config("level count must equal the PAM order"));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("levels must be strictly increasing"));
        }
        if self.levels[0] < 0.0 || *self.levels.last().unwrap() > LEVEL_MAX + 1e-12 {
            return Err(Error::config("levels must lie within the drive range"));
        }
        if self.samples_per_symbol < 1 || self.rrc_span_symbols < 1 {
            return Err(Error::config("sampling and span must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.rolloff) || self.rolloff == 0.0 {
            return Err(Error::config("roll-off must be in (0, 1)"));
        }
        Ok(())
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    /// Trellis state count for a given memory.
    pub fn states(&self, memory: usize) -> usize {
        self.order.pow(memory as u32)
    }

    /// Gray codeword of a level index (adjacent levels differ in one bit).
    pub fn gray_codeword(&self, index: usize) -> u32 {
        (index as u32) ^ ((index as u32) >> 1)
    }

    /// Level index for a Gray codeword.
    pub fn gray_index(&self, codeword: u32) -> usize {
        let mut i = codeword;
        let mut shift = 1;
        while (i >> shift) != 0 {
            i ^= i >> shift;
            shift <<= 1;
        }
        i as usize
    }
}

/// Unit-energy root-raised-cosine taps at `sps` samples per symbol,
/// truncated to +/- span symbols.
pub fn rrc_taps(rolloff: f64, sps: usize, span_symbols: usize) -> Vec<f64> {
    let half = span_symbols * sps;
    let n = 2 * half + 1;
    let beta = rolloff;
    let mut taps = Vec::with_capacity(n);
    for k in 0..n {
        let t = (k as f64 - half as f64) / sps as f64; // in symbol periods
        let h = if t == 0.0 {
            1.0 + beta * (4.0 / std::f64::consts::PI - 1.0)
        } else if (t.abs() - 1.0 / (4.0 * beta)).abs() < 1e-12 {
            let arg = std::f64::consts::PI / (4.0 * beta);
            (beta / 2f64.sqrt())
                * ((1.0 + 2.0 / std::f64::consts::PI) * arg.sin()
                    + (1.0 - 2.0 / std::f64::consts::PI) * arg.cos())
        } else {
            let pit = std::f64::consts::PI * t;
            let num = (pit * (1.0 - beta)).sin() + 4.0 * beta * t * (pit * (1.0 + beta)).cos();
            let den = pit * (1.0 - (4.0 * beta * t).powi(2));
            num / den
        };
        taps.push(h);
    }
    let energy: f64 = taps.iter().map(|x| x * x).sum();
    let scale = 1.0 / energy.sqrt();
    taps.iter_mut().for_each(|x| *x *= scale);
    taps
}

/// Maps a bit stream to Gray-labelled level indices.
pub fn gray_map_bits(bits: &[u8], cfg: &PamConfig) -> Result<Vec<usize>> {
    let bps = cfg.bits_per_symbol();
    if bits.len() % bps != 0 {
        return Err(Error::dimension("bit count not divisible by bits per symbol"));
    }
    Ok(bits
        .chunks_exact(bps)
        .map(|chunk| {
            let mut c = 0u32;
            for &b in chunk {
                c = (c << 1) | (b as u32 & 1);
            }
            cfg.gray_index(c)
        })
        .collect())
}

/// Gray bits of a decided level index, most significant first.
pub fn gray_demap(index: usize, cfg: &PamConfig) -> Vec<u8> {
    let c = cfg.gray_codeword(index);
    (0..cfg.bits_per_symbol()).rev().map(|b| ((c >> b) & 1) as u8).collect()
}

/// Shapes level indices into a waveform at `dac_rate`: impulse train at
/// N_s samples per symbol convolved with the unit-energy RRC, delay
/// compensated so symbol k peaks at sample k*N_s.
pub fn symbols_to_waveform(symbols: &[usize], cfg: &PamConfig, dac_rate: f64) -> Waveform {
    let sps = cfg.samples_per_symbol;
    let taps = rrc_taps(cfg.rolloff, sps, cfg.rrc_span_symbols);
    let half = taps.len() / 2;
    let len = symbols.len() * sps;
    let mut out = vec![0.0; len];
    for (k, &s) in symbols.iter().enumerate() {
        let level = cfg.levels[s];
        if level == 0.0 {
            continue;
        }
        let peak = k * sps;
        for (j, &h) in taps.iter().enumerate() {
            let idx = peak as isize + j as isize - half as isize;
            if idx >= 0 && (idx as usize) < len {
                out[idx as usize] += level * h;
            }
        }
    }
    Waveform::new(out, dac_rate)
}

/// Gray-maps bits and pulse-shapes them (transmit path).
pub fn pam_modulate(bits: &[u8], cfg: &PamConfig, dac_rate: f64) -> Result<Waveform> {
    cfg.validate()?;
    let symbols = gray_map_bits(bits, cfg)?;
    Ok(symbols_to_waveform(&symbols, cfg, dac_rate))
}

/// Integer-factor band-limited upsampling: zero-stuff and brick-wall
/// interpolate at the original Nyquist band.
pub fn resample_up(w: &Waveform, factor: usize) -> Result<Waveform> {
    if factor == 1 {
        return Ok(w.clone());
    }
    let new_rate = w.rate * factor as f64;
    let mut stuffed = vec![0.0; w.len() * factor];
    for (i, &x) in w.samples.iter().enumerate() {
        stuffed[i * factor] = x * factor as f64;
    }
    lowpass_filter(&Waveform::new(stuffed, new_rate), w.rate / 2.0)
}

/// Picks N_s receiver samples per symbol at fixed offsets
/// {0, 1/N_s, ...} of the symbol period (synchronous sampling).
pub fn sample_received(
    rx: &Waveform,
    sim_sps: usize,
    n_s: usize,
    symbols: usize,
) -> Result<Vec<f64>> {
    if sim_sps % n_s != 0 {
        return Err(Error::config("simulation samples per symbol not divisible by N_s"));
    }
    let stride = sim_sps / n_s;
    if rx.len() < symbols * sim_sps {
        return Err(Error::dimension("received waveform shorter than the symbol stream"));
    }
    let mut out = Vec::with_capacity(symbols * n_s);
    for k in 0..symbols {
        for l in 0..n_s {
            out.push(rx.samples[k * sim_sps + l * stride]);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Expectation table
// ---------------------------------------------------------------------------

/// Expected square-root samples per (state, center symbol, phase):
/// internally indexed by the full (mu+1)-symbol window.
#[derive(Debug, Clone, PartialEq)]
pub struct NuTable {
    order: usize,
    memory: usize,
    n_s: usize,
    means: Vec<f64>,
    counts: Vec<u64>,
    /// Per-cell variance of the square-root samples; only present on
    /// freshly estimated tables.
    variances: Option<Vec<f64>>,
}

impl NuTable {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.n_s
    }

    pub fn window_count(&self) -> usize {
        self.order.pow(self.memory as u32 + 1)
    }

    /// Index of the (mu+1)-symbol window (oldest symbol first).
    pub fn window_index(&self, window: &[usize]) -> usize {
        debug_assert_eq!(window.len(), self.memory + 1);
        window.iter().fold(0, |acc, &s| acc * self.order + s)
    }

    /// Window index from the spec-shaped (state, center) pair: sigma
    /// lists the mu/2 pre-cursor then mu/2 post-cursor symbols.
    pub fn window_from_state(&self, sigma: &[usize], center: usize) -> usize {
        debug_assert_eq!(sigma.len(), self.memory);
        let half = self.memory / 2;
        let mut acc = 0usize;
        for &s in &sigma[..half] {
            acc = acc * self.order + s;
        }
        acc = acc * self.order + center;
        for &s in &sigma[half..] {
            acc = acc * self.order + s;
        }
        acc
    }

    /// Expected square-root sample, by window index and phase.
    pub fn nu_by_window(&self, widx: usize, l: usize) -> Option<f64> {
        if self.counts[widx] == 0 {
            None
        } else {
            Some(self.means[widx * self.n_s + l])
        }
    }

    /// Expected square-root sample for (state, center symbol, phase).
    pub fn nu(&self, sigma: &[usize], center: usize, l: usize) -> Option<f64> {
        self.nu_by_window(self.window_from_state(sigma, center), l)
    }

    pub fn count(&self, sigma: &[usize], center: usize) -> u64 {
        self.counts[self.window_from_state(sigma, center)]
    }

    /// Fraction of (state, center) cells with at least one observation.
    pub fn coverage(&self) -> f64 {
        let seen = self.counts.iter().filter(|&&c| c > 0).count();
        seen as f64 / self.counts.len() as f64
    }

    /// Per-cell variances of sqrt(y), for diagnostics.
    pub fn variances(&self) -> Option<&[f64]> {
        self.variances.as_deref()
    }

    /// Mean standard error of the cell means (diagnostic for the
    /// 1/sqrt(N) convergence of the estimate).
    pub fn mean_standard_error(&self) -> Option<f64> {
        let variances = self.variances.as_ref()?;
        let mut acc = 0.0;
        let mut cells = 0usize;
        for (w, &c) in self.counts.iter().enumerate() {
            if c > 1 {
                for l in 0..self.n_s {
                    acc += (variances[w * self.n_s + l] / c as f64).sqrt();
                    cells += 1;
                }
            }
        }
        if cells == 0 {
            None
        } else {
            Some(acc / cells as f64)
        }
    }

    /// Serializes (mu, order, N_s, then row-major means and counts over
    /// (state, center, phase)) into a little-endian binary image.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"IMDDNU01");
        out.extend_from_slice(&(self.memory as u32).to_le_bytes());
        out.extend_from_slice(&(self.order as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_s as u32).to_le_bytes());
        let states = self.order.pow(self.memory as u32);
        for sigma_idx in 0..states {
            let sigma = digits(sigma_idx, self.order, self.memory);
            for center in 0..self.order {
                let widx = self.window_from_state(&sigma, center);
                for l in 0..self.n_s {
                    out.extend_from_slice(&self.means[widx * self.n_s + l].to_le_bytes());
                }
                out.extend_from_slice(&self.counts[widx].to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != b"IMDDNU01" {
            return Err(Error::format("not an expectation table file"));
        }
        let rd_u32 =
            |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        let memory = rd_u32(8);
        let order = rd_u32(12);
        let n_s = rd_u32(16);
        if order < 2 || memory % 2 != 0 || n_s < 1 {
            return Err(Error::format("malformed expectation table header"));
        }
        let windows = order.pow(memory as u32 + 1);
        let cell_bytes = n_s * 8 + 8;
        if bytes.len() != 20 + windows * cell_bytes {
            return Err(Error::format("expectation table length mismatch"));
        }
        let mut table = NuTable {
            order,
            memory,
            n_s,
            means: vec![0.0; windows * n_s],
            counts: vec![0; windows],
            variances: None,
        };
        let states = order.pow(memory as u32);
        let mut off = 20;
        for sigma_idx in 0..states {
            let sigma = digits(sigma_idx, order, memory);
            for center in 0..order {
                let widx = table.window_from_state(&sigma, center);
                for l in 0..n_s {
                    table.means[widx * n_s + l] =
                        f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
                    off += 8;
                }
                table.counts[widx] = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
                off += 8;
            }
        }
        Ok(table)
    }
}

fn digits(mut idx: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for d in (0..len).rev() {
        out[d] = idx % base;
        idx /= base;
    }
    out
}

/// Estimates the expectation table by transmitting random symbol
/// streams through the channel and averaging sqrt(y) per cell.
/// Independent chunks accumulate mergeable partial sums (reduced in
/// chunk order); only symbols with a full mu-window of context
/// contribute.
pub fn estimate_nu(
    pam: &PamConfig,
    channel: &Channel,
    memory: usize,
    train_symbols: usize,
    seed: u64,
) -> Result<NuTable> {
    pam.validate()?;
    if memory % 2 != 0 {
        return Err(Error::config("memory must be even (mu/2 pre- and post-cursors)"));
    }
    if train_symbols < memory + 1 {
        return Err(Error::config("too few training symbols for the requested memory"));
    }
    let n_s = pam.samples_per_symbol;
    let m = pam.order;
    let windows = m.pow(memory as u32 + 1);
    let oversampling = channel.config().oversampling;
    let dac_rate = channel.config().dac_rate;
    let sim_sps = n_s * oversampling;

    // Calibrate once with a representative chunk before going parallel.
    {
        let mut rng = noise_rng(seed, u64::MAX);
        let symbols: Vec<usize> =
            (0..NU_CHUNK_SYMBOLS.min(train_symbols)).map(|_| rng.gen_range(0..m)).collect();
        let wave = resample_up(&symbols_to_waveform(&symbols, pam, dac_rate), oversampling)?;
        channel.calibrate_adc(&wave);
    }

    let chunks = train_symbols.div_ceil(NU_CHUNK_SYMBOLS);
    let partials: Vec<Result<(Vec<f64>, Vec<f64>, Vec<u64>)>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let count = NU_CHUNK_SYMBOLS.min(train_symbols - chunk * NU_CHUNK_SYMBOLS);
            let mut rng = noise_rng(seed, chunk as u64);
            let symbols: Vec<usize> = (0..count).map(|_| rng.gen_range(0..m)).collect();
            let wave = resample_up(&symbols_to_waveform(&symbols, pam, dac_rate), oversampling)?;
            let (rx, _) = channel.forward(&wave, &mut rng)?;
            let sampled = sample_received(&rx, sim_sps, n_s, count)?;

            let mut sums = vec![0.0; windows * n_s];
            let mut sumsq = vec![0.0; windows * n_s];
            let mut counts = vec![0u64; windows];
            if count > memory {
                let half = memory / 2;
                // Rolling window index over mu+1 symbols.
                let mut widx = 0usize;
                for &s in &symbols[..memory] {
                    widx = widx * m + s;
                }
                for k in half..count - half {
                    widx = (widx * m + symbols[k + half]) % windows;
                    counts[widx] += 1;
                    for l in 0..n_s {
                        let y = sampled[k * n_s + l].max(0.0).sqrt();
                        sums[widx * n_s + l] += y;
                        sumsq[widx * n_s + l] += y * y;
                    }
                }
            }
            Ok((sums, sumsq, counts))
        })
        .collect();

    let mut sums = vec![0.0; windows * n_s];
    let mut sumsq = vec![0.0; windows * n_s];
    let mut counts = vec![0u64; windows];
    for partial in partials {
        let (s, s2, c) = partial?;
        for (a, b) in sums.iter_mut().zip(&s) {
            *a += b;
        }
        for (a, b) in sumsq.iter_mut().zip(&s2) {
            *a += b;
        }
        for (a, b) in counts.iter_mut().zip(&c) {
            *a += b;
        }
    }

    let mut means = vec![0.0; windows * n_s];
    let mut variances = vec![0.0; windows * n_s];
    for w in 0..windows {
        if counts[w] > 0 {
            let c = counts[w] as f64;
            for l in 0..n_s {
                let mean = sums[w * n_s + l] / c;
                means[w * n_s + l] = mean;
                variances[w * n_s + l] = (sumsq[w * n_s + l] / c - mean * mean).max(0.0);
            }
        }
    }
    Ok(NuTable { order: m, memory, n_s, means, counts, variances: Some(variances) })
}

// ---------------------------------------------------------------------------
// Branch metric and Viterbi detection
// ---------------------------------------------------------------------------

/// Square-root branch metric: sum over phases of
/// (sqrt(max(y,0)) - nu)^2. Unobserved cells prune the path.
pub fn branch_metric(y: &[f64], sigma: &[usize], center: usize, table: &NuTable) -> f64 {
    assert_eq!(y.len(), table.samples_per_symbol());
    let widx = table.window_from_state(sigma, center);
    branch_metric_by_window(y, widx, table)
}

fn branch_metric_by_window(y: &[f64], widx: usize, table: &NuTable) -> f64 {
    if table.counts[widx] == 0 {
        return f64::INFINITY;
    }
    let n_s = table.n_s;
    let mut acc = 0.0;
    for (l, &yl) in y.iter().enumerate() {
        let d = yl.max(0.0).sqrt() - table.means[widx * n_s + l];
        acc += d * d;
    }
    acc
}

/// Sequence metric of a forced symbol path: the sum of branch metrics
/// over every center with full context.
pub fn sequence_metric(symbols: &[usize], sampled: &[f64], table: &NuTable) -> f64 {
    let n_s = table.n_s;
    let half = table.memory() / 2;
    let m = table.order();
    let modulus = table.window_count();
    let mut widx = 0usize;
    for &s in &symbols[..table.memory()] {
        widx = widx * m + s;
    }
    let mut acc = 0.0;
    for c in half..symbols.len() - half {
        widx = (widx * m + symbols[c + half]) % modulus;
        acc += branch_metric_by_window(&sampled[c * n_s..(c + 1) * n_s], widx, table);
    }
    acc
}

/// Viterbi detection over a framed block. `sampled` holds N_s samples
/// per symbol for mu/2 frame symbols, the data, and mu/2 trailing frame
/// symbols; frame symbols carry level index `frame_symbol`. Returns the
/// minimum-sequence-metric data symbols.
pub fn viterbi_detect(sampled: &[f64], table: &NuTable, frame_symbol: usize) -> Result<Vec<usize>> {
    let n_s = table.samples_per_symbol();
    let m = table.order();
    let mu = table.memory();
    let half = mu / 2;
    if sampled.len() % n_s != 0 {
        return Err(Error::dimension("sample count not divisible by N_s"));
    }
    let total = sampled.len() / n_s;
    if frame_symbol >= m {
        return Err(Error::config("frame symbol outside the alphabet"));
    }

    // Degenerate memoryless trellis: per-symbol argmin of the metric.
    if mu == 0 {
        let mut out = Vec::with_capacity(total);
        for c in 0..total {
            let y = &sampled[c * n_s..(c + 1) * n_s];
            let best = (0..m)
                .min_by(|&a, &b| {
                    branch_metric_by_window(y, a, table)
                        .partial_cmp(&branch_metric_by_window(y, b, table))
                        .unwrap()
                })
                .unwrap();
            out.push(best);
        }
        return Ok(out);
    }

    if total < mu + 1 {
        return Err(Error::dimension("block shorter than the trellis memory"));
    }
    let data_len = total - mu;
    let states = m.pow(mu as u32);

    // Initial state covers symbol positions 0..mu: the frame occupies
    // the first mu/2 digits, the rest are free.
    let mut metric = vec![f64::INFINITY; states];
    let free = m.pow((mu - half) as u32);
    let frame_prefix = (0..half).fold(0usize, |acc, _| acc * m + frame_symbol);
    for tail in 0..free {
        metric[frame_prefix * free + tail] = 0.0;
    }

    let steps = total - mu;
    let mut survivors: Vec<u8> = vec![0; steps * states];
    let mut next_metric = vec![f64::INFINITY; states];
    let oldest_stride = states / m;

    for step in 0..steps {
        let j = mu + step; // symbol position consumed
        let c = j - half; // completed center
        let y = &sampled[c * n_s..(c + 1) * n_s];
        // Trailing frame: the consumed symbol is known.
        let trailing = j >= half + data_len;
        next_metric.iter_mut().for_each(|x| *x = f64::INFINITY);
        let survivor_row = &mut survivors[step * states..(step + 1) * states];
        for (state, &pm) in metric.iter().enumerate() {
            if pm == f64::INFINITY {
                continue;
            }
            let oldest = (state / oldest_stride) as u8;
            let syms = if trailing { frame_symbol..frame_symbol + 1 } else { 0..m };
            for sym in syms {
                let widx = state * m + sym;
                let bm = branch_metric_by_window(y, widx, table);
                if bm == f64::INFINITY {
                    continue;
                }
                let candidate = pm + bm;
                let next = widx % states;
                if candidate < next_metric[next] {
                    next_metric[next] = candidate;
                    survivor_row[next] = oldest;
                }
            }
        }
        std::mem::swap(&mut metric, &mut next_metric);
    }

    // Best final state and traceback.
    let mut best_state = 0;
    let mut best = f64::INFINITY;
    for (s, &pm) in metric.iter().enumerate() {
        if pm < best {
            best = pm;
            best_state = s;
        }
    }
    if best == f64::INFINITY {
        return Err(Error::numeric(
            "all Viterbi paths pruned; expectation table coverage too low",
        ));
    }

    let mut symbols = vec![0usize; total];
    let mut state = best_state;
    for step in (0..steps).rev() {
        let j = mu + step;
        symbols[j] = state % m;
        let oldest = survivors[step * states + state] as usize;
        state = oldest * oldest_stride + state / m;
    }
    // `state` is now the initial state: symbol positions 0..mu.
    let init = digits(state, m, mu);
    symbols[..mu].copy_from_slice(&init);

    Ok(symbols[half..half + data_len].to_vec())
}

// ---------------------------------------------------------------------------
// End-to-end BER
// ---------------------------------------------------------------------------

/// Outcome of an MLSD evaluation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlsdEval {
    pub ber: f64,
    pub symbol_error_rate: f64,
    pub bit_errors: u64,
    pub symbol_errors: u64,
    pub data_symbols: usize,
}

/// Transmits framed random PAM blocks through the channel and decodes
/// them with the Viterbi detector. The stream interleaves mu/2-symbol
/// frames between data blocks (each frame serves as the postamble of
/// one block and the preamble of the next), so detection blocks are
/// contiguous in one physical waveform.
pub fn mlsd_ber(
    pam: &PamConfig,
    channel: &Channel,
    table: &NuTable,
    data_symbols: usize,
    block_symbols: usize,
    seed: u64,
) -> Result<MlsdEval> {
    pam.validate()?;
    if table.order() != pam.order || table.samples_per_symbol() != pam.samples_per_symbol {
        return Err(Error::config("expectation table does not match the PAM config"));
    }
    let mu = table.memory();
    let half = mu / 2;
    let frame_symbol = 0usize;
    let blocks = data_symbols.div_ceil(block_symbols);
    let n_s = pam.samples_per_symbol;
    let oversampling = channel.config().oversampling;
    let sim_sps = n_s * oversampling;

    // Framed stream: frame, data, frame, data, ..., frame.
    let mut rng = noise_rng(seed, 0);
    let mut stream: Vec<usize> = Vec::new();
    let mut data_ranges = Vec::with_capacity(blocks);
    stream.extend(std::iter::repeat(frame_symbol).take(half));
    let mut remaining = data_symbols;
    for _ in 0..blocks {
        let len = block_symbols.min(remaining);
        remaining -= len;
        let start = stream.len();
        stream.extend((0..len).map(|_| rng.gen_range(0..pam.order)));
        data_ranges.push(start..start + len);
        stream.extend(std::iter::repeat(frame_symbol).take(half));
    }

    // One physical transmission.
    let wave =
        resample_up(&symbols_to_waveform(&stream, pam, channel.config().dac_rate), oversampling)?;
    channel.calibrate_adc(&wave);
    let (rx, _) = channel.forward(&wave, &mut noise_rng(seed, 1))?;
    let sampled = sample_received(&rx, sim_sps, n_s, stream.len())?;

    // Detect each block (frames shared between neighbors).
    let decisions: Vec<Result<Vec<usize>>> = data_ranges
        .par_iter()
        .map(|range| {
            let lo = (range.start - half) * n_s;
            let hi = (range.end + half) * n_s;
            viterbi_detect(&sampled[lo..hi], table, frame_symbol)
        })
        .collect();

    let mut bit_errors = 0u64;
    let mut symbol_errors = 0u64;
    for (range, decided) in data_ranges.iter().zip(decisions) {
        let decided = decided?;
        for (k, &d) in decided.iter().enumerate() {
            let truth = stream[range.start + k];
            if truth != d {
                symbol_errors += 1;
                bit_errors +=
                    (pam.gray_codeword(truth) ^ pam.gray_codeword(d)).count_ones() as u64;
            }
        }
    }
    let bits = (data_symbols * pam.bits_per_symbol()) as f64;
    Ok(MlsdEval {
        ber: bit_errors as f64 / bits,
        symbol_error_rate: symbol_errors as f64 / data_symbols as f64,
        bit_errors,
        symbol_errors,
        data_symbols,
    })
}
