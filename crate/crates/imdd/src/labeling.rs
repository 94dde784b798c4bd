//! Bit-to-symbol mapping optimization.
//!
//! Messages are non-binary; a bit labeling maps each of the `M`
//! messages to a distinct `B = log2(M)`-bit codeword. The expected BER
//! of a labeling under an estimated symbol confusion matrix is the cost
//! function; a Tabu search over pairwise codeword swaps looks for the
//! labeling minimizing it. The trivial lower bound charges one bit
//! error per symbol error.

use std::collections::VecDeque;

use rand::Rng;

use crate::math::Mat;
use crate::{Error, Result};

/// Bijective map from messages {0..M-1} to B-bit codewords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitLabeling {
    codewords: Vec<u32>,
    width: usize,
}

impl BitLabeling {
    pub fn new(codewords: Vec<u32>, width: usize) -> Result<Self> {
        let m = codewords.len();
        if m == 0 || !m.is_power_of_two() || (1usize << width) != m {
            return Err(Error::config("labeling must cover 2^B codewords"));
        }
        let mut seen = vec![false; m];
        for &c in &codewords {
            let c = c as usize;
            if c >= m || seen[c] {
                return Err(Error::config("labeling is not a bijection"));
            }
            seen[c] = true;
        }
        Ok(BitLabeling { codewords, width })
    }

    /// Binary-reflected Gray code on the message index.
    pub fn gray_on_index(m_count: usize) -> Result<Self> {
        let width = log2_exact(m_count)?;
        let codewords = (0..m_count as u32).map(|m| m ^ (m >> 1)).collect();
        BitLabeling::new(codewords, width)
    }

    /// Natural binary labeling (codeword = index).
    pub fn natural(m_count: usize) -> Result<Self> {
        let width = log2_exact(m_count)?;
        BitLabeling::new((0..m_count as u32).collect(), width)
    }

    /// Uniformly random bijection (Fisher-Yates).
    pub fn random(m_count: usize, rng: &mut impl Rng) -> Result<Self> {
        let width = log2_exact(m_count)?;
        let mut codewords: Vec<u32> = (0..m_count as u32).collect();
        for i in (1..m_count).rev() {
            let j = rng.gen_range(0..=i);
            codewords.swap(i, j);
        }
        BitLabeling::new(codewords, width)
    }

    pub fn codeword(&self, msg: usize) -> u32 {
        self.codewords[msg]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    /// Hamming distance between the codewords of two messages.
    pub fn distance(&self, a: usize, b: usize) -> u32 {
        (self.codewords[a] ^ self.codewords[b]).count_ones()
    }

    /// One B-bit string per message, in message order.
    pub fn to_lines(&self) -> String {
        let mut out = String::with_capacity(self.codewords.len() * (self.width + 1));
        for &c in &self.codewords {
            for bit in (0..self.width).rev() {
                out.push(if (c >> bit) & 1 == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(Error::format("empty labeling file"));
        }
        let width = lines[0].trim().len();
        let mut codewords = Vec::with_capacity(lines.len());
        for line in &lines {
            let line = line.trim();
            if line.len() != width {
                return Err(Error::format("inconsistent codeword width"));
            }
            let mut c = 0u32;
            for ch in line.chars() {
                c = (c << 1)
                    | match ch {
                        '0' => 0,
                        '1' => 1,
                        _ => return Err(Error::format("codeword contains non-binary character")),
                    };
            }
            codewords.push(c);
        }
        BitLabeling::new(codewords, width)
    }
}

fn log2_exact(m: usize) -> Result<usize> {
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::config("message count must be a power of two >= 2"));
    }
    Ok(m.trailing_zeros() as usize)
}

/// Row-stochastic estimate of P(decision | transmitted).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    p: Mat,
    /// Rows with no observations, filled uniform.
    unobserved_rows: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn from_rows(p: Mat) -> Result<Self> {
        let m = p.rows();
        if p.cols() != m {
            return Err(Error::dimension("confusion matrix must be square"));
        }
        for i in 0..m {
            let row = p.row(i);
            if row.iter().any(|&x| x < 0.0) {
                return Err(Error::config("confusion entries must be nonnegative"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("confusion row {i} sums to {sum}")));
            }
        }
        Ok(ConfusionMatrix { p, unobserved_rows: Vec::new() })
    }

    pub fn size(&self) -> usize {
        self.p.rows()
    }

    pub fn prob(&self, sent: usize, decided: usize) -> f64 {
        self.p.get(sent, decided)
    }

    pub fn row(&self, sent: usize) -> &[f64] {
        self.p.row(sent)
    }

    /// Messages whose rows had no observations (flagged, set uniform).
    pub fn unobserved_rows(&self) -> &[usize] {
        &self.unobserved_rows
    }
}

/// Empirical confusion matrix from (transmitted, decided) pairs.
/// Rows without observations become uniform and are flagged.
pub fn estimate_confusion(
    labels: &[usize],
    decisions: &[usize],
    m_count: usize,
) -> Result<ConfusionMatrix> {
    if labels.is_empty() {
        return Err(Error::Empty("no observations for confusion estimate".into()));
    }
    if labels.len() != decisions.len() {
        return Err(Error::dimension("labels and decisions differ in length"));
    }
    let mut counts = vec![0u64; m_count * m_count];
    for (&m, &d) in labels.iter().zip(decisions) {
        assert!(m < m_count && d < m_count);
        counts[m * m_count + d] += 1;
    }
    confusion_from_counts(&counts, m_count)
}

/// Confusion matrix from an M x M row-major count accumulator.
pub fn confusion_from_counts(counts: &[u64], m_count: usize) -> Result<ConfusionMatrix> {
    assert_eq!(counts.len(), m_count * m_count);
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Empty("no observations for confusion estimate".into()));
    }
    let mut p = Mat::zeros(m_count, m_count);
    let mut unobserved = Vec::new();
    for m in 0..m_count {
        let total: u64 = counts[m * m_count..(m + 1) * m_count].iter().sum();
        let row = p.row_mut(m);
        if total == 0 {
            unobserved.push(m);
            row.iter_mut().for_each(|x| *x = 1.0 / m_count as f64);
        } else {
            for d in 0..m_count {
                row[d] = counts[m * m_count + d] as f64 / total as f64;
            }
        }
    }
    let mut c = ConfusionMatrix::from_rows(p)?;
    c.unobserved_rows = unobserved;
    Ok(c)
}

/// Expected bit error rate of a labeling under a confusion matrix,
/// with uniform message priors:
/// (1 / (M B)) sum_m sum_m' P(m'|m) ham(phi(m), phi(m')).
pub fn expected_ber(labeling: &BitLabeling, confusion: &ConfusionMatrix) -> f64 {
    let m_count = confusion.size();
    assert_eq!(labeling.len(), m_count);
    let mut acc = 0.0;
    for m in 0..m_count {
        let row = confusion.row(m);
        for (d, &p) in row.iter().enumerate() {
            if p != 0.0 {
                acc += p * labeling.distance(m, d) as f64;
            }
        }
    }
    acc / (m_count as f64 * labeling.width() as f64)
}

/// Trivial lower bound: one bit error per symbol error,
/// mean_m (1 - P(m|m)) / B.
pub fn ber_lower_bound(confusion: &ConfusionMatrix, bits: usize) -> f64 {
    let m_count = confusion.size();
    let sym_err: f64 =
        (0..m_count).map(|m| 1.0 - confusion.prob(m, m)).sum::<f64>() / m_count as f64;
    sym_err / bits as f64
}

/// Result of a Tabu search run.
#[derive(Debug, Clone)]
pub struct TabuOutcome {
    pub labeling: BitLabeling,
    pub cost: f64,
    /// Best cost seen after each iteration (non-increasing).
    pub best_history: Vec<f64>,
    pub start_cost: f64,
}

/// Default Tabu list capacity.
pub const TABU_LIST_SIZE: usize = 256;

/// Default iteration budget.
pub const TABU_ITERS: usize = 1000;

/// Tabu search over pairwise codeword swaps, starting from a random
/// bijection. Each iteration evaluates all M(M-1)/2 swaps, applies the
/// best one not in the Tabu list (ties to the lexicographically lowest
/// pair) and pushes the swapped pair into a FIFO list of capacity
/// `list_size`. If every move is tabu (possible only when the list can
/// hold the whole neighborhood), the best tabu move is permitted. The
/// best labeling ever seen is returned.
pub fn tabu_search(
    confusion: &ConfusionMatrix,
    list_size: usize,
    iters: usize,
    rng: &mut impl Rng,
) -> Result<TabuOutcome> {
    let m_count = confusion.size();
    if iters == 0 {
        return Err(Error::config("tabu search needs at least one iteration"));
    }
    let mut current = BitLabeling::random(m_count, rng)?;
    let start_cost = expected_ber(&current, confusion);
    let mut best = current.clone();
    let mut best_cost = start_cost;
    let mut best_history = Vec::with_capacity(iters);
    let mut tabu: VecDeque<(usize, usize)> = VecDeque::new();

    for _ in 0..iters {
        let mut best_move: Option<(usize, usize)> = None;
        let mut best_delta = f64::INFINITY;
        let mut best_tabu_move: Option<(usize, usize)> = None;
        let mut best_tabu_delta = f64::INFINITY;

        for i in 0..m_count {
            for j in (i + 1)..m_count {
                let delta = swap_delta(&current, confusion, i, j);
                if tabu.contains(&(i, j)) {
                    if delta < best_tabu_delta {
                        best_tabu_delta = delta;
                        best_tabu_move = Some((i, j));
                    }
                } else if delta < best_delta {
                    best_delta = delta;
                    best_move = Some((i, j));
                }
            }
        }

        // Aspiration: all moves tabu, permit the best of them.
        let (i, j) = match best_move.or(best_tabu_move) {
            Some(mv) => mv,
            None => break, // degenerate alphabet
        };

        current.codewords.swap(i, j);
        // Full recompute keeps the tracked cost drift-free.
        let current_cost = expected_ber(&current, confusion);
        if !tabu.contains(&(i, j)) {
            tabu.push_back((i, j));
            if tabu.len() > list_size {
                tabu.pop_front();
            }
        }
        if current_cost < best_cost {
            best_cost = current_cost;
            best = current.clone();
        }
        best_history.push(best_cost);
    }

    Ok(TabuOutcome { labeling: best, cost: best_cost, best_history, start_cost })
}

/// Change in expected BER caused by swapping the codewords of messages
/// i and j. Only terms touching rows/columns i, j move; the four corner
/// cells cancel.
fn swap_delta(labeling: &BitLabeling, confusion: &ConfusionMatrix, i: usize, j: usize) -> f64 {
    let m_count = confusion.size();
    let mut acc = 0.0;
    for k in 0..m_count {
        if k == i || k == j {
            continue;
        }
        let weight = (confusion.prob(i, k) + confusion.prob(k, i))
            - (confusion.prob(j, k) + confusion.prob(k, j));
        let ham_diff = labeling.distance(j, k) as f64 - labeling.distance(i, k) as f64;
        acc += weight * ham_diff;
    }
    acc / (m_count as f64 * labeling.width() as f64)
}
