//! Dispersive IM/DD fiber channel as a differentiable forward map.
//!
//! Signal chain (per link schematic): transmitter low-pass filter, DAC
//! quantization noise, Mach-Zehnder modulator, fiber (chromatic
//! dispersion + attenuation), square-law photodiode, receiver Gaussian
//! noise, optional receiver low-pass filter, ADC quantization noise.
//! All noise is sampled per realization and treated as additive
//! constants, so the map is differentiable with respect to the transmit
//! waveform for a fixed [`NoiseRealization`].
//!
//! Filters are ideal brick-walls applied in the frequency domain. The
//! full chain runs on one zero-padded buffer (4x the dispersion-induced
//! memory on each side) so cyclic wraparound lands in padding that is
//! discarded at the end. The standalone operators in this module are
//! circular and length-preserving.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Upper end of the modulator drive range.
pub const DRIVE_MAX: f64 = PI / 4.0;

/// Peak received power at 0 km in normalized field units
/// (drive at `DRIVE_MAX` through the sine transfer, squared).
pub const PEAK_RX_POWER_NORM: f64 = 0.5;

/// Modulator electrical-field transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MzmModel {
    /// field = sin(drive), the physical model.
    #[default]
    Sin,
    /// field = drive, for unit tests of the surrounding chain.
    Identity,
}

/// Channel parameters. Rates in samples/s, bandwidth in Hz, dispersion
/// in ps/nm/km, attenuation in dB/km, powers in W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub dac_rate: f64,
    pub oversampling: usize,
    pub lpf_bandwidth: f64,
    pub enob: u32,
    pub dispersion_ps_nm_km: f64,
    pub attenuation_db_km: f64,
    pub distance_km: f64,
    pub wavelength_m: f64,
    pub rx_noise_power_w: f64,
    /// Physical power corresponding to `PEAK_RX_POWER_NORM` at 0 km;
    /// scales the tabulated receiver noise power into normalized units.
    /// The default 0.5 reads normalized power units as watts, which
    /// puts the tabulated noise figures in the paper's operating regime
    /// (error-free back to back, degrading over distance).
    pub power_calibration_w: f64,
    pub include_rx_lpf: bool,
    pub enable_dac_noise: bool,
    pub enable_rx_noise: bool,
    pub enable_adc_noise: bool,
    pub mzm: MzmModel,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            dac_rate: 84e9,
            oversampling: 4,
            lpf_bandwidth: 32e9,
            enob: 6,
            dispersion_ps_nm_km: 17.0,
            attenuation_db_km: 0.2,
            distance_km: 0.0,
            wavelength_m: 1550e-9,
            rx_noise_power_w: 0.245e-3,
            power_calibration_w: 0.5,
            include_rx_lpf: true,
            enable_dac_noise: true,
            enable_rx_noise: true,
            enable_adc_noise: true,
            mzm: MzmModel::Sin,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dac_rate > 0.0) {
            return Err(Error::config("dac_rate must be positive"));
        }
        if self.oversampling < 1 {
            return Err(Error::config("oversampling must be >= 1"));
        }
        if !(self.lpf_bandwidth > 0.0) {
            return Err(Error::config("lpf_bandwidth must be positive"));
        }
        if self.lpf_bandwidth > self.sim_rate() / 2.0 {
            return Err(Error::config("lpf_bandwidth exceeds the simulation Nyquist rate"));
        }
        if self.enob < 1 {
            return Err(Error::config("enob must be >= 1"));
        }
        if self.distance_km < 0.0 {
            return Err(Error::config("distance must be nonnegative"));
        }
        if !(self.wavelength_m > 0.0) {
            return Err(Error::config("wavelength must be positive"));
        }
        if !(self.rx_noise_power_w > 0.0) || !(self.power_calibration_w > 0.0) {
            return Err(Error::config("noise and calibration powers must be positive"));
        }
        Ok(())
    }

    /// Simulation rate: DAC rate times the oversampling factor.
    pub fn sim_rate(&self) -> f64 {
        self.dac_rate * self.oversampling as f64
    }

    /// Group-velocity dispersion beta2 = -D lambda^2 / (2 pi c), in s^2/m.
    pub fn beta2(&self) -> f64 {
        let d_si = self.dispersion_ps_nm_km * 1e-6; // ps/(nm km) -> s/m^2
        -d_si * self.wavelength_m * self.wavelength_m / (2.0 * PI * SPEED_OF_LIGHT)
    }

    /// Scalar field attenuation over the configured span.
    pub fn attenuation_factor(&self) -> f64 {
        10f64.powf(-self.attenuation_db_km * self.distance_km / 20.0)
    }

    /// Receiver Gaussian noise variance in normalized power units.
    pub fn rx_noise_variance(&self) -> f64 {
        self.rx_noise_power_w / self.power_calibration_w * PEAK_RX_POWER_NORM
    }

    /// DAC quantizer step: full scale is the drive range [0, pi/4].
    pub fn dac_delta(&self) -> f64 {
        DRIVE_MAX / (1u64 << self.enob) as f64
    }

    /// Dispersion-induced memory in samples: band-edge group delay
    /// |beta2| * (2 pi f_nyq) * L at the simulation rate.
    pub fn dispersion_memory_samples(&self) -> usize {
        let fs = self.sim_rate();
        let tau = self.beta2().abs() * 2.0 * PI * (fs / 2.0) * (self.distance_km * 1e3);
        (tau * fs).ceil() as usize
    }

    /// Guard padding added on each side of the simulated sequence.
    pub fn guard_samples(&self) -> usize {
        4 * self.dispersion_memory_samples()
    }
}

/// Real sample sequence at a stated rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub rate: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, rate: f64) -> Self {
        assert!(rate > 0.0, "sample rate must be positive");
        Waveform { samples, rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }
}

/// Complex optical field at a stated rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub samples: Vec<Complex64>,
    pub rate: f64,
}

impl Field {
    pub fn new(samples: Vec<Complex64>, rate: f64) -> Self {
        assert!(rate > 0.0, "sample rate must be positive");
        Field { samples, rate }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x.norm_sqr()).sum()
    }
}

/// One sampled draw of every additive noise source, spanning the padded
/// simulation buffer. Reusing a realization freezes the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub dac_noise: Vec<f64>,
    pub rx_noise: Vec<f64>,
    pub adc_noise: Vec<f64>,
    /// Provenance of the draw, when sampled from a derived stream.
    pub seed: Option<(u64, u64)>,
}

impl NoiseRealization {
    /// A realization with every source at zero (noise-free channel).
    pub fn silent(len: usize) -> Self {
        NoiseRealization {
            dac_noise: vec![0.0; len],
            rx_noise: vec![0.0; len],
            adc_noise: vec![0.0; len],
            seed: None,
        }
    }
}

// ---------------------------------------------------------------------------
// FFT plumbing
// ---------------------------------------------------------------------------

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_forward(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

fn fft_inverse(buf: &mut [Complex64]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
    let scale = 1.0 / buf.len() as f64;
    for x in buf.iter_mut() {
        *x *= scale;
    }
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two().max(1)
}

/// Frequency of FFT bin `k` out of `n` at sample rate `fs`.
fn bin_freq(k: usize, n: usize, fs: f64) -> f64 {
    if 2 * k <= n {
        k as f64 * fs / n as f64
    } else {
        (k as f64 - n as f64) * fs / n as f64
    }
}

/// Multiplies the spectrum of `buf` (rate `fs`) by `response(f)`.
fn apply_freq_response(buf: &mut [Complex64], fs: f64, response: impl Fn(f64) -> Complex64) {
    let n = buf.len();
    fft_forward(buf);
    for (k, x) in buf.iter_mut().enumerate() {
        *x *= response(bin_freq(k, n, fs));
    }
    fft_inverse(buf);
}

fn brickwall(f: f64, bandwidth: f64) -> Complex64 {
    if f.abs() <= bandwidth {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

fn dispersion_response(f: f64, beta2: f64, length_m: f64, atten: f64) -> Complex64 {
    let omega = 2.0 * PI * f;
    let phase = 0.5 * beta2 * omega * omega * length_m;
    Complex64::from_polar(atten, phase)
}

fn lowpass_in_place(x: &mut [f64], fs: f64, bandwidth: f64) {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    apply_freq_response(&mut buf, fs, |f| brickwall(f, bandwidth));
    for (xi, b) in x.iter_mut().zip(&buf) {
        *xi = b.re;
    }
}

// ---------------------------------------------------------------------------
// Standalone operators
// ---------------------------------------------------------------------------

/// Ideal brick-wall low-pass filter (circular, length preserving).
pub fn lowpass_filter(w: &Waveform, bandwidth: f64) -> Result<Waveform> {
    if !(bandwidth > 0.0) {
        return Err(Error::config("lowpass bandwidth must be positive"));
    }
    if bandwidth > w.rate / 2.0 {
        return Err(Error::config(format!(
            "lowpass bandwidth {bandwidth} exceeds Nyquist {}",
            w.rate / 2.0
        )));
    }
    let mut samples = w.samples.clone();
    if !samples.is_empty() {
        lowpass_in_place(&mut samples, w.rate, bandwidth);
    }
    Ok(Waveform::new(samples, w.rate))
}

/// Adds uniform quantization noise with step `full_scale / 2^enob`.
/// The noise is additive and independent of the signal, so the gradient
/// of the output with respect to the input is the identity.
pub fn quantize_noise(w: &Waveform, enob: u32, full_scale: f64, rng: &mut impl Rng) -> Waveform {
    assert!(enob >= 1, "enob must be >= 1");
    let delta = full_scale / (1u64 << enob) as f64;
    let samples = w.samples.iter().map(|&x| x + uniform_step(rng, delta)).collect();
    Waveform::new(samples, w.rate)
}

fn uniform_step(rng: &mut impl Rng, delta: f64) -> f64 {
    (rng.gen::<f64>() - 0.5) * delta
}

fn mzm_transfer(drive: f64, model: MzmModel) -> f64 {
    let clamped = drive.clamp(0.0, DRIVE_MAX);
    match model {
        MzmModel::Sin => clamped.sin(),
        MzmModel::Identity => clamped,
    }
}

/// Modulator electrical-to-optical-field conversion. Drive samples are
/// clamped to [0, pi/4]; returns the field and the clamp count.
pub fn mzm_modulate(drive: &Waveform, model: MzmModel) -> (Field, u64) {
    let mut clamped = 0u64;
    let samples = drive
        .samples
        .iter()
        .map(|&x| {
            if !(0.0..=DRIVE_MAX).contains(&x) {
                clamped += 1;
            }
            Complex64::new(mzm_transfer(x, model), 0.0)
        })
        .collect();
    (Field::new(samples, drive.rate), clamped)
}

/// All-pass chromatic dispersion plus scalar attenuation (circular).
pub fn propagate_fiber(field: &Field, cfg: &ChannelConfig) -> Field {
    let mut samples = field.samples.clone();
    if !samples.is_empty() {
        let beta2 = cfg.beta2();
        let length_m = cfg.distance_km * 1e3;
        let atten = cfg.attenuation_factor();
        apply_freq_response(&mut samples, field.rate, |f| {
            dispersion_response(f, beta2, length_m, atten)
        });
    }
    Field::new(samples, field.rate)
}

/// Square-law opto-electrical conversion: |field|^2 per sample.
pub fn photodetect(field: &Field) -> Waveform {
    let samples = field.samples.iter().map(|x| x.norm_sqr()).collect();
    Waveform::new(samples, field.rate)
}

// ---------------------------------------------------------------------------
// Full channel
// ---------------------------------------------------------------------------

/// The composed channel. Stateless apart from the lazily computed ADC
/// full-scale calibration; all methods take `&self` and are safe to
/// call concurrently on independent waveforms.
#[derive(Debug)]
pub struct Channel {
    cfg: ChannelConfig,
    /// Empirical (min, max) of the noiseless received signal, fixed on
    /// first use per configuration.
    adc_full_scale: OnceLock<(f64, f64)>,
    clamp_events: std::sync::atomic::AtomicU64,
}

/// Intermediate values kept for the backward pass.
pub struct ChannelTrace {
    input_len: usize,
    guard: usize,
    padded: usize,
    drive: Vec<f64>,
    dispersed: Vec<Complex64>,
}

impl Channel {
    pub fn new(cfg: ChannelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Channel {
            cfg,
            adc_full_scale: OnceLock::new(),
            clamp_events: std::sync::atomic::AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    /// Drive samples clamped at the modulator so far.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.load(std::sync::atomic::Ordering::Relaxed)
    }

    /// Padded buffer length for an input of `len` samples.
    pub fn padded_len(&self, len: usize) -> usize {
        next_pow2(len + 2 * self.cfg.guard_samples())
    }

    /// Fixes the ADC full scale from the noiseless received version of
    /// `representative`. A no-op if already calibrated.
    pub fn calibrate_adc(&self, representative: &Waveform) {
        if !representative.is_empty() {
            self.adc_full_scale.get_or_init(|| self.noiseless_minmax(representative));
        }
    }

    /// ADC quantizer step from the calibrated full scale.
    pub fn adc_delta(&self) -> Option<f64> {
        self.adc_full_scale.get().map(|(lo, hi)| (hi - lo) / (1u64 << self.cfg.enob) as f64)
    }

    fn noiseless_minmax(&self, tx: &Waveform) -> (f64, f64) {
        let silent = NoiseRealization::silent(self.padded_len(tx.len()));
        let out = self.run(tx, &silent, None);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in &out {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if lo > hi {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    /// Samples one realization of every enabled noise source for an
    /// input of `input_len` samples.
    pub fn sample_noise(
        &self,
        input_len: usize,
        rng: &mut impl Rng,
        seed: Option<(u64, u64)>,
    ) -> NoiseRealization {
        let n = self.padded_len(input_len);
        let dac_delta = self.cfg.dac_delta();
        let dac_noise = if self.cfg.enable_dac_noise {
            (0..n).map(|_| uniform_step(rng, dac_delta)).collect()
        } else {
            vec![0.0; n]
        };
        let sigma = self.cfg.rx_noise_variance().sqrt();
        let rx_noise = if self.cfg.enable_rx_noise {
            sample_gaussian(rng, n, sigma)
        } else {
            vec![0.0; n]
        };
        let adc_noise = if self.cfg.enable_adc_noise {
            let delta = self
                .adc_delta()
                .expect("ADC noise requested before calibration; call calibrate_adc or forward");
            (0..n).map(|_| uniform_step(rng, delta)).collect()
        } else {
            vec![0.0; n]
        };
        NoiseRealization { dac_noise, rx_noise, adc_noise, seed }
    }

    /// Full forward map with freshly sampled noise.
    pub fn forward(&self, tx: &Waveform, rng: &mut impl Rng) -> Result<(Waveform, NoiseRealization)> {
        self.check_input(tx)?;
        if self.cfg.enable_adc_noise {
            self.calibrate_adc(tx);
        }
        let noise = self.sample_noise(tx.len(), rng, None);
        let out = self.run(tx, &noise, None);
        Ok((Waveform::new(out, tx.rate), noise))
    }

    /// Forward map under a frozen noise realization.
    pub fn forward_with(&self, tx: &Waveform, noise: &NoiseRealization) -> Result<Waveform> {
        self.check_input(tx)?;
        self.check_noise(tx, noise)?;
        Ok(Waveform::new(self.run(tx, noise, None), tx.rate))
    }

    /// Forward map that also returns the trace needed by [`Self::backward`].
    pub fn forward_traced(
        &self,
        tx: &Waveform,
        noise: &NoiseRealization,
    ) -> Result<(Waveform, ChannelTrace)> {
        self.check_input(tx)?;
        self.check_noise(tx, noise)?;
        let mut trace = ChannelTrace {
            input_len: tx.len(),
            guard: self.cfg.guard_samples(),
            padded: self.padded_len(tx.len()),
            drive: Vec::new(),
            dispersed: Vec::new(),
        };
        let out = self.run(tx, noise, Some(&mut trace));
        Ok((Waveform::new(out, tx.rate), trace))
    }

    /// Gradient of a scalar loss with respect to the transmit waveform,
    /// given the gradient with respect to the received waveform. The
    /// noise realization is treated as constant.
    pub fn backward(&self, trace: &ChannelTrace, grad_out: &[f64]) -> Vec<f64> {
        assert_eq!(grad_out.len(), trace.input_len);
        if trace.input_len == 0 {
            return Vec::new();
        }
        let fs = self.cfg.sim_rate();
        let n = trace.padded;

        // Crop adjoint: embed the output gradient into the padded buffer.
        let mut g = vec![0.0; n];
        g[trace.guard..trace.guard + trace.input_len].copy_from_slice(grad_out);

        // ADC noise: identity. Rx LPF: self-adjoint (real symmetric response).
        if self.cfg.include_rx_lpf {
            lowpass_in_place(&mut g, fs, self.cfg.lpf_bandwidth);
        }

        // Photodiode |u|^2: g_u = 2 u g, with g real.
        let mut gc: Vec<Complex64> =
            trace.dispersed.iter().zip(&g).map(|(u, &gy)| 2.0 * u * gy).collect();

        // Fiber adjoint: conjugate frequency response.
        let beta2 = self.cfg.beta2();
        let length_m = self.cfg.distance_km * 1e3;
        let atten = self.cfg.attenuation_factor();
        apply_freq_response(&mut gc, fs, |f| {
            dispersion_response(f, beta2, length_m, atten).conj()
        });

        // Modulator: d field/d drive on the unclamped region.
        let mut gr: Vec<f64> = trace
            .drive
            .iter()
            .zip(&gc)
            .map(|(&d, gm)| {
                if (0.0..=DRIVE_MAX).contains(&d) {
                    let slope = match self.cfg.mzm {
                        MzmModel::Sin => d.cos(),
                        MzmModel::Identity => 1.0,
                    };
                    slope * gm.re
                } else {
                    0.0
                }
            })
            .collect();

        // DAC noise: identity. Tx LPF: self-adjoint. Pad adjoint: crop.
        lowpass_in_place(&mut gr, fs, self.cfg.lpf_bandwidth);
        gr[trace.guard..trace.guard + trace.input_len].to_vec()
    }

    fn check_input(&self, tx: &Waveform) -> Result<()> {
        let fs = self.cfg.sim_rate();
        if (tx.rate - fs).abs() > 1e-6 * fs {
            return Err(Error::config(format!(
                "transmit waveform rate {} differs from simulation rate {}",
                tx.rate, fs
            )));
        }
        Ok(())
    }

    fn check_noise(&self, tx: &Waveform, noise: &NoiseRealization) -> Result<()> {
        let n = self.padded_len(tx.len());
        if noise.dac_noise.len() != n || noise.rx_noise.len() != n || noise.adc_noise.len() != n {
            return Err(Error::dimension(format!(
                "noise realization length {} does not match padded length {}",
                noise.dac_noise.len(),
                n
            )));
        }
        Ok(())
    }

    /// The composed chain over the padded buffer. `trace`, when given,
    /// captures the intermediates needed for the backward pass.
    fn run(&self, tx: &Waveform, noise: &NoiseRealization, trace: Option<&mut ChannelTrace>) -> Vec<f64> {
        if tx.is_empty() {
            return Vec::new();
        }
        let fs = self.cfg.sim_rate();
        let guard = self.cfg.guard_samples();
        let n = self.padded_len(tx.len());

        let mut x = vec![0.0; n];
        x[guard..guard + tx.len()].copy_from_slice(&tx.samples);

        // Tx low-pass and DAC quantization noise.
        lowpass_in_place(&mut x, fs, self.cfg.lpf_bandwidth);
        for (xi, ni) in x.iter_mut().zip(&noise.dac_noise) {
            *xi += ni;
        }

        // Modulator.
        let mut clamped = 0u64;
        let mut field: Vec<Complex64> = x
            .iter()
            .map(|&d| {
                if !(0.0..=DRIVE_MAX).contains(&d) {
                    clamped += 1;
                }
                Complex64::new(mzm_transfer(d, self.cfg.mzm), 0.0)
            })
            .collect();
        self.clamp_events.fetch_add(clamped, std::sync::atomic::Ordering::Relaxed);

        // Fiber.
        let beta2 = self.cfg.beta2();
        let length_m = self.cfg.distance_km * 1e3;
        let atten = self.cfg.attenuation_factor();
        apply_freq_response(&mut field, fs, |f| dispersion_response(f, beta2, length_m, atten));

        // Photodiode, receiver noise, receiver low-pass, ADC noise.
        let mut y: Vec<f64> = field.iter().map(|u| u.norm_sqr()).collect();
        for (yi, ni) in y.iter_mut().zip(&noise.rx_noise) {
            *yi += ni;
        }
        if self.cfg.include_rx_lpf {
            lowpass_in_place(&mut y, fs, self.cfg.lpf_bandwidth);
        }
        for (yi, ni) in y.iter_mut().zip(&noise.adc_noise) {
            *yi += ni;
        }

        if let Some(t) = trace {
            t.drive = x;
            t.dispersed = field;
        }
        y[guard..guard + tx.len()].to_vec()
    }
}

/// Box-Muller Gaussian sampler (mean 0, standard deviation `sigma`).
fn sample_gaussian(rng: &mut impl Rng, n: usize, sigma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        out.push(sigma * r * c);
        if out.len() < n {
            out.push(sigma * r * s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn noiseless_cfg(distance_km: f64) -> ChannelConfig {
        ChannelConfig {
            distance_km,
            enable_dac_noise: false,
            enable_rx_noise: false,
            enable_adc_noise: false,
            ..ChannelConfig::default()
        }
    }

    // -----------------------------------------------------------------------
    // lowpass_filter
    // -----------------------------------------------------------------------

    #[test]
    fn lowpass_passes_dc() {
        let w = Waveform::new(vec![0.7; 256], 336e9);
        let out = lowpass_filter(&w, 32e9).unwrap();
        for &x in &out.samples {
            assert!((x - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn lowpass_rejects_tone_at_twice_bandwidth() {
        // Bin-aligned tone at 2x the cutoff: leakage-free rejection.
        let n = 1024;
        let fs = 336e9;
        let bw = fs / 8.0; // 42 GHz cutoff
        let f0 = 2.0 * bw; // bin 256
        let w = Waveform::new(
            (0..n).map(|i| (2.0 * PI * f0 * i as f64 / fs).sin()).collect(),
            fs,
        );
        let out = lowpass_filter(&w, bw).unwrap();
        assert!(out.energy() < 1e-6 * w.energy());
    }

    #[test]
    fn lowpass_at_nyquist_is_identity() {
        let fs = 336e9;
        let mut r = rng(1);
        let w = Waveform::new((0..200).map(|_| r.gen::<f64>() - 0.5).collect(), fs);
        let out = lowpass_filter(&w, fs / 2.0).unwrap();
        for (a, b) in out.samples.iter().zip(&w.samples) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lowpass_above_nyquist_is_config_error() {
        let w = Waveform::new(vec![0.0; 8], 100.0);
        assert!(matches!(lowpass_filter(&w, 51.0), Err(Error::Config(_))));
    }

    #[test]
    fn lowpass_is_linear() {
        let fs = 336e9;
        let mut r = rng(2);
        let x = Waveform::new((0..128).map(|_| r.gen::<f64>() - 0.5).collect(), fs);
        let y = Waveform::new((0..128).map(|_| r.gen::<f64>() - 0.5).collect(), fs);
        let (a, b) = (1.7, -0.3);
        let combo = Waveform::new(
            x.samples.iter().zip(&y.samples).map(|(xi, yi)| a * xi + b * yi).collect(),
            fs,
        );
        let fx = lowpass_filter(&x, 32e9).unwrap();
        let fy = lowpass_filter(&y, 32e9).unwrap();
        let fc = lowpass_filter(&combo, 32e9).unwrap();
        let expect: Vec<f64> =
            fx.samples.iter().zip(&fy.samples).map(|(xi, yi)| a * xi + b * yi).collect();
        assert!(crate::math::rel_err(&fc.samples, &expect) < 1e-9);
    }

    // -----------------------------------------------------------------------
    // quantize_noise
    // -----------------------------------------------------------------------

    #[test]
    fn quantize_step_arithmetic() {
        let cfg = ChannelConfig::default();
        assert!((cfg.dac_delta() - (PI / 4.0) / 64.0).abs() < 1e-18);
    }

    #[test]
    fn quantize_vanishes_at_high_enob() {
        // Step shrinks as 2^-enob, so the output converges to the input.
        let w = Waveform::new(vec![0.3; 64], 1.0);
        let out = quantize_noise(&w, 40, PI / 4.0, &mut rng(3));
        let delta = (PI / 4.0) / (1u64 << 40) as f64;
        for (a, b) in out.samples.iter().zip(&w.samples) {
            assert!((a - b).abs() <= delta / 2.0 + 1e-15);
        }
        assert!(delta < 1e-12);
    }

    #[test]
    fn quantize_empty_waveform() {
        let w = Waveform::new(vec![], 1.0);
        let out = quantize_noise(&w, 6, 1.0, &mut rng(4));
        assert!(out.is_empty());
    }

    #[test]
    fn quantize_noise_is_bounded_and_centered() {
        let n = 1_000_000;
        let delta = (PI / 4.0) / 64.0;
        let w = Waveform::new(vec![0.0; n], 1.0);
        let out = quantize_noise(&w, 6, PI / 4.0, &mut rng(5));
        let mut sum = 0.0;
        for &x in &out.samples {
            assert!(x.abs() <= delta / 2.0);
            sum += x;
        }
        assert!((sum / n as f64).abs() < delta / 200.0);
    }

    // -----------------------------------------------------------------------
    // mzm_modulate
    // -----------------------------------------------------------------------

    #[test]
    fn mzm_known_points() {
        let w = Waveform::new(vec![0.0, PI / 4.0], 1.0);
        let (f, clamped) = mzm_modulate(&w, MzmModel::Sin);
        assert_eq!(clamped, 0);
        assert!((f.samples[0].re - 0.0).abs() < 1e-15);
        assert!((f.samples[1].re - (PI / 4.0).sin()).abs() < 1e-15);
        assert!((f.samples[1].re - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn mzm_is_monotonic_on_range() {
        let n = 100;
        let drives: Vec<f64> = (0..n).map(|i| DRIVE_MAX * i as f64 / (n - 1) as f64).collect();
        let (f, _) = mzm_modulate(&Waveform::new(drives, 1.0), MzmModel::Sin);
        for pair in f.samples.windows(2) {
            assert!(pair[0].re < pair[1].re);
        }
    }

    #[test]
    fn mzm_clamps_and_counts_out_of_range() {
        let w = Waveform::new(vec![-0.5, 0.2, 2.0], 1.0);
        let (f, clamped) = mzm_modulate(&w, MzmModel::Sin);
        assert_eq!(clamped, 2);
        assert!((f.samples[0].re - 0.0).abs() < 1e-15);
        assert!((f.samples[2].re - (PI / 4.0).sin()).abs() < 1e-15);
    }

    // -----------------------------------------------------------------------
    // propagate_fiber
    // -----------------------------------------------------------------------

    #[test]
    fn fiber_identity_at_zero_distance() {
        let cfg = noiseless_cfg(0.0);
        let mut r = rng(6);
        let field = Field::new(
            (0..128).map(|_| Complex64::new(r.gen::<f64>(), r.gen::<f64>())).collect(),
            cfg.sim_rate(),
        );
        let out = propagate_fiber(&field, &cfg);
        for (a, b) in out.samples.iter().zip(&field.samples) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn fiber_conserves_energy_without_attenuation() {
        let cfg = ChannelConfig { attenuation_db_km: 0.0, ..noiseless_cfg(100.0) };
        let mut r = rng(7);
        let field = Field::new(
            (0..256).map(|_| Complex64::new(r.gen::<f64>() - 0.5, 0.0)).collect(),
            cfg.sim_rate(),
        );
        let out = propagate_fiber(&field, &cfg);
        let ratio = out.energy() / field.energy();
        assert!((ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fiber_attenuates_20db_over_100km() {
        let cfg = noiseless_cfg(100.0);
        assert!((cfg.attenuation_factor() - 0.1).abs() < 1e-15);
        let mut r = rng(8);
        let field = Field::new(
            (0..256).map(|_| Complex64::new(r.gen::<f64>(), 0.0)).collect(),
            cfg.sim_rate(),
        );
        let out = propagate_fiber(&field, &cfg);
        let ratio = out.energy() / field.energy();
        assert!((ratio - 0.01).abs() < 1e-11);
    }

    #[test]
    fn fiber_is_linear() {
        let cfg = noiseless_cfg(40.0);
        let mut r = rng(9);
        let gen = |r: &mut ChaCha8Rng| {
            Field::new(
                (0..128).map(|_| Complex64::new(r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5)).collect(),
                cfg.sim_rate(),
            )
        };
        let x = gen(&mut r);
        let y = gen(&mut r);
        let (a, b) = (0.8, 2.5);
        let combo = Field::new(
            x.samples.iter().zip(&y.samples).map(|(xi, yi)| a * xi + b * yi).collect(),
            cfg.sim_rate(),
        );
        let fx = propagate_fiber(&x, &cfg);
        let fy = propagate_fiber(&y, &cfg);
        let fc = propagate_fiber(&combo, &cfg);
        let num: f64 = fc
            .samples
            .iter()
            .zip(fx.samples.iter().zip(&fy.samples))
            .map(|(c, (xi, yi))| (c - (a * xi + b * yi)).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = fc.energy().sqrt();
        assert!(num / den < 1e-9);
    }

    // -----------------------------------------------------------------------
    // photodetect
    // -----------------------------------------------------------------------

    #[test]
    fn photodetect_squares_magnitude() {
        let f = Field::new(vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)], 1.0);
        let out = photodetect(&f);
        assert!((out.samples[0] - 25.0).abs() < 1e-12);
        assert_eq!(out.samples[1], 0.0);
    }

    #[test]
    fn photodetect_is_phase_invariant() {
        let mut r = rng(10);
        let base: Vec<Complex64> =
            (0..64).map(|_| Complex64::new(r.gen::<f64>(), r.gen::<f64>())).collect();
        let rotated: Vec<Complex64> =
            base.iter().map(|x| x * Complex64::from_polar(1.0, 1.234)).collect();
        let a = photodetect(&Field::new(base, 1.0));
        let b = photodetect(&Field::new(rotated, 1.0));
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    // -----------------------------------------------------------------------
    // channel_forward
    // -----------------------------------------------------------------------

    #[test]
    fn forward_reduces_to_sin_squared_back_to_back() {
        // Zero distance, noise off, LPF at Nyquist: r = sin(tx)^2.
        let cfg = ChannelConfig {
            lpf_bandwidth: 336e9 / 2.0,
            ..noiseless_cfg(0.0)
        };
        let ch = Channel::new(cfg.clone()).unwrap();
        let mut r = rng(11);
        let tx = Waveform::new((0..96).map(|_| r.gen::<f64>() * DRIVE_MAX).collect(), cfg.sim_rate());
        let (out, _) = ch.forward(&tx, &mut rng(12)).unwrap();
        for (y, x) in out.samples.iter().zip(&tx.samples) {
            assert!((y - x.sin().powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_zero_input_noiseless_is_zero() {
        let cfg = noiseless_cfg(40.0);
        let ch = Channel::new(cfg.clone()).unwrap();
        let tx = Waveform::new(vec![0.0; 64], cfg.sim_rate());
        let (out, _) = ch.forward(&tx, &mut rng(13)).unwrap();
        for &y in &out.samples {
            assert!(y.abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_deterministic_under_fixed_seed() {
        let cfg = ChannelConfig { distance_km: 25.0, ..ChannelConfig::default() };
        let ch = Channel::new(cfg.clone()).unwrap();
        let tx = Waveform::new(vec![0.3; 200], cfg.sim_rate());
        let (a, na) = ch.forward(&tx, &mut rng(14)).unwrap();
        let (b, nb) = ch.forward(&tx, &mut rng(14)).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(na, nb);
    }

    #[test]
    fn frozen_noise_reproduces_forward() {
        let cfg = ChannelConfig { distance_km: 10.0, ..ChannelConfig::default() };
        let ch = Channel::new(cfg.clone()).unwrap();
        let tx = Waveform::new(vec![0.4; 128], cfg.sim_rate());
        let (a, noise) = ch.forward(&tx, &mut rng(15)).unwrap();
        let b = ch.forward_with(&tx, &noise).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn rx_noise_variance_matches_config() {
        let cfg = ChannelConfig {
            enable_dac_noise: false,
            enable_adc_noise: false,
            ..ChannelConfig::default()
        };
        let ch = Channel::new(cfg.clone()).unwrap();
        let noise = ch.sample_noise(1 << 20, &mut rng(16), None);
        let n = noise.rx_noise.len() as f64;
        let var: f64 = noise.rx_noise.iter().map(|x| x * x).sum::<f64>() / n;
        let target = cfg.rx_noise_variance();
        assert!((var - target).abs() < 0.05 * target, "var {var} vs target {target}");
    }

    #[test]
    fn adc_calibration_sets_full_scale_from_noiseless_signal() {
        let cfg = noiseless_cfg(20.0);
        let ch = Channel::new(ChannelConfig { enable_adc_noise: true, ..cfg.clone() }).unwrap();
        let mut r = rng(17);
        let tx = Waveform::new(
            (0..256).map(|_| r.gen::<f64>() * DRIVE_MAX).collect(),
            cfg.sim_rate(),
        );
        ch.calibrate_adc(&tx);
        let delta = ch.adc_delta().unwrap();
        assert!(delta > 0.0);
        // Noise obeys the calibrated bound.
        let noise = ch.sample_noise(256, &mut r, None);
        for &x in &noise.adc_noise {
            assert!(x.abs() <= delta / 2.0);
        }
    }

    // -----------------------------------------------------------------------
    // gradients
    // -----------------------------------------------------------------------

    /// Central finite differences of a scalar function of the channel
    /// output with respect to the transmit samples.
    fn fd_grad(
        ch: &Channel,
        tx: &Waveform,
        noise: &NoiseRealization,
        loss: impl Fn(&[f64]) -> f64,
    ) -> Vec<f64> {
        let h = 1e-6;
        let mut grad = vec![0.0; tx.len()];
        for i in 0..tx.len() {
            let mut plus = tx.clone();
            plus.samples[i] += h;
            let mut minus = tx.clone();
            minus.samples[i] -= h;
            let fp = loss(&ch.forward_with(&plus, noise).unwrap().samples);
            let fm = loss(&ch.forward_with(&minus, noise).unwrap().samples);
            grad[i] = (fp - fm) / (2.0 * h);
        }
        grad
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cfg = ChannelConfig { distance_km: 20.0, ..ChannelConfig::default() };
        let ch = Channel::new(cfg.clone()).unwrap();
        let mut r = rng(18);
        // Keep drive strictly inside (0, pi/4) so the clamp mask is stable.
        let tx = Waveform::new(
            (0..48).map(|_| 0.1 + 0.6 * DRIVE_MAX * r.gen::<f64>()).collect(),
            cfg.sim_rate(),
        );
        ch.calibrate_adc(&tx);
        let noise = ch.sample_noise(tx.len(), &mut r, None);

        // Quadratic loss to exercise the chain rule.
        let loss = |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>() * 0.5;
        let (out, trace) = ch.forward_traced(&tx, &noise).unwrap();
        let analytic = ch.backward(&trace, &out.samples);
        let numeric = fd_grad(&ch, &tx, &noise, loss);
        let err = crate::math::rel_err(&analytic, &numeric);
        assert!(err < 1e-5, "gradient mismatch: rel err {err}");
    }

    #[test]
    fn backward_handles_rx_lpf_disabled() {
        let cfg = ChannelConfig {
            distance_km: 5.0,
            include_rx_lpf: false,
            ..ChannelConfig::default()
        };
        let ch = Channel::new(cfg.clone()).unwrap();
        let mut r = rng(19);
        let tx = Waveform::new(
            (0..32).map(|_| 0.1 + 0.5 * r.gen::<f64>()).collect(),
            cfg.sim_rate(),
        );
        ch.calibrate_adc(&tx);
        let noise = ch.sample_noise(tx.len(), &mut r, None);
        let loss = |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>() * 0.5;
        let (out, trace) = ch.forward_traced(&tx, &noise).unwrap();
        let analytic = ch.backward(&trace, &out.samples);
        let numeric = fd_grad(&ch, &tx, &noise, loss);
        assert!(crate::math::rel_err(&analytic, &numeric) < 1e-5);
    }

    // -----------------------------------------------------------------------
    // config validation
    // -----------------------------------------------------------------------

    #[test]
    fn config_rejects_bad_values() {
        let bad = ChannelConfig { oversampling: 0, ..ChannelConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ChannelConfig { lpf_bandwidth: 1e12, ..ChannelConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ChannelConfig { distance_km: -1.0, ..ChannelConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ChannelConfig { enob: 0, ..ChannelConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn beta2_sign_and_magnitude() {
        let cfg = ChannelConfig::default();
        let b2 = cfg.beta2();
        // 17 ps/nm/km at 1550 nm is about -2.17e-26 s^2/m.
        assert!(b2 < 0.0);
        assert!((b2.abs() - 2.168e-26).abs() < 0.01e-26);
    }
}
