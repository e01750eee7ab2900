//! Nonlinear energy-harvester model: frequency-domain DC current, a
//! brute-force time-domain oracle, the amplitude gradient and PAPR.

use num_complex::Complex64;

use crate::config::{CarrierPlan, RectifierParams};
use crate::error::{Error, Result};

/// Complex subcarrier weights of the transmit waveform.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub s: Vec<Complex64>,
}

impl Waveform {
    pub fn new(s: Vec<Complex64>) -> Self {
        Self { s }
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    /// Transmit power `(1/2) sum |s_n|^2`.
    pub fn power(&self) -> f64 {
        0.5 * self.s.iter().map(|x| x.norm_sqr()).sum::<f64>()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.s.iter().map(|x| x.norm()).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.s.iter().map(|x| x.arg()).collect()
    }
}

/// Per-subcarrier end-to-end complex gains.
#[derive(Debug, Clone)]
pub struct CascadeChannel {
    pub h: Vec<Complex64>,
}

impl CascadeChannel {
    pub fn new(h: Vec<Complex64>) -> Self {
        Self { h }
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.h.iter().map(|x| x.norm()).collect()
    }
}

fn check_lengths(s: &Waveform, h: &CascadeChannel) -> Result<()> {
    if s.n() != h.n() {
        return Err(Error::Contract(format!(
            "waveform has {} tones but channel has {}",
            s.n(),
            h.n()
        )));
    }
    Ok(())
}

/// Ordered pair sums `A_sigma = sum_{a+b=sigma} x_a x_b` for sigma = 0..2N-2
/// (0-based subcarrier indices).
fn pair_sums(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let mut a = vec![Complex64::ZERO; 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            a[i + j] += x[i] * x[j];
        }
    }
    a
}

/// Frequency-domain DC current:
/// `(K2/2) sum |s_n h_n|^2 + (3K4/8) sum_{n0+n1=n2+n3} (h s)*_{n0} (h s)*_{n1} (h s)_{n2} (h s)_{n3}`.
///
/// The quadruple sum is grouped by the pair-sum index, which makes the result
/// manifestly real: it equals `(3K4/8) sum_sigma |A_sigma|^2`.
pub fn idc(s: &Waveform, h: &CascadeChannel, params: &RectifierParams) -> Result<f64> {
    check_lengths(s, h)?;
    let x: Vec<Complex64> = s.s.iter().zip(&h.h).map(|(a, b)| a * b).collect();
    let second: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    let fourth: f64 = pair_sums(&x).iter().map(|a| a.norm_sqr()).sum();
    Ok(params.k2 / 2.0 * second + 3.0 * params.k4 / 8.0 * fourth)
}

/// Time-domain oracle for [`idc`]: evaluates
/// `y(t) = sum_n Re{s_n h_n e^(j 2 pi f_n t)}` on a uniform grid covering one
/// fundamental period `1/delta_f` and returns `K2 mean(y^2) + K4 mean(y^4)`.
///
/// `oversampling` is the number of samples per period of the highest mixing
/// product `4 (f_c + BW)`; the grid is exact when every `f_n` is an integer
/// multiple of `delta_f`.
pub fn idc_time_oracle(
    s: &Waveform,
    h: &CascadeChannel,
    carrier: &CarrierPlan,
    oversampling: usize,
    params: &RectifierParams,
) -> Result<f64> {
    check_lengths(s, h)?;
    let moments = time_moments(s, h, carrier, oversampling)?;
    Ok(params.k2 * moments.0 + params.k4 * moments.1)
}

/// Second and fourth time-average moments of the received signal.
fn time_moments(
    s: &Waveform,
    h: &CascadeChannel,
    carrier: &CarrierPlan,
    oversampling: usize,
) -> Result<(f64, f64)> {
    let x: Vec<Complex64> = s.s.iter().zip(&h.h).map(|(a, b)| a * b).collect();
    let delta_f = carrier.delta_f();
    let f_max_mix = 4.0 * (carrier.f_c + carrier.bw);
    let samples = ((oversampling as f64 * f_max_mix / delta_f).ceil() as usize).max(16);
    let period = 1.0 / delta_f;
    let freqs = carrier.freqs();
    let (mut m2, mut m4) = (0.0, 0.0);
    for k in 0..samples {
        let t = period * k as f64 / samples as f64;
        let y: f64 = x
            .iter()
            .zip(&freqs)
            .map(|(&xn, &f)| {
                (xn * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f * t)).re
            })
            .sum();
        m2 += y * y;
        m4 += y * y * y * y;
    }
    Ok((m2 / samples as f64, m4 / samples as f64))
}

/// Gradient of [`idc`] with respect to the phase-matched real amplitudes:
/// `g_n = K2 hbar_n^2 sbar_n + (3K4/2) hbar_n sum_a x_a A_{n+a}` with
/// `x_n = hbar_n sbar_n` and `A_sigma` the ordered pair sums. This is the
/// exact derivative of the quadruple sum restricted to resonant index sets.
pub fn waveform_gradient(
    s_amp: &[f64],
    h_amp: &[f64],
    params: &RectifierParams,
) -> Result<Vec<f64>> {
    if s_amp.len() != h_amp.len() {
        return Err(Error::Contract("amplitude vectors differ in length".into()));
    }
    if s_amp.iter().chain(h_amp).any(|&v| v < 0.0) {
        return Err(Error::Contract("amplitudes must be nonnegative".into()));
    }
    let n = s_amp.len();
    let x: Vec<f64> = s_amp.iter().zip(h_amp).map(|(s, h)| s * h).collect();
    // A_sigma over real phase-matched products.
    let mut a = vec![0.0f64; 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            a[i + j] += x[i] * x[j];
        }
    }
    Ok((0..n)
        .map(|m| {
            let resonant: f64 = (0..n).map(|i| x[i] * a[m + i]).sum();
            params.k2 * h_amp[m] * h_amp[m] * s_amp[m]
                + 1.5 * params.k4 * h_amp[m] * resonant
        })
        .collect())
}

/// Peak-to-average power ratio of the received time-domain signal, in dB.
pub fn papr(
    s: &Waveform,
    h: &CascadeChannel,
    carrier: &CarrierPlan,
    oversampling: usize,
) -> Result<f64> {
    check_lengths(s, h)?;
    let x: Vec<Complex64> = s.s.iter().zip(&h.h).map(|(a, b)| a * b).collect();
    if x.iter().all(|v| v.norm_sqr() == 0.0) {
        return Err(Error::Signal("PAPR of the zero signal is undefined".into()));
    }
    let delta_f = carrier.delta_f();
    let f_max_mix = 4.0 * (carrier.f_c + carrier.bw);
    let samples = ((oversampling as f64 * f_max_mix / delta_f).ceil() as usize).max(16);
    let period = 1.0 / delta_f;
    let freqs = carrier.freqs();
    let mut peak = 0.0f64;
    let mut mean = 0.0f64;
    for k in 0..samples {
        let t = period * k as f64 / samples as f64;
        let y: f64 = x
            .iter()
            .zip(&freqs)
            .map(|(&xn, &f)| {
                (xn * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f * t)).re
            })
            .sum();
        peak = peak.max(y * y);
        mean += y * y;
    }
    mean /= samples as f64;
    Ok(10.0 * (peak / mean).log10())
}

/// Received time-domain samples over one fundamental period (for reports).
pub fn time_series(
    s: &Waveform,
    h: &CascadeChannel,
    carrier: &CarrierPlan,
    samples: usize,
) -> Result<Vec<(f64, f64)>> {
    check_lengths(s, h)?;
    let x: Vec<Complex64> = s.s.iter().zip(&h.h).map(|(a, b)| a * b).collect();
    let period = 1.0 / carrier.delta_f();
    let freqs = carrier.freqs();
    Ok((0..samples)
        .map(|k| {
            let t = period * k as f64 / samples as f64;
            let y: f64 = x
                .iter()
                .zip(&freqs)
                .map(|(&xn, &f)| {
                    (xn * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f * t)).re
                })
                .sum();
            (t, y)
        })
        .collect())
}
