//! Waveform optimization over a fixed cascade channel: scaled-matched-filter
//! initialization and the damped closed-form amplitude iteration.

use num_complex::Complex64;

use crate::config::{RectifierParams, WaveformOptConfig};
use crate::error::{Error, Result};
use crate::rectenna::{idc, waveform_gradient, CascadeChannel, Waveform};

/// Outcome of the iterative waveform optimizer.
#[derive(Debug, Clone)]
pub struct ItWfReport {
    pub waveform: Waveform,
    /// DC current after each accepted iterate, starting at the initialization.
    pub trace: Vec<f64>,
    /// False when the iteration hit `max_iters` before meeting the tolerance.
    pub converged: bool,
}

impl ItWfReport {
    pub fn final_idc(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

/// Scaled matched filter: `s_n = e^{-j h~_n} hbar_n^beta sqrt(2 P_T / sum hbar^(2 beta))`.
///
/// `beta = 0` gives uniform power allocation, `beta = 1` the matched filter.
/// The power budget is met with equality.
pub fn smf_init(h: &CascadeChannel, p_t: f64, beta: f64) -> Result<Waveform> {
    if p_t <= 0.0 {
        return Err(Error::Domain(format!("transmit power must be positive, got {p_t}")));
    }
    let amps = h.amplitudes();
    let weight_sq: f64 = amps.iter().map(|a| a.powf(2.0 * beta)).sum();
    if weight_sq <= 0.0 || !weight_sq.is_finite() {
        return Err(Error::Signal("SMF initialization needs a nonzero channel".into()));
    }
    let scale = (2.0 * p_t / weight_sq).sqrt();
    let s = h
        .h
        .iter()
        .zip(&amps)
        .map(|(hn, &a)| Complex64::from_polar(a.powf(beta) * scale, -hn.arg()))
        .collect();
    Ok(Waveform::new(s))
}

/// Dual variable of the power constraint: `lambda = sqrt(sum g^2 / (2 P_T))`,
/// chosen so that `s* = g / lambda` exhausts the budget.
pub fn dual_lambda(g: &[f64], p_t: f64) -> Result<f64> {
    if p_t <= 0.0 {
        return Err(Error::Domain(format!("transmit power must be positive, got {p_t}")));
    }
    let g_sq: f64 = g.iter().map(|v| v * v).sum();
    if g_sq <= 0.0 {
        return Err(Error::Signal("zero gradient: already stationary at zero".into()));
    }
    Ok((g_sq / (2.0 * p_t)).sqrt())
}

fn matched_waveform(amps: &[f64], h: &CascadeChannel) -> Waveform {
    Waveform::new(
        amps.iter()
            .zip(&h.h)
            .map(|(&a, hn)| Complex64::from_polar(a, -hn.arg()))
            .collect(),
    )
}

/// Iterative waveform optimization: phases are pinned to the channel
/// conjugate and the real amplitudes follow the damped fixed-point update
/// `sbar <- sbar + rho_s (g/lambda - sbar)`.
///
/// The returned trace is non-decreasing: a step that would lower the DC
/// current is retried with a smaller damping factor, and the best iterate is
/// kept if no improving step exists.
pub fn it_wf(
    h: &CascadeChannel,
    p_t: f64,
    params: &RectifierParams,
    cfg: &WaveformOptConfig,
) -> Result<ItWfReport> {
    let init = smf_init(h, p_t, cfg.beta)?;
    let h_amp = h.amplitudes();
    let mut amps = init.amplitudes();
    let mut current = idc(&init, h, params)?;
    let mut trace = vec![current];
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        let g = waveform_gradient(&amps, &h_amp, params)?;
        let lambda = match dual_lambda(&g, p_t) {
            Ok(v) => v,
            Err(Error::Signal(_)) => {
                converged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let target: Vec<f64> = g.iter().map(|v| v / lambda).collect();

        // Damped update with backtracking so the trace never decreases.
        let mut rho = cfg.rho_s;
        let mut accepted = None;
        for _ in 0..30 {
            let candidate: Vec<f64> = amps
                .iter()
                .zip(&target)
                .map(|(&a, &t)| a + rho * (t - a))
                .collect();
            let wf = matched_waveform(&candidate, h);
            let value = idc(&wf, h, params)?;
            if value >= current {
                accepted = Some((candidate, value));
                break;
            }
            rho *= 0.5;
        }
        let Some((next, value)) = accepted else {
            converged = true;
            break;
        };
        amps = next;
        let rel = if current > 0.0 { (1.0 - value / current).abs() } else { f64::INFINITY };
        current = value;
        trace.push(current);
        if rel <= cfg.upsilon {
            converged = true;
            break;
        }
    }

    Ok(ItWfReport {
        waveform: matched_waveform(&amps, h),
        trace,
        converged,
    })
}
