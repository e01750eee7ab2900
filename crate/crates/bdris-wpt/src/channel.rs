//! Seeded per-subcarrier channel generation: uniform-planar-array LoS
//! steering, tapped-delay-line NLoS fading, Rician mixing and inverse-square
//! path gain.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{Geometry, SystemConfig, L0_REFERENCE_GAIN, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Tapped-delay-line power/delay profile for the NLoS component.
#[derive(Debug, Clone)]
pub struct TapProfile {
    /// Per-tap power, normalized to sum to one.
    pub powers: Vec<f64>,
    /// Per-tap delay in seconds, uniformly spaced in [0, 2/(alpha*BW)].
    pub delays: Vec<f64>,
}

impl TapProfile {
    /// Draws `l` tap powers i.i.d. uniform(0,1) and normalizes; delays are
    /// uniformly spaced up to the maximum delay spread `2/(alpha*bw)`.
    pub fn generate<R: Rng>(l: usize, alpha: f64, bw: f64, rng: &mut R) -> Result<Self> {
        if l < 1 {
            return Err(Error::Contract("tap count must be >= 1".into()));
        }
        if !(alpha > 0.0) || !(bw > 0.0) {
            return Err(Error::Domain("alpha and bw must be positive".into()));
        }
        let mut powers: Vec<f64> = (0..l).map(|_| rng.random::<f64>()).collect();
        let total: f64 = powers.iter().sum();
        for p in &mut powers {
            *p /= total;
        }
        let max_spread = 2.0 / (alpha * bw);
        let delays = if l == 1 {
            vec![0.0]
        } else {
            (0..l).map(|i| i as f64 * max_spread / (l - 1) as f64).collect()
        };
        Ok(Self { powers, delays })
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }
}

/// One set of per-subcarrier channel vectors for both hops.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Transmitter-to-RIS vectors, one length-M vector per subcarrier.
    pub h_i: Vec<DVector<Complex64>>,
    /// RIS-to-receiver vectors, one length-M vector per subcarrier.
    pub h_r: Vec<DVector<Complex64>>,
    /// Optional direct-link scalars per subcarrier.
    pub h_d: Option<Vec<Complex64>>,
    pub seed: u64,
    pub kappa: f64,
}

impl ChannelRealization {
    pub fn n(&self) -> usize {
        self.h_i.len()
    }

    pub fn m(&self) -> usize {
        self.h_i[0].len()
    }
}

/// Large-scale inverse-square path gain `L0 * d^-2` with `L0 = -40 dB`.
pub fn path_gain(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    Ok(L0_REFERENCE_GAIN / (d * d))
}

/// Far-field LoS steering vector of a uniform planar array at frequency `f`.
///
/// The array has `ceil(sqrt(M))` rows filled row-major; element (r, c) sits at
/// (r, c) * spacing and the phase is the inner product of the wavevector at
/// `f` with that position.
pub fn upa_los_vector(geometry: &Geometry, f: f64) -> DVector<Complex64> {
    let rows = geometry.grid_rows();
    let wavenumber = 2.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT;
    let u = geometry.theta_e.sin() * geometry.phi_e.cos();
    let v = geometry.theta_e.sin() * geometry.phi_e.sin();
    DVector::from_iterator(
        geometry.m,
        (0..geometry.m).map(|m| {
            let r = (m / rows) as f64;
            let c = (m % rows) as f64;
            let phase = wavenumber * geometry.spacing * (r * u + c * v);
            Complex64::from_polar(1.0, phase)
        }),
    )
}

/// Frequency response of a tapped-delay line at frequency `f`:
/// `sum_l g_l * exp(j 2 pi f t_l)`.
pub fn nlos_frequency_response(taps: &TapProfile, gains: &[Complex64], f: f64) -> Complex64 {
    taps.delays
        .iter()
        .zip(gains)
        .map(|(&t, &g)| g * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f * t))
        .sum()
}

/// Rician mixing `sqrt(k/(k+1)) los + sqrt(1/(k+1)) nlos`; `kappa = +inf`
/// selects the pure LoS component.
pub fn rician_combine(
    kappa: f64,
    los: &DVector<Complex64>,
    nlos: &DVector<Complex64>,
) -> Result<DVector<Complex64>> {
    if kappa < 0.0 {
        return Err(Error::Domain(format!("kappa must be nonnegative, got {kappa}")));
    }
    if kappa.is_infinite() {
        return Ok(los.clone());
    }
    let w_los = (kappa / (kappa + 1.0)).sqrt();
    let w_nlos = (1.0 / (kappa + 1.0)).sqrt();
    Ok(los * Complex64::from(w_los) + nlos * Complex64::from(w_nlos))
}

/// Draws complex Gaussian tap gains with per-tap variance `powers[l]`.
fn draw_tap_gains<R: Rng>(taps: &TapProfile, rng: &mut R) -> Vec<Complex64> {
    taps.powers
        .iter()
        .map(|&p| {
            let sd = (p / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * sd, im * sd)
        })
        .collect()
}

/// SplitMix64 finalizer; used to derive independent sub-seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        state = state.wrapping_add(p).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        state ^= state >> 31;
        state = state.wrapping_mul(0x94d0_49bb_1331_11eb);
        state ^= state >> 27;
    }
    state
}

fn hop_rng(master: u64, realization: u64, hop: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(&[master, realization, hop]))
}

/// Generates one hop: Rician mix of UPA LoS and tapped-delay NLoS, scaled by
/// the square-root path gain of the hop distance.
fn generate_hop(
    config: &SystemConfig,
    distance: f64,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<DVector<Complex64>>> {
    let taps = TapProfile::generate(config.taps, config.alpha, config.carrier.bw, rng)?;
    let gains: Vec<Vec<Complex64>> = (0..m).map(|_| draw_tap_gains(&taps, rng)).collect();
    let amp = path_gain(distance)?.sqrt();
    let freqs = config.carrier.freqs();
    let mut out = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        let los = upa_los_vector(&config.geometry, f);
        let nlos = DVector::from_iterator(
            m,
            (0..m).map(|e| nlos_frequency_response(&taps, &gains[e], f)),
        );
        let mixed = rician_combine(config.kappa, &los.rows(0, m).into_owned(), &nlos)?;
        out.push(mixed * Complex64::from(amp));
    }
    Ok(out)
}

/// Deterministic channel realization for `(config, seed, realization index)`.
///
/// The incident and reflective hops use independent sub-seeded RNG streams so
/// Monte-Carlo batches are order-independent.
pub fn generate_channel_set(
    config: &SystemConfig,
    realization: u64,
) -> Result<ChannelRealization> {
    config.validate()?;
    let m = config.geometry.m;
    let mut rng_i = hop_rng(config.seed, realization, 0);
    let mut rng_r = hop_rng(config.seed, realization, 1);
    let h_i = generate_hop(config, config.geometry.d_incident, m, &mut rng_i)?;
    let h_r = generate_hop(config, config.geometry.d_reflective, m, &mut rng_r)?;
    let h_d = match config.direct_distance {
        None => None,
        Some(d) => {
            let mut rng_d = hop_rng(config.seed, realization, 2);
            let mut direct_cfg = config.clone();
            direct_cfg.geometry.m = 1;
            let hop = generate_hop(&direct_cfg, d, 1, &mut rng_d)?;
            Some(hop.iter().map(|v| v[0]).collect())
        }
    };
    Ok(ChannelRealization { h_i, h_r, h_d, seed: config.seed, kappa: config.kappa })
}
