//! System configuration: carrier plan, geometry, rectifier constants and
//! algorithm hyperparameters, plus the named presets used by the CLI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference path power gain at 1 m (-40 dB).
pub const L0_REFERENCE_GAIN: f64 = 1e-4;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Multi-carrier frequency plan. Subcarrier `i` (0-based) sits at
/// `f_c + i * delta_f` with `delta_f = bw / n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarrierPlan {
    /// Lowest subcarrier frequency in Hz.
    pub f_c: f64,
    /// Number of subcarriers.
    pub n: usize,
    /// Total bandwidth in Hz.
    pub bw: f64,
}

impl CarrierPlan {
    pub fn new(f_c: f64, n: usize, bw: f64) -> Result<Self> {
        let plan = Self { f_c, n, bw };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Config("carrier plan needs n >= 1".into()));
        }
        if !(self.f_c > 0.0) || !(self.bw > 0.0) {
            return Err(Error::Config("carrier plan needs f_c > 0 and bw > 0".into()));
        }
        Ok(())
    }

    /// Subcarrier spacing in Hz.
    pub fn delta_f(&self) -> f64 {
        self.bw / self.n as f64
    }

    /// Frequency of subcarrier `i` (0-based).
    pub fn freq(&self, i: usize) -> f64 {
        self.f_c + i as f64 * self.delta_f()
    }

    /// All subcarrier frequencies, strictly increasing.
    pub fn freqs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.freq(i)).collect()
    }
}

/// Physical layout of the surface and the two hops.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Geometry {
    /// Number of RIS elements.
    pub m: usize,
    /// Element spacing in meters (half a wavelength at `f_c` in the presets).
    pub spacing: f64,
    /// Transmitter-to-RIS distance in meters.
    pub d_incident: f64,
    /// RIS-to-receiver distance in meters.
    pub d_reflective: f64,
    /// Elevation angle in radians, in [0, pi/2].
    pub theta_e: f64,
    /// Azimuth angle in radians, in [0, pi/2].
    pub phi_e: f64,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Config("geometry needs m >= 1".into()));
        }
        if !(self.spacing > 0.0) || !(self.d_incident > 0.0) || !(self.d_reflective > 0.0) {
            return Err(Error::Config("geometry distances must be positive".into()));
        }
        let half_pi = std::f64::consts::FRAC_PI_2 + 1e-12;
        for (name, a) in [("theta_e", self.theta_e), ("phi_e", self.phi_e)] {
            if !(0.0..=half_pi).contains(&a) {
                return Err(Error::Config(format!("{name} must be in [0, pi/2]")));
            }
        }
        Ok(())
    }

    /// UPA grid rows: `ceil(sqrt(M))`, filled row-major.
    pub fn grid_rows(&self) -> usize {
        (self.m as f64).sqrt().ceil() as usize
    }
}

/// Rectifier Taylor-model constants (truncation order fixed at 4).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RectifierParams {
    pub k2: f64,
    pub k4: f64,
}

impl RectifierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k2 > 0.0) || !(self.k4 > 0.0) {
            return Err(Error::Config("rectifier constants must be positive".into()));
        }
        Ok(())
    }
}

/// Hyperparameters of the iterative waveform optimizer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaveformOptConfig {
    /// Step control in (0, 1].
    pub rho_s: f64,
    /// Relative convergence tolerance.
    pub upsilon: f64,
    /// Scaled-matched-filter init exponent.
    pub beta: f64,
    pub max_iters: usize,
}

impl Default for WaveformOptConfig {
    fn default() -> Self {
        Self { rho_s: 0.5, upsilon: 1e-5, beta: 1.0, max_iters: 2000 }
    }
}

impl WaveformOptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_s > 0.0 && self.rho_s <= 1.0) {
            return Err(Error::Config("rho_s must be in (0, 1]".into()));
        }
        if !(self.upsilon > 0.0) {
            return Err(Error::Config("upsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Which beamforming algorithm drives the scattering matrix update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamformerKind {
    /// Semidefinite relaxation with Gaussian randomization.
    Sdr,
    /// SDP with the atomic-minus-Frobenius rank-1 surrogate.
    Sdp,
    /// Successive convex approximation on the scattering matrix directly.
    Sca,
    /// Closed-form iterative updates on the impedance matrix.
    It,
    /// Diagonal-RIS baseline through the SDR pipeline.
    DrisSdr,
    /// Diagonal-RIS closed-form LoS phase matching.
    DrisLos,
}

impl BeamformerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sdr" => Ok(Self::Sdr),
            "sdp" => Ok(Self::Sdp),
            "sca" => Ok(Self::Sca),
            "it" => Ok(Self::It),
            "dris" | "dris-sdr" => Ok(Self::DrisSdr),
            "dris-los" => Ok(Self::DrisLos),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Sdr => "sdr",
            Self::Sdp => "sdp",
            Self::Sca => "sca",
            Self::It => "it",
            Self::DrisSdr => "dris-sdr",
            Self::DrisLos => "dris-los",
        }
    }
}

/// Hyperparameters shared by the beamforming optimizers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamformerConfig {
    pub kind: BeamformerKind,
    /// Relative convergence tolerance for outer and inner loops.
    pub upsilon: f64,
    /// Neumann step sizing, much smaller than 1.
    pub gamma: f64,
    /// Impedance update damping in (0, 1].
    pub rho_omega: f64,
    /// Initial SCA penalty weight.
    pub sigma0: f64,
    /// SCA trust-region radius.
    pub iota: f64,
    /// Randomization draw count (Gaussian randomization and feasibility mapping).
    pub k_rand: usize,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for BeamformerConfig {
    fn default() -> Self {
        Self {
            kind: BeamformerKind::Sdr,
            upsilon: 1e-4,
            gamma: 0.01,
            rho_omega: 0.5,
            sigma0: 1e-5,
            iota: 1.0,
            k_rand: 10_000,
            max_outer: 20,
            max_inner: 200,
        }
    }
}

impl BeamformerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("gamma must be in (0, 1)".into()));
        }
        if !(self.rho_omega > 0.0 && self.rho_omega <= 1.0) {
            return Err(Error::Config("rho_omega must be in (0, 1]".into()));
        }
        if !(self.sigma0 > 0.0) || !(self.iota > 0.0) {
            return Err(Error::Config("sigma0 and iota must be positive".into()));
        }
        if self.k_rand < 1 {
            return Err(Error::Config("k_rand must be >= 1".into()));
        }
        Ok(())
    }
}

/// Full experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    pub carrier: CarrierPlan,
    pub geometry: Geometry,
    /// Rician factor (linear); `inf` selects pure LoS.
    pub kappa: f64,
    /// Coherence-bandwidth ratio for the tapped-delay NLoS model.
    pub alpha: f64,
    /// Number of NLoS delay taps.
    pub taps: usize,
    /// Transmit power budget in watts (the CLI converts from dBm).
    pub p_t: f64,
    pub rectifier: RectifierParams,
    pub beamformer: BeamformerConfig,
    pub waveform: WaveformOptConfig,
    /// Monte-Carlo realization count.
    pub realizations: usize,
    /// Master seed; per-realization seeds are derived from it.
    pub seed: u64,
    /// Direct ET-ER link distance in meters; absent disables the direct path.
    pub direct_distance: Option<f64>,
}

impl SystemConfig {
    /// Paper-scale WiFi preset: 2.4 GHz carrier, 10 MHz bandwidth, 2 m hops,
    /// pi/6 incidence angles, 18 taps, the fitted rectifier constants and
    /// 50000 randomization draws.
    pub fn paper_wifi() -> Self {
        let f_c: f64 = 2.4e9;
        let lambda = SPEED_OF_LIGHT / f_c;
        Self {
            carrier: CarrierPlan { f_c, n: 4, bw: 10e6 },
            geometry: Geometry {
                m: 16,
                spacing: lambda / 2.0,
                d_incident: 2.0,
                d_reflective: 2.0,
                theta_e: std::f64::consts::FRAC_PI_6,
                phi_e: std::f64::consts::FRAC_PI_6,
            },
            kappa: 0.0,
            alpha: 0.1,
            taps: 18,
            p_t: dbm_to_watts(50.0),
            rectifier: RectifierParams { k2: 0.17, k4: 957.25 },
            beamformer: BeamformerConfig { k_rand: 50_000, ..Default::default() },
            waveform: WaveformOptConfig::default(),
            realizations: 200,
            seed: 1,
            direct_distance: None,
        }
    }

    /// Desk-scale preset for CI: small surface, few realizations, 10^4 draws.
    pub fn desk() -> Self {
        let mut cfg = Self::paper_wifi();
        cfg.geometry.m = 4;
        cfg.carrier.n = 4;
        cfg.beamformer.k_rand = 10_000;
        cfg.realizations = 20;
        cfg
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-wifi" => Ok(Self::paper_wifi()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.carrier.validate()?;
        self.geometry.validate()?;
        self.rectifier.validate()?;
        self.beamformer.validate()?;
        self.waveform.validate()?;
        if self.kappa < 0.0 {
            return Err(Error::Config("kappa must be nonnegative".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.taps < 1 {
            return Err(Error::Config("need at least one delay tap".into()));
        }
        if !(self.p_t > 0.0) {
            return Err(Error::Config("p_t must be positive".into()));
        }
        if self.realizations < 1 {
            return Err(Error::Config("realizations must be >= 1".into()));
        }
        if let Some(d) = self.direct_distance {
            if !(d > 0.0) {
                return Err(Error::Config("direct_distance must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// dBm to linear watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Linear watts to dBm.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}
