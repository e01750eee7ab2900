//! Experiment runners behind the CLI: deterministic Monte-Carlo batches and
//! the CSV artifacts for convergence traces, element/subcarrier sweeps, the
//! waveform report, the architecture comparison and the relaxation-quality
//! table.
//!
//! Every CSV starts with a metadata line (`# config_hash=..,seed=..,
//! schema_version=..`) followed by a column-name row. Floats are printed with
//! nine significant digits, and for a fixed configuration and seed the bytes
//! are reproducible run to run. Realizations are dispatched to a worker pool
//! and reduced in realization-index order, so the thread count never changes
//! the output.

use rayon::prelude::*;

use crate::beamforming::{alternating_optimize, OptimizerReport};
use crate::channel::generate_channel_set;
use crate::config::{BeamformerKind, SystemConfig};
use crate::error::{Error, Result};
use crate::rectenna::{papr, time_series};
use crate::ris::cascade_all;

/// Version stamp written into every CSV metadata line. Bump on any change to
/// a column set or to row semantics.
pub const SCHEMA_VERSION: u32 = 1;

/// FNV-1a hash of the canonical TOML serialization of the configuration.
pub fn config_hash(cfg: &SystemConfig) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in cfg.to_toml().as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Formats a float with nine significant digits in scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

/// A named CSV produced by an experiment; the CLI writes it under `--out`.
#[derive(Debug, Clone)]
pub struct CsvArtifact {
    /// File name relative to the output directory.
    pub name: String,
    /// Full file contents.
    pub text: String,
}

/// Incremental CSV assembly with the shared metadata header.
struct CsvBuilder {
    name: String,
    text: String,
}

impl CsvBuilder {
    fn new(name: &str, cfg: &SystemConfig, columns: &[&str]) -> Self {
        let mut text = format!(
            "# config_hash={:016x},seed={},schema_version={}\n",
            config_hash(cfg),
            cfg.seed,
            SCHEMA_VERSION
        );
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { name: name.to_string(), text }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    fn finish(self) -> CsvArtifact {
        CsvArtifact { name: self.name, text: self.text }
    }
}

/// Outcome of a Monte-Carlo batch: the per-realization reports in realization
/// order plus mean and sample standard deviation of the DC current.
#[derive(Debug)]
pub struct ExperimentResult {
    pub reports: Vec<OptimizerReport>,
    pub mean_idc: f64,
    pub std_idc: f64,
}

impl ExperimentResult {
    /// Aggregates a non-empty, realization-ordered report list.
    pub fn from_reports(reports: Vec<OptimizerReport>) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::Contract("cannot aggregate zero realizations".into()));
        }
        let n = reports.len() as f64;
        let mean = reports.iter().map(|r| r.idc).sum::<f64>() / n;
        let var = if reports.len() > 1 {
            reports.iter().map(|r| (r.idc - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(Self { reports, mean_idc: mean, std_idc: var.sqrt() })
    }
}

/// Runs `cfg.realizations` independent end-to-end optimizations on the worker
/// pool and reduces them in realization-index order.
pub fn run_batch(cfg: &SystemConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let reports: Vec<OptimizerReport> = (0..cfg.realizations as u64)
        .into_par_iter()
        .map(|r| {
            let ch = generate_channel_set(cfg, r)?;
            alternating_optimize(&ch, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    ExperimentResult::from_reports(reports)
}

fn with_kind(cfg: &SystemConfig, kind: BeamformerKind) -> SystemConfig {
    let mut out = cfg.clone();
    out.beamformer.kind = kind;
    out
}

/// Convergence traces on a single pinned realization for each algorithm.
///
/// Emits `convergence.csv` with one row per outer iteration.
pub fn run_convergence(
    cfg: &SystemConfig,
    algorithms: &[BeamformerKind],
) -> Result<Vec<CsvArtifact>> {
    cfg.validate()?;
    let mut csv =
        CsvBuilder::new("convergence.csv", cfg, &["iteration", "i_dc", "algorithm", "m", "n"]);
    let m = cfg.geometry.m;
    let n = cfg.carrier.n;
    let ch = generate_channel_set(cfg, 0)?;
    for &kind in algorithms {
        let report = alternating_optimize(&ch, &with_kind(cfg, kind))?;
        for (it, idc) in report.trace.iter().enumerate() {
            csv.row(&[
                (it + 1).to_string(),
                fmt_float(*idc),
                kind.label().to_string(),
                m.to_string(),
                n.to_string(),
            ]);
        }
    }
    Ok(vec![csv.finish()])
}

/// Shared body of the element-count and subcarrier-count sweeps.
fn sweep(
    cfg: &SystemConfig,
    axis: &str,
    values: &[usize],
    algorithms: &[BeamformerKind],
) -> Result<Vec<CsvArtifact>> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(Error::Config(format!("{axis} sweep needs at least one value")));
    }
    let mut agg = CsvBuilder::new(
        &format!("sweep_{axis}.csv"),
        cfg,
        &[axis, "algorithm", "realizations", "mean_i_dc", "std_i_dc"],
    );
    let mut raw = CsvBuilder::new(
        &format!("sweep_{axis}_raw.csv"),
        cfg,
        &[axis, "algorithm", "realization", "i_dc"],
    );
    for &v in values {
        let mut point = cfg.clone();
        match axis {
            "m" => point.geometry.m = v,
            "n" => point.carrier.n = v,
            _ => return Err(Error::Contract(format!("unknown sweep axis '{axis}'"))),
        }
        for &kind in algorithms {
            let result = run_batch(&with_kind(&point, kind))?;
            for (r, report) in result.reports.iter().enumerate() {
                raw.row(&[
                    v.to_string(),
                    kind.label().to_string(),
                    r.to_string(),
                    fmt_float(report.idc),
                ]);
            }
            agg.row(&[
                v.to_string(),
                kind.label().to_string(),
                result.reports.len().to_string(),
                fmt_float(result.mean_idc),
                fmt_float(result.std_idc),
            ]);
        }
    }
    Ok(vec![agg.finish(), raw.finish()])
}

/// Mean DC current versus the number of surface elements.
pub fn sweep_m(
    cfg: &SystemConfig,
    m_values: &[usize],
    algorithms: &[BeamformerKind],
) -> Result<Vec<CsvArtifact>> {
    sweep(cfg, "m", m_values, algorithms)
}

/// Mean DC current versus the number of subcarriers.
pub fn sweep_n(
    cfg: &SystemConfig,
    n_values: &[usize],
    algorithms: &[BeamformerKind],
) -> Result<Vec<CsvArtifact>> {
    sweep(cfg, "n", n_values, algorithms)
}

/// Per-subcarrier spectrum report and received time series for a single
/// pinned realization under the configured algorithm and power budget.
///
/// Emits `waveform_freq.csv` (gains normalized by their per-column maximum),
/// `waveform_time.csv` (one fundamental period of the received signal) and
/// `waveform_summary.csv` (power budget, PAPR and DC current).
pub fn waveform_report(cfg: &SystemConfig, oversampling: usize) -> Result<Vec<CsvArtifact>> {
    cfg.validate()?;
    if oversampling < 1 {
        return Err(Error::Config("oversampling must be >= 1".into()));
    }
    let ch = generate_channel_set(cfg, 0)?;
    let report = alternating_optimize(&ch, cfg)?;
    let cascade = cascade_all(&report.scattering, &ch);

    let normalize = |v: Vec<f64>| -> Vec<f64> {
        let max = v.iter().cloned().fold(0.0f64, f64::max);
        if max > 0.0 {
            v.into_iter().map(|x| x / max).collect()
        } else {
            v
        }
    };
    let gi = normalize(ch.h_i.iter().map(|h| h.norm()).collect());
    let gr = normalize(ch.h_r.iter().map(|h| h.norm()).collect());
    let gc = normalize(cascade.amplitudes());
    let gs = normalize(report.waveform.s.iter().map(|x| x.norm()).collect());

    let mut freq = CsvBuilder::new(
        "waveform_freq.csv",
        cfg,
        &[
            "subcarrier",
            "freq_hz",
            "h_incident_norm",
            "h_reflective_norm",
            "h_cascade_norm",
            "s_norm",
        ],
    );
    for i in 0..cfg.carrier.n {
        freq.row(&[
            i.to_string(),
            fmt_float(cfg.carrier.freq(i)),
            fmt_float(gi[i]),
            fmt_float(gr[i]),
            fmt_float(gc[i]),
            fmt_float(gs[i]),
        ]);
    }

    let samples = (oversampling * 128).max(256);
    let series = time_series(&report.waveform, &cascade, &cfg.carrier, samples)?;
    let mut time = CsvBuilder::new("waveform_time.csv", cfg, &["t_seconds", "y"]);
    for (t, y) in &series {
        time.row(&[fmt_float(*t), fmt_float(*y)]);
    }

    let papr_db = papr(&report.waveform, &cascade, &cfg.carrier, oversampling)?;
    let mut summary = CsvBuilder::new(
        "waveform_summary.csv",
        cfg,
        &["algorithm", "p_t_watts", "alpha", "papr_db", "i_dc"],
    );
    summary.row(&[
        cfg.beamformer.kind.label().to_string(),
        fmt_float(cfg.p_t),
        fmt_float(cfg.alpha),
        fmt_float(papr_db),
        fmt_float(report.idc),
    ]);

    Ok(vec![freq.finish(), time.finish(), summary.finish()])
}

/// Mean DC current of the fully-connected surface against the diagonal
/// baseline, over element counts and both channel regimes.
///
/// For each element count the comparison runs once on the pure-LoS channel
/// and once on the configured fading channel; the diagonal baseline uses the
/// closed-form phase match on LoS and the relaxation pipeline otherwise.
pub fn compare_architectures(
    cfg: &SystemConfig,
    m_values: &[usize],
) -> Result<Vec<CsvArtifact>> {
    cfg.validate()?;
    if m_values.is_empty() {
        return Err(Error::Config("architecture comparison needs element counts".into()));
    }
    let bd_kind = match cfg.beamformer.kind {
        BeamformerKind::DrisSdr | BeamformerKind::DrisLos => BeamformerKind::Sdr,
        kind => kind,
    };
    let fading_kappa = if cfg.kappa.is_finite() { cfg.kappa } else { 0.0 };
    let regimes = [
        ("los", f64::INFINITY, BeamformerKind::DrisLos),
        ("fading", fading_kappa, BeamformerKind::DrisSdr),
    ];

    let mut agg = CsvBuilder::new(
        "compare_ris.csv",
        cfg,
        &["m", "n", "channel", "kappa", "algorithm", "realizations", "mean_i_dc", "std_i_dc"],
    );
    let mut raw = CsvBuilder::new(
        "compare_ris_raw.csv",
        cfg,
        &["m", "n", "channel", "algorithm", "realization", "i_dc"],
    );
    for &m in m_values {
        for (channel, kappa, dris_kind) in regimes {
            let mut point = cfg.clone();
            point.geometry.m = m;
            point.kappa = kappa;
            for kind in [bd_kind, dris_kind] {
                let result = run_batch(&with_kind(&point, kind))?;
                for (r, report) in result.reports.iter().enumerate() {
                    raw.row(&[
                        m.to_string(),
                        cfg.carrier.n.to_string(),
                        channel.to_string(),
                        kind.label().to_string(),
                        r.to_string(),
                        fmt_float(report.idc),
                    ]);
                }
                agg.row(&[
                    m.to_string(),
                    cfg.carrier.n.to_string(),
                    channel.to_string(),
                    fmt_float(kappa),
                    kind.label().to_string(),
                    result.reports.len().to_string(),
                    fmt_float(result.mean_idc),
                    fmt_float(result.std_idc),
                ]);
            }
        }
    }
    Ok(vec![agg.finish(), raw.finish()])
}

/// Relaxation-quality table: DC current and dominant-eigenvalue share of the
/// relaxation solution for the rank-penalized and plain relaxations over a
/// list of `(elements, subcarriers)` setups.
pub fn dr_table(cfg: &SystemConfig, setups: &[(usize, usize)]) -> Result<Vec<CsvArtifact>> {
    cfg.validate()?;
    if setups.is_empty() {
        return Err(Error::Config("relaxation table needs at least one setup".into()));
    }
    let mut agg = CsvBuilder::new(
        "dr_table.csv",
        cfg,
        &["m", "n", "algorithm", "realizations", "mean_i_dc", "mean_dr"],
    );
    let mut raw = CsvBuilder::new(
        "dr_table_raw.csv",
        cfg,
        &["m", "n", "algorithm", "realization", "i_dc", "dr"],
    );
    for &(m, n) in setups {
        let mut point = cfg.clone();
        point.geometry.m = m;
        point.carrier.n = n;
        for kind in [BeamformerKind::Sdp, BeamformerKind::Sdr] {
            let result = run_batch(&with_kind(&point, kind))?;
            let mut dr_sum = 0.0;
            for (r, report) in result.reports.iter().enumerate() {
                let dr = report.dr.ok_or_else(|| {
                    Error::Contract("relaxation report is missing the rank share".into())
                })?;
                dr_sum += dr;
                raw.row(&[
                    m.to_string(),
                    n.to_string(),
                    kind.label().to_string(),
                    r.to_string(),
                    fmt_float(report.idc),
                    fmt_float(dr),
                ]);
            }
            agg.row(&[
                m.to_string(),
                n.to_string(),
                kind.label().to_string(),
                result.reports.len().to_string(),
                fmt_float(result.mean_idc),
                fmt_float(dr_sum / result.reports.len() as f64),
            ]);
        }
    }
    Ok(vec![agg.finish(), raw.finish()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SystemConfig {
        let mut cfg = SystemConfig::desk();
        cfg.geometry.m = 2;
        cfg.carrier.n = 2;
        cfg.realizations = 2;
        cfg.beamformer.k_rand = 200;
        cfg.beamformer.max_outer = 2;
        cfg.beamformer.max_inner = 3;
        cfg
    }

    #[test]
    fn config_hash_tracks_content() {
        let cfg = tiny();
        let mut other = cfg.clone();
        other.seed += 1;
        assert_eq!(config_hash(&cfg), config_hash(&cfg));
        assert_ne!(config_hash(&cfg), config_hash(&other));
    }

    #[test]
    fn float_format_has_nine_significant_digits() {
        assert_eq!(fmt_float(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(fmt_float(1234.5), "1.23450000e3");
    }

    #[test]
    fn batch_aggregates_match_reports() {
        let cfg = tiny();
        let result = run_batch(&cfg).unwrap();
        assert_eq!(result.reports.len(), cfg.realizations);
        let mean =
            result.reports.iter().map(|r| r.idc).sum::<f64>() / result.reports.len() as f64;
        assert!((result.mean_idc - mean).abs() <= 1e-15 * mean.abs().max(1.0));
    }

    #[test]
    fn convergence_rows_are_monotone_per_algorithm() {
        let cfg = tiny();
        let artifacts =
            run_convergence(&cfg, &[BeamformerKind::Sdr, BeamformerKind::It]).unwrap();
        assert_eq!(artifacts.len(), 1);
        let body: Vec<&str> = artifacts[0].text.lines().skip(2).collect();
        assert!(!body.is_empty());
        let mut last: Option<(String, f64)> = None;
        for line in body {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), 5);
            let idc: f64 = cells[1].parse().unwrap();
            if let Some((alg, prev)) = &last {
                if alg == cells[2] {
                    assert!(idc >= prev - prev.abs() * 1e-9);
                }
            }
            last = Some((cells[2].to_string(), idc));
        }
    }

    #[test]
    fn sweep_outputs_are_reproducible_and_consistent() {
        let cfg = tiny();
        let a = sweep_m(&cfg, &[2, 3], &[BeamformerKind::It]).unwrap();
        let b = sweep_m(&cfg, &[2, 3], &[BeamformerKind::It]).unwrap();
        assert_eq!(a[0].text, b[0].text);
        assert_eq!(a[1].text, b[1].text);
        // The aggregate mean must be recomputable from the raw rows.
        let raw: Vec<f64> = a[1]
            .text
            .lines()
            .skip(2)
            .filter(|l| l.starts_with("2,"))
            .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
            .collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let agg_mean: f64 = a[0]
            .text
            .lines()
            .nth(2)
            .unwrap()
            .split(',')
            .nth(3)
            .unwrap()
            .parse()
            .unwrap();
        // Both sides are rounded to nine significant digits independently.
        assert!((mean - agg_mean).abs() <= 1e-7 * mean.abs());
    }

    #[test]
    fn waveform_report_emits_three_artifacts() {
        let mut cfg = tiny();
        cfg.beamformer.kind = BeamformerKind::It;
        let artifacts = waveform_report(&cfg, 4).unwrap();
        let names: Vec<&str> = artifacts.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["waveform_freq.csv", "waveform_time.csv", "waveform_summary.csv"]);
        // One spectrum row per subcarrier, all normalized gains in [0, 1].
        let rows: Vec<&str> = artifacts[0].text.lines().skip(2).collect();
        assert_eq!(rows.len(), cfg.carrier.n);
        for row in rows {
            for cell in row.split(',').skip(2) {
                let v: f64 = cell.parse().unwrap();
                assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
    }

    #[test]
    fn invalid_inputs_surface_config_errors() {
        let cfg = tiny();
        assert!(matches!(sweep_m(&cfg, &[], &[BeamformerKind::It]), Err(Error::Config(_))));
        assert!(matches!(dr_table(&cfg, &[]), Err(Error::Config(_))));
        let mut bad = cfg.clone();
        bad.realizations = 0;
        assert!(matches!(run_batch(&bad), Err(Error::Config(_))));
    }
}
