//! Command implementations behind the `atmobell` binary.
//!
//! Every command is a pure function from a parsed [`RunConfig`] to output
//! text, so runs are reproducible byte for byte given the same
//! configuration and seed. CSV values are written with 17 significant
//! digits and LF line endings.

use crate::channels::{
    joint_feasibility, pdt_moments, sample_pdt, ChannelScenario, TransmittanceModel,
};
use crate::chsh::maximize_bell;
use crate::config::RunConfig;
use crate::fockoracle::oracle_joint_probs;
use crate::photocount::{pdc_click_probs, DetectorParams, SourceModel};
use crate::{derive_seed, Error, Result};

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_row(out: &mut String, values: &[f64]) {
    let row: Vec<String> = values.iter().map(|&v| sci(v)).collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

/// Replaces every leaf channel of the scenario by its mean-transmittance
/// deterministic counterpart (the non-fading baseline).
fn deterministic_baseline(
    scenario: &ChannelScenario,
    samples: usize,
    seed: u64,
) -> Result<ChannelScenario> {
    let mean = |model: &TransmittanceModel, stream: u64| -> Result<TransmittanceModel> {
        let m = pdt_moments(model, samples, derive_seed(seed, stream))?;
        Ok(TransmittanceModel::Deterministic(m.mean))
    };
    Ok(match scenario {
        ChannelScenario::Copropagating(m) => ChannelScenario::Copropagating(mean(m, 0)?),
        ChannelScenario::Counterpropagating(a, b) => {
            ChannelScenario::Counterpropagating(mean(a, 1)?, mean(b, 2)?)
        }
    })
}

/// Wraps every leaf channel in a postselection filter at `eta_ps`.
fn postselected_scenario(scenario: &ChannelScenario, eta_ps: f64) -> ChannelScenario {
    let wrap = |model: &TransmittanceModel| TransmittanceModel::Postselected {
        inner: Box::new(model.clone()),
        eta_ps,
    };
    match scenario {
        ChannelScenario::Copropagating(m) => ChannelScenario::Copropagating(wrap(m)),
        ChannelScenario::Counterpropagating(a, b) => {
            ChannelScenario::Counterpropagating(wrap(a), wrap(b))
        }
    }
}

pub const SCAN_SQUEEZING_HEADER: &str = "xi,bell_fading_dc,se_fading_dc,bell_fading_nodc,\
se_fading_nodc,bell_det_dc,se_det_dc,bell_det_nodc,se_det_nodc";

/// Bell parameter versus squeezing for the fading channel and its
/// mean-transmittance deterministic baseline, with and without
/// double-click squashing.
pub fn run_scan_squeezing(cfg: &RunConfig) -> Result<String> {
    if !matches!(cfg.source, SourceModel::Pdc { .. }) {
        return Err(Error::InvalidParameter {
            name: "source",
            message: "scan-squeezing requires a PDC source".into(),
        });
    }
    if cfg.xi_grid.is_empty() {
        return Err(Error::InvalidParameter {
            name: "grid.xi",
            message: "scan-squeezing needs a [grid] xi entry".into(),
        });
    }
    let det_scenario = deterministic_baseline(&cfg.scenario, cfg.samples, derive_seed(cfg.seed, 9000))?;
    let mut out = format!("{SCAN_SQUEEZING_HEADER}\n");
    for (i, &xi) in cfg.xi_grid.iter().enumerate() {
        let source = SourceModel::Pdc { xi };
        let seed = derive_seed(cfg.seed, i as u64);
        let mut row = vec![xi];
        for include in [true, false] {
            let r = maximize_bell(&source, &cfg.scenario, &cfg.detector, include, cfg.samples, seed)?;
            row.push(r.bell);
            row.push(r.stderr);
        }
        for include in [true, false] {
            let r = maximize_bell(&source, &det_scenario, &cfg.detector, include, 1, seed)?;
            row.push(r.bell);
            row.push(r.stderr);
        }
        push_row(&mut out, &row);
    }
    Ok(out)
}

pub const SCAN_POSTSELECTION_HEADER: &str =
    "eta_ps,bell,bell_stderr,feasibility,feasibility_stderr";

/// Bell parameter and joint feasibility versus the postselection threshold.
pub fn run_scan_postselection(cfg: &RunConfig, include_double_clicks: bool) -> Result<String> {
    if cfg.eta_ps_grid.is_empty() {
        return Err(Error::InvalidParameter {
            name: "grid.eta_ps",
            message: "scan-postselection needs a [grid] eta_ps entry".into(),
        });
    }
    let mut out = format!("{SCAN_POSTSELECTION_HEADER}\n");
    for (i, &eta_ps) in cfg.eta_ps_grid.iter().enumerate() {
        let scenario = postselected_scenario(&cfg.scenario, eta_ps);
        let r = maximize_bell(
            &cfg.source,
            &scenario,
            &cfg.detector,
            include_double_clicks,
            cfg.samples,
            derive_seed(cfg.seed, 2000 + i as u64),
        )?;
        let feas = joint_feasibility(
            &cfg.scenario,
            eta_ps,
            cfg.samples,
            derive_seed(cfg.seed, 3000 + i as u64),
        )?;
        push_row(&mut out, &[eta_ps, r.bell, r.stderr, feas.value, feas.stderr]);
    }
    Ok(out)
}

pub const PDT_STATS_HEADER: &str = "channel,bin_low,bin_high,probability";

/// PDT statistics output: a plain-text summary and a histogram CSV.
pub struct PdtStats {
    pub summary: String,
    pub csv: String,
}

/// Transmittance moments and a 100-bin histogram per channel. Exceedance
/// probabilities are reported for every threshold on the `eta_ps` grid.
pub fn run_pdt_stats(cfg: &RunConfig) -> Result<PdtStats> {
    let channels: Vec<(&str, &TransmittanceModel)> = match &cfg.scenario {
        ChannelScenario::Copropagating(m) => vec![("a", m)],
        ChannelScenario::Counterpropagating(a, b) => vec![("a", a), ("b", b)],
    };
    let mut summary = String::new();
    let mut csv = format!("{PDT_STATS_HEADER}\n");
    for (stream, (label, model)) in channels.into_iter().enumerate() {
        let seed = derive_seed(cfg.seed, stream as u64);
        let m = pdt_moments(model, cfg.samples, seed)?;
        summary.push_str(&format!(
            "channel {label}: mean = {} (se {}), variance = {}\n",
            sci(m.mean),
            sci(m.se_mean),
            sci(m.variance)
        ));
        for &eta_ps in &cfg.eta_ps_grid {
            let e = crate::channels::exceedance(model, eta_ps, cfg.samples, derive_seed(seed, 7))?;
            summary.push_str(&format!(
                "channel {label}: P(eta >= {}) = {} (se {})\n",
                sci(eta_ps),
                sci(e.value),
                sci(e.stderr)
            ));
        }
        let samples = sample_pdt(model, cfg.samples, seed)?;
        let top = samples.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
        let n = samples.len() as f64;
        let mut bins = [0usize; 100];
        for &s in &samples {
            let idx = ((s / top) * 100.0).floor().min(99.0) as usize;
            bins[idx] += 1;
        }
        for (b, &count) in bins.iter().enumerate() {
            csv.push_str(&format!(
                "{label},{},{},{}\n",
                sci(b as f64 / 100.0 * top),
                sci((b + 1) as f64 / 100.0 * top),
                sci(count as f64 / n)
            ));
        }
    }
    Ok(PdtStats { summary, csv })
}

/// Outcome of the closed-form versus Fock-oracle cross-validation.
pub struct ValidationReport {
    pub points: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the closed-form click probabilities against the truncated-Fock
/// oracle on a fixed parameter grid, for both squashing variants.
///
/// `perturb` is added to the closed form's detection efficiency; a nonzero
/// value is a deliberate fault injection demonstrating that the check has
/// teeth.
pub fn run_validate(perturb: f64) -> Result<ValidationReport> {
    const TOL: f64 = 1e-6;
    let mut max_dev: f64 = 0.0;
    let mut points = 0;
    for &xi in &[0.05, 0.1, 0.2] {
        for &eta_c in &[0.3, 0.6] {
            for &nu in &[0.0, 1e-3] {
                for &(eta_a, eta_b) in &[(1.0, 1.0), (0.7, 0.3), (0.1, 0.1)] {
                    for &delta in &[0.0, std::f64::consts::FRAC_PI_8, std::f64::consts::FRAC_PI_4]
                    {
                        let det = DetectorParams { eta_c, nu };
                        let det_closed = DetectorParams {
                            eta_c: eta_c + perturb,
                            nu,
                        };
                        points += 1;
                        for include in [true, false] {
                            let (os, od) = oracle_joint_probs(
                                xi, &det, eta_a, eta_b, delta, 0.0, 6, include,
                            )?;
                            let closed = pdc_click_probs(
                                xi,
                                &det_closed,
                                &[(eta_a, eta_b)],
                                delta,
                                include,
                            )?;
                            max_dev = max_dev
                                .max((os - closed.p_same).abs())
                                .max((od - closed.p_different).abs());
                        }
                    }
                }
            }
        }
    }
    Ok(ValidationReport {
        points,
        max_deviation: max_dev,
        tolerance: TOL,
        passed: max_dev <= TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use std::path::Path;

    fn small_config() -> RunConfig {
        let text = "\
[source]
kind = pdc
xi = 0.1

[detector]
eta_c = 0.3
nu = 1.7e-5

[scenario]
kind = copropagating
channel = strong

[grid]
xi = 0.05,0.15
eta_ps = 0,0.002

[run]
samples = 2000
seed = 5

[strong]
kind = lognormal
mu = 7.49
sigma = 1.08
eta_m = 0.04
";
        parse_config(text, Path::new(".")).unwrap()
    }

    #[test]
    fn scan_squeezing_runs_are_byte_identical() {
        let cfg = small_config();
        let a = run_scan_squeezing(&cfg).unwrap();
        let b = run_scan_squeezing(&cfg).unwrap();
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines[0], SCAN_SQUEEZING_HEADER);
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 9);
        assert!(!a.contains('\r'));
    }

    #[test]
    fn scan_squeezing_seed_changes_output() {
        let cfg = small_config();
        let mut cfg2 = small_config();
        cfg2.seed = 6;
        assert_ne!(run_scan_squeezing(&cfg).unwrap(), run_scan_squeezing(&cfg2).unwrap());
    }

    #[test]
    fn scan_postselection_has_feasibility_column() {
        let cfg = small_config();
        let out = run_scan_postselection(&cfg, true).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], SCAN_POSTSELECTION_HEADER);
        assert_eq!(lines.len(), 3);
        // eta_ps = 0 keeps everything: feasibility 1.
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[3].parse::<f64>().unwrap(), 1.0);
    }

    #[test]
    fn pdt_stats_histogram_normalized() {
        let cfg = small_config();
        let stats = run_pdt_stats(&cfg).unwrap();
        assert!(stats.summary.contains("channel a: mean"));
        let total: f64 = stats
            .csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validate_negative_control_fails() {
        let report = run_validate(0.05).unwrap();
        assert!(!report.passed);
        assert!(report.max_deviation > report.tolerance);
    }
}
