//! CHSH correlation assembly and Bell-parameter maximization over analyzer
//! angles.

use crate::channels::{sample_pairs, ChannelScenario};
use crate::photocount::{
    bell_channel_probs, bell_state_bell_parameter, DetectorParams, PdcEnsemble,
    SourceModel,
};
use crate::{Error, Result};

/// The four analyzer settings of a CHSH measurement: two on Alice's side and
/// two on Bob's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSettings {
    pub theta_a: [f64; 2],
    pub theta_b: [f64; 2],
}

impl AngleSettings {
    /// The canonical maximally violating set `(0, pi/4)` x `(pi/8, 3 pi/8)`.
    pub fn canonical() -> Self {
        use std::f64::consts::PI;
        Self {
            theta_a: [0.0, PI / 4.0],
            theta_b: [PI / 8.0, 3.0 * PI / 8.0],
        }
    }
}

/// A Bell-parameter estimate together with the angles that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellResult {
    pub bell: f64,
    pub stderr: f64,
    pub angles: AngleSettings,
}

/// Correlation coefficient `E = (P_same - P_diff) / (P_same + P_diff)`.
///
/// Errors if the coincidence rate vanishes, in which case no correlation is
/// defined.
pub fn correlation(p_same: f64, p_different: f64) -> Result<f64> {
    let total = p_same + p_different;
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((p_same - p_different) / total)
}

/// CHSH combination `|E(a1,b1) - E(a1,b2)| + |E(a2,b2) + E(a2,b1)|`.
pub fn bell_parameter(e11: f64, e12: f64, e21: f64, e22: f64) -> f64 {
    (e11 - e12).abs() + (e22 + e21).abs()
}

/// Nelder-Mead simplex minimizer for small smooth problems.
///
/// Standard coefficients (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2); terminates when the simplex value spread falls below `tol`
/// or after `max_evals` function evaluations. Returns the best vertex seen.
fn nelder_mead<const N: usize, F: FnMut(&[f64; N]) -> f64>(
    mut f: F,
    start: [f64; N],
    step: f64,
    tol: f64,
    max_evals: usize,
) -> ([f64; N], f64) {
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    let mut evals = 0;
    let mut eval = |x: &[f64; N], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    simplex.push((start, eval(&start, &mut evals)));
    for i in 0..N {
        let mut x = start;
        x[i] += step;
        simplex.push((x, eval(&x, &mut evals)));
    }
    let mut best = simplex[0];
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best.1 {
            best = simplex[0];
        }
        if simplex[N].1 - simplex[0].1 < tol || evals >= max_evals {
            return (best.0, best.1);
        }
        let mut centroid = [0.0; N];
        for v in &simplex[..N] {
            for (c, x) in centroid.iter_mut().zip(v.0.iter()) {
                *c += x / N as f64;
            }
        }
        let worst = simplex[N];
        let at = |alpha: f64| {
            let mut x = [0.0; N];
            for i in 0..N {
                x[i] = centroid[i] + alpha * (centroid[i] - worst.0[i]);
            }
            x
        };
        let xr = at(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = at(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (xr, fr);
        } else {
            let xc = at(if fr < worst.1 { 0.5 } else { -0.5 });
            let fc = eval(&xc, &mut evals);
            if fc < worst.1.min(fr) {
                simplex[N] = (xc, fc);
            } else {
                let x0 = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    for i in 0..N {
                        v.0[i] = x0[i] + 0.5 * (v.0[i] - x0[i]);
                    }
                    v.1 = eval(&v.0, &mut evals);
                }
            }
        }
    }
}

/// Bell parameter of a PDC ensemble at fixed angles.
fn pdc_bell_at(
    ens: &PdcEnsemble,
    angles: &AngleSettings,
    include_double_clicks: bool,
) -> Result<f64> {
    let mut e = [[0.0; 2]; 2];
    for (i, &ta) in angles.theta_a.iter().enumerate() {
        for (j, &tb) in angles.theta_b.iter().enumerate() {
            let (ps, pd) = ens.probs(ta - tb, include_double_clicks);
            e[i][j] = correlation(ps, pd)?;
        }
    }
    Ok(bell_parameter(e[0][0], e[0][1], e[1][0], e[1][1]))
}

/// Batch-means standard error of the PDC Bell parameter at fixed angles.
fn pdc_bell_stderr(
    ens: &PdcEnsemble,
    angles: &AngleSettings,
    include_double_clicks: bool,
    batches: usize,
) -> Result<f64> {
    let mut per_batch: Vec<Vec<(f64, f64)>> = Vec::with_capacity(4);
    for &ta in &angles.theta_a {
        for &tb in &angles.theta_b {
            per_batch.push(ens.probs_batched(ta - tb, include_double_clicks, batches));
        }
    }
    let k = per_batch[0].len();
    if k < 2 {
        return Ok(0.0);
    }
    let mut values = Vec::with_capacity(k);
    for b in 0..k {
        let e = |idx: usize| {
            let (ps, pd) = per_batch[idx][b];
            correlation(ps, pd)
        };
        values.push(bell_parameter(e(0)?, e(1)?, e(2)?, e(3)?));
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k as f64 - 1.0);
    Ok((var / k as f64).sqrt())
}

/// Maximizes the CHSH parameter over analyzer angles for a source and
/// channel scenario.
///
/// The Bell-state source attains its maximum at the canonical angles, where
/// the closed form is evaluated directly. For the PDC source one
/// transmittance sample of size `count` is drawn (common random numbers
/// across all angle evaluations) and the three free angles are optimized by
/// Nelder-Mead from the canonical start plus three perturbed restarts;
/// `theta_a[0] = 0` is fixed by rotational invariance. The result is never
/// below the canonical-angle value.
pub fn maximize_bell(
    source: &SourceModel,
    scenario: &ChannelScenario,
    detector: &DetectorParams,
    include_double_clicks: bool,
    count: usize,
    seed: u64,
) -> Result<BellResult> {
    detector.validate()?;
    scenario.validate()?;
    match source {
        SourceModel::BellState => {
            let est = bell_channel_probs(scenario, count, seed)?;
            let bell = bell_state_bell_parameter(&est.probs, detector, include_double_clicks);
            // First-order error propagation through the p_bell and p0
            // sensitivities of the closed form.
            let h = 1e-6;
            let bump = |dpb: f64, dp0: f64| {
                let mut p = est.probs;
                p.p_bell += dpb;
                p.p0 += dp0;
                p.p1 = 1.0 - p.p0 - p.p_bell;
                bell_state_bell_parameter(&p, detector, include_double_clicks)
            };
            let dpb = (bump(h, 0.0) - bump(-h, 0.0)) / (2.0 * h);
            let dp0 = (bump(0.0, h) - bump(0.0, -h)) / (2.0 * h);
            let stderr =
                ((dpb * est.se_p_bell).powi(2) + (dp0 * est.se_p0).powi(2)).sqrt();
            Ok(BellResult {
                bell,
                stderr,
                angles: AngleSettings::canonical(),
            })
        }
        SourceModel::Pdc { xi } => {
            let pairs = sample_pairs(scenario, count, seed)?;
            let ens = PdcEnsemble::new(*xi, detector, &pairs)?;
            let objective = |x: &[f64; 3]| -> f64 {
                let angles = AngleSettings {
                    theta_a: [0.0, x[1]],
                    theta_b: [x[0], x[2]],
                };
                match pdc_bell_at(&ens, &angles, include_double_clicks) {
                    Ok(b) => -b,
                    Err(_) => f64::INFINITY,
                }
            };
            use std::f64::consts::PI;
            let canonical_x = [PI / 8.0, PI / 4.0, 3.0 * PI / 8.0];
            let mut best_x = canonical_x;
            let mut best_f = objective(&canonical_x);
            let restarts: [[f64; 3]; 4] = [
                canonical_x,
                [PI / 8.0 + 0.05, PI / 4.0 - 0.05, 3.0 * PI / 8.0 + 0.05],
                [PI / 8.0 - 0.07, PI / 4.0 + 0.04, 3.0 * PI / 8.0 - 0.03],
                [PI / 8.0 + 0.02, PI / 4.0 + 0.06, 3.0 * PI / 8.0 + 0.08],
            ];
            for start in restarts {
                let (x, f) = nelder_mead(objective, start, 0.05, 1e-6, 500);
                let better = f < best_f - 1e-12
                    || ((f - best_f).abs() <= 1e-12 && x.as_slice() < best_x.as_slice());
                if better {
                    best_x = x;
                    best_f = f;
                }
            }
            let angles = AngleSettings {
                theta_a: [0.0, best_x[1]],
                theta_b: [best_x[0], best_x[2]],
            };
            let stderr = pdc_bell_stderr(&ens, &angles, include_double_clicks, 16)?;
            Ok(BellResult {
                bell: -best_f,
                stderr,
                angles,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::TransmittanceModel;
    use approx::assert_relative_eq;
    use std::f64::consts::SQRT_2;

    const IDEAL: DetectorParams = DetectorParams {
        eta_c: 1.0,
        nu: 0.0,
    };

    #[test]
    fn correlation_basics() {
        assert_relative_eq!(correlation(0.3, 0.1).unwrap(), 0.5, max_relative = 1e-15);
        assert_eq!(correlation(0.0, 0.2).unwrap(), -1.0);
        assert!(matches!(
            correlation(0.0, 0.0),
            Err(Error::UndefinedCorrelation)
        ));
    }

    #[test]
    fn bell_parameter_tsirelson_at_perfect_correlations() {
        let e = |d: f64| -(2.0 * d).cos();
        use std::f64::consts::PI;
        let b = bell_parameter(
            e(-PI / 8.0),
            e(-3.0 * PI / 8.0),
            e(PI / 4.0 - PI / 8.0),
            e(PI / 4.0 - 3.0 * PI / 8.0),
        );
        assert_relative_eq!(b, 2.0 * SQRT_2, max_relative = 1e-14);
    }

    #[test]
    fn nelder_mead_quadratic_bowl() {
        let (x, f) = nelder_mead(
            |x: &[f64; 3]| {
                (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + (x[2] - 2.0).powi(2)
            },
            [0.0, 0.0, 0.0],
            0.5,
            1e-12,
            2000,
        );
        assert!(f < 1e-8);
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] + 0.5).abs() < 1e-4);
    }

    #[test]
    fn bell_state_ideal_reaches_tsirelson() {
        let scenario = ChannelScenario::Copropagating(TransmittanceModel::Deterministic(1.0));
        let res = maximize_bell(&SourceModel::BellState, &scenario, &IDEAL, true, 10, 1).unwrap();
        assert_relative_eq!(res.bell, 2.0 * SQRT_2, max_relative = 1e-12);
        assert_eq!(res.angles, AngleSettings::canonical());
    }

    #[test]
    fn weak_pdc_approaches_bell_state() {
        let scenario = ChannelScenario::Copropagating(TransmittanceModel::Deterministic(1.0));
        let res = maximize_bell(
            &SourceModel::Pdc { xi: 0.01 },
            &scenario,
            &IDEAL,
            true,
            10,
            1,
        )
        .unwrap();
        assert!((res.bell - 2.0 * SQRT_2).abs() < 1e-3, "B = {}", res.bell);
        assert!(res.bell <= 2.0 * SQRT_2 + 1e-12);
    }

    #[test]
    fn optimized_angles_never_below_canonical() {
        let det = DetectorParams {
            eta_c: 0.6,
            nu: 1e-3,
        };
        let scenario = ChannelScenario::Copropagating(TransmittanceModel::Deterministic(0.5));
        let source = SourceModel::Pdc { xi: 0.2 };
        let pairs = sample_pairs(&scenario, 10, 3).unwrap();
        let ens = PdcEnsemble::new(0.2, &det, &pairs).unwrap();
        let canonical = pdc_bell_at(&ens, &AngleSettings::canonical(), true).unwrap();
        let res = maximize_bell(&source, &scenario, &det, true, 10, 3).unwrap();
        assert!(res.bell >= canonical - 1e-12);
    }

    #[test]
    fn deterministic_in_seed() {
        let det = DetectorParams {
            eta_c: 0.6,
            nu: 1e-3,
        };
        let model = TransmittanceModel::TruncatedLogNormal(
            crate::channels::TruncatedLogNormalChannel {
                mu: 7.49,
                sigma: 1.08,
                eta_m: 0.04,
            },
        );
        let scenario = ChannelScenario::Copropagating(model);
        let source = SourceModel::Pdc { xi: 0.1 };
        let a = maximize_bell(&source, &scenario, &det, true, 2000, 42).unwrap();
        let b = maximize_bell(&source, &scenario, &det, true, 2000, 42).unwrap();
        assert_eq!(a.bell, b.bell);
        assert_eq!(a.angles, b.angles);
        assert!(a.stderr > 0.0);
    }
}
