//! Closed-form click statistics for PDC and Bell-state sources.
//!
//! For the PDC source the same/different coincidence probabilities are
//! rational functions of five coefficients per transmittance pair; channel
//! fading enters as a sample average over pairs. For the weak-intensity
//! Bell-state source the Bell parameter has a closed form in the three
//! channel probabilities `p_0`, `p_1`, `p_B`.

use crate::channels::{sample_pairs, ChannelScenario, TransmittanceModel};
use crate::{Error, Result};

/// On/off detector parameters: detection efficiency `eta_c` in (0,1] and the
/// mean number `nu >= 0` of stray-light and dark counts per detector per
/// pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub eta_c: f64,
    pub nu: f64,
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "eta_c",
                message: format!("eta_c {} must lie in (0,1]", self.eta_c),
            });
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "nu",
                message: format!("nu {} must be finite and non-negative", self.nu),
            });
        }
        Ok(())
    }
}

/// Light source: PDC with squeezing `xi`, or its single-pair conditional
/// limit, the ideal Bell state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceModel {
    Pdc { xi: f64 },
    BellState,
}

/// The five coefficients of the PDC click-probability expression for one
/// transmittance pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdcCoefficients {
    pub c0: f64,
    pub c1a: f64,
    pub c1b: f64,
    pub c_same: f64,
    pub c_different: f64,
}

/// Evaluates the PDC coefficients with `t = tanh^2(xi)` and
/// `delta_theta = theta_A - theta_B`.
///
/// The inner bracket of `c0` is evaluated in the factored form
/// `(1-t) (t (1-eta_c eta_A)(1-eta_c eta_B) - 1)`, which is algebraically
/// identical to the printed product expansion but free of the small-`t`
/// cancellation.
pub fn pdc_coefficients(
    xi: f64,
    detector: &DetectorParams,
    eta_a: f64,
    eta_b: f64,
    delta_theta: f64,
) -> PdcCoefficients {
    let t = xi.tanh().powi(2);
    let u_a = detector.eta_c * eta_a;
    let u_b = detector.eta_c * eta_b;
    let g = (1.0 - u_a) * (1.0 - u_b);
    let bracket = (1.0 - t) * (t * g - 1.0);
    let k = u_a * u_b * t * (1.0 - t) * (1.0 - t);
    let sin2 = delta_theta.sin().powi(2);
    PdcCoefficients {
        c0: bracket * bracket,
        c1a: detector.eta_c * eta_b * (1.0 - u_a) * (1.0 - t) * t * bracket,
        c1b: detector.eta_c * eta_a * (1.0 - u_b) * (1.0 - t) * t * bracket,
        c_same: k * (g * t - sin2),
        c_different: k * (g * t - (1.0 - sin2)),
    }
}

/// Same/different coincidence probabilities averaged over transmittance
/// pairs, with Monte Carlo standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickProbs {
    pub p_same: f64,
    pub p_different: f64,
    pub se_same: f64,
    pub se_different: f64,
}

/// Precomputed per-pair quantities of the PDC click-probability formula,
/// allowing many angle evaluations over one fixed transmittance sample
/// (common random numbers).
pub struct PdcEnsemble {
    t: f64,
    nu: f64,
    /// c0 + c1a + c1b per pair.
    s0: Vec<f64>,
    /// Prefactor of the angle-dependent coefficient per pair.
    k: Vec<f64>,
    /// Angle-independent part `g t` of the same/different coefficients.
    gt: Vec<f64>,
    /// `c0/(c0+c1a)^2 + c0/(c0+c1b)^2` per pair (double-click path).
    sq_terms: Vec<f64>,
    /// `1/(c0+c1a) + 1/(c0+c1b)` per pair (no-double-click path).
    lin_terms: Vec<f64>,
    /// `1/c0` per pair.
    inv_c0: Vec<f64>,
}

impl PdcEnsemble {
    pub fn new(xi: f64, detector: &DetectorParams, pairs: &[(f64, f64)]) -> Result<Self> {
        detector.validate()?;
        if pairs.is_empty() {
            return Err(Error::InvalidParameter {
                name: "pairs",
                message: "need at least one transmittance pair".into(),
            });
        }
        let n = pairs.len();
        let mut ens = Self {
            t: xi.tanh().powi(2),
            nu: detector.nu,
            s0: Vec::with_capacity(n),
            k: Vec::with_capacity(n),
            gt: Vec::with_capacity(n),
            sq_terms: Vec::with_capacity(n),
            lin_terms: Vec::with_capacity(n),
            inv_c0: Vec::with_capacity(n),
        };
        for &(eta_a, eta_b) in pairs {
            let c = pdc_coefficients(xi, detector, eta_a, eta_b, 0.0);
            // c_different at delta=0 equals k (gt - 1); recover k and gt.
            let k = c.c_same - c.c_different;
            let gt = if k != 0.0 { c.c_same / k } else { 0.0 };
            let s0 = c.c0 + c.c1a + c.c1b;
            let da = c.c0 + c.c1a;
            let db = c.c0 + c.c1b;
            let vals = [
                s0,
                c.c0 / (da * da) + c.c0 / (db * db),
                1.0 / da + 1.0 / db,
                1.0 / c.c0,
            ];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "pdc click-probability integrand",
                });
            }
            ens.s0.push(s0);
            ens.k.push(k);
            ens.gt.push(gt);
            ens.sq_terms.push(vals[1]);
            ens.lin_terms.push(vals[2]);
            ens.inv_c0.push(vals[3]);
        }
        Ok(ens)
    }

    pub fn len(&self) -> usize {
        self.s0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s0.is_empty()
    }

    fn probs_over(
        &self,
        delta_theta: f64,
        include_double_clicks: bool,
        range: std::ops::Range<usize>,
    ) -> (f64, f64) {
        let sin2 = delta_theta.sin().powi(2);
        let cos2 = 1.0 - sin2;
        let n = (range.end - range.start) as f64;
        let one_minus_t4 = (1.0 - self.t).powi(4);
        let (mut inv_same, mut inv_diff) = (0.0, 0.0);
        for i in range.clone() {
            inv_same += 1.0 / (self.s0[i] + self.k[i] * (self.gt[i] - sin2));
            inv_diff += 1.0 / (self.s0[i] + self.k[i] * (self.gt[i] - cos2));
        }
        inv_same /= n;
        inv_diff /= n;
        if include_double_clicks {
            let sq: f64 = range.clone().map(|i| self.sq_terms[i]).sum::<f64>() / n;
            let d: f64 = range.map(|i| self.inv_c0[i]).sum::<f64>() / n;
            let pref = (-4.0 * self.nu).exp() / 2.0 * one_minus_t4;
            let e2 = (2.0 * self.nu).exp();
            let p = |own: f64, other: f64| 0.5 + pref * (e2 * (2.0 * own - sq - 2.0 * other) + d);
            (p(inv_same, inv_diff), p(inv_diff, inv_same))
        } else {
            let lin: f64 = range.clone().map(|i| self.lin_terms[i]).sum::<f64>() / n;
            let d: f64 = range.map(|i| self.inv_c0[i]).sum::<f64>() / n;
            let p = |own: f64| {
                2.0 * one_minus_t4
                    * ((-2.0 * self.nu).exp() * own - (-3.0 * self.nu).exp() * lin
                        + (-4.0 * self.nu).exp() * d)
            };
            (p(inv_same), p(inv_diff))
        }
    }

    /// `(p_same, p_different)` averaged over the whole ensemble.
    pub fn probs(&self, delta_theta: f64, include_double_clicks: bool) -> (f64, f64) {
        self.probs_over(delta_theta, include_double_clicks, 0..self.len())
    }

    /// Per-batch `(p_same, p_different)` for standard-error estimation.
    pub fn probs_batched(
        &self,
        delta_theta: f64,
        include_double_clicks: bool,
        batches: usize,
    ) -> Vec<(f64, f64)> {
        let n = self.len();
        let batches = batches.min(n).max(1);
        (0..batches)
            .map(|b| {
                let lo = b * n / batches;
                let hi = (b + 1) * n / batches;
                self.probs_over(delta_theta, include_double_clicks, lo..hi)
            })
            .collect()
    }
}

/// Evaluates the PDC same/different probabilities over a pair sample.
///
/// `include_double_clicks` selects between the squash-model expression and
/// the variant that discards double-click events.
pub fn pdc_click_probs(
    xi: f64,
    detector: &DetectorParams,
    pairs: &[(f64, f64)],
    delta_theta: f64,
    include_double_clicks: bool,
) -> Result<ClickProbs> {
    let ens = PdcEnsemble::new(xi, detector, pairs)?;
    let (p_same, p_different) = ens.probs(delta_theta, include_double_clicks);
    let batches = ens.probs_batched(delta_theta, include_double_clicks, 16);
    let k = batches.len() as f64;
    let se = |idx: usize, mean: f64| {
        if batches.len() < 2 {
            return 0.0;
        }
        let var = batches
            .iter()
            .map(|b| {
                let v = if idx == 0 { b.0 } else { b.1 };
                (v - mean) * (v - mean)
            })
            .sum::<f64>()
            / (k - 1.0);
        (var / k).sqrt()
    };
    Ok(ClickProbs {
        p_same,
        p_different,
        se_same: se(0, p_same),
        se_different: se(1, p_different),
    })
}

/// Probabilities of the three channel outcomes for a single entangled pair:
/// both photons lost (`p0`), exactly one delivered (`p1`), Bell state
/// preserved (`p_bell`). They partition unity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellChannelProbs {
    pub p0: f64,
    pub p1: f64,
    pub p_bell: f64,
}

impl BellChannelProbs {
    /// From a fixed transmittance pair.
    pub fn from_pair(eta_a: f64, eta_b: f64) -> Self {
        Self::from_pairs(&[(eta_a, eta_b)])
    }

    /// Sample average over transmittance pairs; `p1` is taken as the
    /// partition remainder so that `p0 + p1 + p_bell = 1` holds exactly.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let n = pairs.len() as f64;
        let p_bell = pairs.iter().map(|&(a, b)| a * b).sum::<f64>() / n;
        let p0 = pairs.iter().map(|&(a, b)| (1.0 - a) * (1.0 - b)).sum::<f64>() / n;
        Self {
            p0,
            p1: 1.0 - p0 - p_bell,
            p_bell,
        }
    }
}

/// Channel probabilities with the direct single-photon estimate retained as
/// a cross-check of the partition remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellChannelProbsEstimate {
    pub probs: BellChannelProbs,
    pub p1_direct: f64,
    pub se_p_bell: f64,
    pub se_p0: f64,
}

/// Estimates `p0`, `p1`, `p_bell` for a channel scenario by paired sampling.
/// Scenarios built purely from deterministic models return exact values.
pub fn bell_channel_probs(
    scenario: &ChannelScenario,
    count: usize,
    seed: u64,
) -> Result<BellChannelProbsEstimate> {
    scenario.validate()?;
    let deterministic_pair = match scenario {
        ChannelScenario::Copropagating(TransmittanceModel::Deterministic(e)) => Some((*e, *e)),
        ChannelScenario::Counterpropagating(
            TransmittanceModel::Deterministic(a),
            TransmittanceModel::Deterministic(b),
        ) => Some((*a, *b)),
        _ => None,
    };
    if let Some((a, b)) = deterministic_pair {
        let probs = BellChannelProbs::from_pair(a, b);
        return Ok(BellChannelProbsEstimate {
            probs,
            p1_direct: a * (1.0 - b) + b * (1.0 - a),
            se_p_bell: 0.0,
            se_p0: 0.0,
        });
    }
    let pairs = sample_pairs(scenario, count, seed)?;
    let n = pairs.len() as f64;
    let probs = BellChannelProbs::from_pairs(&pairs);
    let p1_direct = pairs
        .iter()
        .map(|&(a, b)| a * (1.0 - b) + b * (1.0 - a))
        .sum::<f64>()
        / n;
    let var_pb = pairs
        .iter()
        .map(|&(a, b)| (a * b - probs.p_bell).powi(2))
        .sum::<f64>()
        / n;
    let var_p0 = pairs
        .iter()
        .map(|&(a, b)| ((1.0 - a) * (1.0 - b) - probs.p0).powi(2))
        .sum::<f64>()
        / n;
    Ok(BellChannelProbsEstimate {
        probs,
        p1_direct,
        se_p_bell: (var_pb / n).sqrt(),
        se_p0: (var_p0 / n).sqrt(),
    })
}

fn bell_state_denominator(probs: &BellChannelProbs, detector: &DetectorParams) -> f64 {
    let e2 = (2.0 * detector.nu).exp();
    probs.p_bell * (e2 + detector.eta_c - 1.0).powi(2)
        + probs.p0 * (e2 - 1.0).powi(2)
        + probs.p1 * (e2 - 1.0) * (e2 + detector.eta_c - 1.0)
}

/// Correlation coefficient of the Bell-state source after the fading
/// channel, at analyzer angles `theta_a`, `theta_b`.
pub fn bell_state_correlation(
    probs: &BellChannelProbs,
    detector: &DetectorParams,
    theta_a: f64,
    theta_b: f64,
) -> f64 {
    let e2 = (2.0 * detector.nu).exp();
    let numerator =
        -probs.p_bell * detector.eta_c * detector.eta_c * e2 * (2.0 * (theta_a - theta_b)).cos();
    numerator / bell_state_denominator(probs, detector)
}

/// Maximal Bell parameter of the Bell-state source, reached at the canonical
/// angle set `(0, pi/8, pi/4, 3 pi/8)`.
pub fn bell_state_bell_parameter(
    probs: &BellChannelProbs,
    detector: &DetectorParams,
    include_double_clicks: bool,
) -> f64 {
    let two_sqrt2 = 2.0 * std::f64::consts::SQRT_2;
    let eta_c = detector.eta_c;
    let numerator = two_sqrt2 * probs.p_bell * eta_c * eta_c * (2.0 * detector.nu).exp();
    let denominator = if include_double_clicks {
        bell_state_denominator(probs, detector)
    } else {
        let e1 = detector.nu.exp();
        probs.p_bell * ((1.0 - eta_c) * (e1 - 2.0) + e1).powi(2)
            + 2.0 * probs.p1 * (e1 - 1.0) * (eta_c * e1 + 2.0 * (e1 - 1.0) * (1.0 - eta_c))
            + 4.0 * probs.p0 * (e1 - 1.0) * (e1 - 1.0)
    };
    if probs.p_bell == 0.0 {
        return 0.0;
    }
    numerator / denominator
}
