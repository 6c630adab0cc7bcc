//! Transmittance statistics of atmospheric links: PDT models, sampling,
//! moments, the postselection transform, and channel-pair scenarios.
//!
//! A fading channel is described by the probability distribution of the
//! transmittance (PDT). Two concrete families are provided: the elliptic-beam
//! model for weak-to-moderate turbulence and the truncated log-normal model
//! for strong turbulence, plus deterministic, empirical, and postselected
//! wrappers.

use crate::numerics::{
    bessel_i0_scaled, bessel_i1_scaled, lambert_w0_of_exp, GaussianSampler, GaussianSpec,
};
use crate::{derive_seed, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Elliptic-beam channel parameters.
///
/// `rytov_sq` is the Rytov parameter (sigma_R^2), `fresnel` the Fresnel
/// parameter (Omega), `beam_waist` the beam-spot radius at the source W0 [m],
/// `aperture` the receiver aperture radius a [m], `length` the channel length
/// L [m], and `eta_m` the deterministic efficiency folded on top of the
/// fluctuating transmittance.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticBeamChannel {
    pub rytov_sq: f64,
    pub fresnel: f64,
    pub beam_waist: f64,
    pub aperture: f64,
    pub length: f64,
    pub eta_m: f64,
}

impl EllipticBeamChannel {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool); 6] = [
            ("rytov_sq", self.rytov_sq, self.rytov_sq >= 0.0),
            ("fresnel", self.fresnel, self.fresnel > 0.0),
            ("beam_waist", self.beam_waist, self.beam_waist > 0.0),
            ("aperture", self.aperture, self.aperture > 0.0),
            ("length", self.length, self.length > 0.0),
            (
                "eta_m",
                self.eta_m,
                self.eta_m > 0.0 && self.eta_m <= 1.0,
            ),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    message: format!("value {value} out of range"),
                });
            }
        }
        Ok(())
    }
}

/// Truncated log-normal channel: density proportional to
/// `exp[-(ln eta + mu)^2 / (2 sigma^2)] / eta` on `[0, eta_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedLogNormalChannel {
    pub mu: f64,
    pub sigma: f64,
    pub eta_m: f64,
}

impl TruncatedLogNormalChannel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() || !self.mu.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma",
                message: format!("sigma {} must be positive", self.sigma),
            });
        }
        if !(self.eta_m > 0.0 && self.eta_m <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "eta_m",
                message: format!("eta_m {} must lie in (0,1]", self.eta_m),
            });
        }
        if self.truncation_mass() <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "eta_m",
                message: "normalization constant F(eta_m) vanished".into(),
            });
        }
        Ok(())
    }

    /// Fits `mu` and `sigma` from pre-truncation moments and truncates at
    /// `eta_m`, following the order the strong-channel fit is defined in.
    pub fn from_pretruncation_moments(mean: f64, variance: f64, eta_m: f64) -> Result<Self> {
        let (mu, sigma) = lognormal_from_moments(mean, variance)?;
        let ch = Self { mu, sigma, eta_m };
        ch.validate()?;
        Ok(ch)
    }

    /// CDF of the *untruncated* log-normal at `eta`, i.e. `F(eta)`.
    pub fn untruncated_cdf(&self, eta: f64) -> f64 {
        if eta <= 0.0 {
            return 0.0;
        }
        let z = (eta.ln() + self.mu) / self.sigma;
        Normal::standard().cdf(z)
    }

    /// Normalization mass `F(eta_m)`.
    pub fn truncation_mass(&self) -> f64 {
        self.untruncated_cdf(self.eta_m)
    }

    /// Normalized density on `(0, eta_m]`, zero elsewhere.
    pub fn density(&self, eta: f64) -> f64 {
        if eta <= 0.0 || eta > self.eta_m {
            return 0.0;
        }
        let z = (eta.ln() + self.mu) / self.sigma;
        (-0.5 * z * z).exp()
            / (eta * self.truncation_mass() * self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// Single-channel PDT variants.
#[derive(Debug, Clone, PartialEq)]
pub enum TransmittanceModel {
    /// Fixed transmittance `eta0` in [0,1].
    Deterministic(f64),
    TruncatedLogNormal(TruncatedLogNormalChannel),
    EllipticBeam(EllipticBeamChannel),
    /// Inner model conditioned on `eta >= eta_ps`.
    Postselected {
        inner: Box<TransmittanceModel>,
        eta_ps: f64,
    },
    /// Resampling from a fixed, sorted list of observed transmittances.
    Empirical(Vec<f64>),
}

impl TransmittanceModel {
    /// Builds an empirical model; samples are sorted and range-checked.
    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter {
                name: "samples",
                message: "empirical model needs at least one sample".into(),
            });
        }
        if samples.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
            return Err(Error::InvalidParameter {
                name: "samples",
                message: "empirical samples must lie in [0,1]".into(),
            });
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self::Empirical(samples))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Deterministic(eta0) => {
                if !(0.0..=1.0).contains(eta0) {
                    return Err(Error::InvalidParameter {
                        name: "eta0",
                        message: format!("eta0 {eta0} must lie in [0,1]"),
                    });
                }
            }
            Self::TruncatedLogNormal(ch) => ch.validate()?,
            Self::EllipticBeam(ch) => ch.validate()?,
            Self::Postselected { inner, eta_ps } => {
                if !(0.0..1.0).contains(eta_ps) {
                    return Err(Error::InvalidParameter {
                        name: "eta_ps",
                        message: format!("eta_ps {eta_ps} must lie in [0,1)"),
                    });
                }
                inner.validate()?;
            }
            Self::Empirical(samples) => {
                if samples.is_empty() {
                    return Err(Error::InvalidParameter {
                        name: "samples",
                        message: "empirical model needs at least one sample".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Channel-pair scenario: both modes through one channel realization
/// (copropagation, eta_A = eta_B per draw) or through two independent
/// channels (counterpropagation).
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelScenario {
    Copropagating(TransmittanceModel),
    Counterpropagating(TransmittanceModel, TransmittanceModel),
}

impl ChannelScenario {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Copropagating(m) => m.validate(),
            Self::Counterpropagating(a, b) => {
                a.validate()?;
                b.validate()
            }
        }
    }
}

/// Rytov parameter `1.23 Cn^2 k^{7/6} L^{11/6}` quantifying integrated
/// turbulence strength.
pub fn rytov_parameter(cn2: f64, wavenumber: f64, length: f64) -> f64 {
    1.23 * cn2 * wavenumber.powf(7.0 / 6.0) * length.powf(11.0 / 6.0)
}

/// Fresnel parameter `k W0^2 / (2 L)` of the transmitted beam.
pub fn fresnel_parameter(beam_waist: f64, wavenumber: f64, length: f64) -> f64 {
    wavenumber * beam_waist * beam_waist / (2.0 * length)
}

/// Mean and covariance of `(x0, y0, Theta_1, Theta_2)` for Kolmogorov
/// turbulence in the weak-to-moderate regime.
///
/// The position block and the Theta block are uncorrelated; the two Theta
/// components share a negative covariance reflecting area conservation of
/// the beam ellipse.
pub fn elliptic_moments(rytov_sq: f64, fresnel: f64, beam_waist: f64) -> Result<GaussianSpec> {
    let s = rytov_sq * fresnel.powf(5.0 / 6.0);
    let q = 1.0 + 2.96 * s;
    let theta_mean = (q * q / (fresnel * fresnel * (q * q + 1.2 * s).sqrt())).ln();
    let var_pos = 0.33 * beam_waist * beam_waist * rytov_sq * fresnel.powf(-7.0 / 6.0);
    let var_theta = (1.0 + 1.2 * s / (q * q)).ln();
    let cov_theta = (1.0 - 0.8 * s / (q * q)).ln();
    let mut cov = [[0.0; 4]; 4];
    cov[0][0] = var_pos;
    cov[1][1] = var_pos;
    cov[2][2] = var_theta;
    cov[3][3] = var_theta;
    cov[2][3] = cov_theta;
    cov[3][2] = cov_theta;
    GaussianSpec::new([0.0, 0.0, theta_mean, theta_mean], cov)
}

/// Scale function R(xi) and shape function lambda(xi) of the elliptic-beam
/// transmittance, returned as `(lambda, R)`.
///
/// Both are 0/0 at xi -> 0; below `a^2 xi^2 = 1e-6` the series limits
/// lambda -> 2, ln-ratio -> a^2 xi^2 / 2 are used.
fn scale_shape(aperture: f64, xi: f64) -> (f64, f64) {
    let z = aperture * aperture * xi * xi;
    if z < 1e-6 {
        let lam = 2.0;
        let ln_ratio = 0.5 * z * (1.0 - 0.25 * z);
        return (lam, ln_ratio.powf(-1.0 / lam));
    }
    let i0e = bessel_i0_scaled(z);
    let i1e = bessel_i1_scaled(z);
    let den = 1.0 - i0e;
    let num = -2.0 * (-z / 2.0).exp_m1();
    let ln_ratio = (num / den).ln();
    let lam = 2.0 * z * i1e / den / ln_ratio;
    (lam, ln_ratio.powf(-1.0 / lam))
}

/// Transmittance of an elliptic beam with state `v = (x0, y0, Theta_1,
/// Theta_2)` and orientation `chi`, including the deterministic factor
/// `eta_m`. Always in [0, 1].
pub fn elliptic_transmittance(v: [f64; 4], chi: f64, channel: &EllipticBeamChannel) -> Result<f64> {
    channel.validate()?;
    let [x0, y0, th1, th2] = v;
    let a = channel.aperture;
    let a2 = a * a;
    let w0sq = channel.beam_waist * channel.beam_waist;
    let w1sq = w0sq * th1.exp();
    let w2sq = w0sq * th2.exp();
    let (w1, w2) = (w1sq.sqrt(), w2sq.sqrt());

    // Effective spot radius through the Lambert W function; the argument is
    // assembled in log space so large Theta excursions cannot overflow.
    let (c2, s2) = {
        let c = chi.cos();
        let s = chi.sin();
        (c * c, s * s)
    };
    let ln_arg =
        (4.0 * a2 / (w1 * w2)).ln() + (a2 / w1sq) * (1.0 + 2.0 * c2) + (a2 / w2sq) * (1.0 + 2.0 * s2);
    if !ln_arg.is_finite() {
        return Err(Error::NonFinite {
            context: "elliptic_transmittance: Lambert argument",
        });
    }
    let w = lambert_w0_of_exp(ln_arg)?;
    let weff = (4.0 * a2 / w).sqrt();

    // Maximum transmittance of the centered ellipse. The printed formula has
    // 0/0 structure via |W1^2 - W2^2|; the circular limit drops its second
    // term and reduces the Bessel factor to I0(0) = 1.
    let eta0 = if (th1 - th2).abs() < 1e-9 {
        1.0 - (-2.0 * a2 / w1sq).exp()
    } else {
        let d = a2 * (1.0 / w1sq - 1.0 / w2sq);
        // I0(d) exp(-a^2 (1/W1^2 + 1/W2^2)) with the scaled Bessel form:
        // the residual exponent |d| - a^2(1/W1^2 + 1/W2^2) is always <= 0.
        let bessel_term =
            bessel_i0_scaled(d) * (d.abs() - a2 * (1.0 / w1sq + 1.0 / w2sq)).exp();
        let xi = 1.0 / w1 - 1.0 / w2;
        let (lam, r) = scale_shape(a, xi);
        let wobble = 1.0 - (-0.5 * a2 * xi * xi).exp();
        let base = (w1 + w2).powi(2) / (w1sq - w2sq).abs() / r;
        1.0 - bessel_term - 2.0 * wobble * (-base.powf(lam)).exp()
    };

    let (lam_r, r_r) = scale_shape(a, 2.0 / weff);
    let r0 = x0.hypot(y0);
    let eta = eta0 * (-((r0 / a) / r_r).powf(lam_r)).exp();
    if !eta.is_finite() {
        return Err(Error::NonFinite {
            context: "elliptic_transmittance",
        });
    }
    Ok((channel.eta_m * eta).clamp(0.0, 1.0))
}

/// Log-normal parameters `(mu, sigma)` matching a target mean and variance.
pub fn lognormal_from_moments(mean: f64, variance: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && mean < 1.0) || !(variance > 0.0) {
        return Err(Error::InvalidParameter {
            name: "moments",
            message: format!("mean {mean} must be in (0,1) and variance {variance} positive"),
        });
    }
    let r = 1.0 + variance / (mean * mean);
    let sigma = r.ln().sqrt();
    let mu = -(mean / r.sqrt()).ln();
    Ok((mu, sigma))
}

const POSTSELECTION_BATCH: usize = 65_536;
const FEASIBILITY_LIMIT: f64 = 1e-6;

fn sample_truncated_lognormal(
    ch: &TruncatedLogNormalChannel,
    count: usize,
    seed: u64,
) -> Vec<f64> {
    // Inverse CDF on the underlying normal restricted to (-inf, ln eta_m]:
    // exact, no rejection stalls at small eta_m.
    let normal = Normal::standard();
    let f_m = ch.truncation_mass();
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 0));
    (0..count)
        .map(|_| {
            let u: f64 = rng.gen::<f64>().clamp(1e-16, 1.0 - 1e-16);
            let z = normal.inverse_cdf(u * f_m);
            (-ch.mu + ch.sigma * z).exp().clamp(0.0, ch.eta_m)
        })
        .collect()
}

fn sample_elliptic(ch: &EllipticBeamChannel, count: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = elliptic_moments(ch.rytov_sq, ch.fresnel, ch.beam_waist)?;
    let mut gaussian = GaussianSampler::new(&spec, derive_seed(seed, 0))?;
    let mut chi_rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 1));
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let v = gaussian.next_sample();
        let chi: f64 = chi_rng.gen::<f64>() * std::f64::consts::FRAC_PI_2;
        out.push(elliptic_transmittance(v, chi, ch)?);
    }
    Ok(out)
}

/// Draws `count` transmittances from the model, deterministic in `seed`.
pub fn sample_pdt(model: &TransmittanceModel, count: usize, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    match model {
        TransmittanceModel::Deterministic(eta0) => Ok(vec![*eta0; count]),
        TransmittanceModel::TruncatedLogNormal(ch) => {
            Ok(sample_truncated_lognormal(ch, count, seed))
        }
        TransmittanceModel::EllipticBeam(ch) => sample_elliptic(ch, count, seed),
        TransmittanceModel::Postselected { inner, eta_ps } => {
            if *eta_ps <= 0.0 {
                return sample_pdt(inner, count, seed);
            }
            if let TransmittanceModel::TruncatedLogNormal(ch) = &**inner {
                // Exact inverse-CDF sampling on [eta_ps, eta_m]; rejection
                // would stall when the acceptance probability is tiny.
                let normal = Normal::standard();
                let f_lo = ch.untruncated_cdf(*eta_ps);
                let f_hi = ch.truncation_mass();
                if !(f_hi > f_lo) {
                    return Err(Error::FeasibilityUnderflow {
                        limit: FEASIBILITY_LIMIT,
                        accepted: 0,
                        attempts: 0,
                    });
                }
                let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 0));
                return Ok((0..count)
                    .map(|_| {
                        let u: f64 = rng.gen::<f64>().clamp(1e-16, 1.0 - 1e-16);
                        let z = normal.inverse_cdf(f_lo + u * (f_hi - f_lo));
                        (-ch.mu + ch.sigma * z).exp().clamp(*eta_ps, ch.eta_m)
                    })
                    .collect());
            }
            let mut out = Vec::with_capacity(count);
            let mut attempts = 0u64;
            let mut accepted = 0u64;
            let mut batch = 0u64;
            while out.len() < count {
                let draws = sample_pdt(inner, POSTSELECTION_BATCH, derive_seed(seed, 1 + batch))?;
                batch += 1;
                for eta in draws {
                    attempts += 1;
                    if eta >= *eta_ps {
                        accepted += 1;
                        if out.len() < count {
                            out.push(eta);
                        }
                    }
                }
                if attempts >= 2_000_000 && (accepted as f64) < FEASIBILITY_LIMIT * attempts as f64
                {
                    return Err(Error::FeasibilityUnderflow {
                        limit: FEASIBILITY_LIMIT,
                        accepted,
                        attempts,
                    });
                }
            }
            out.truncate(count);
            Ok(out)
        }
        TransmittanceModel::Empirical(samples) => {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 0));
            Ok((0..count)
                .map(|_| samples[rng.gen_range(0..samples.len())])
                .collect())
        }
    }
}

/// Monte Carlo transmittance moments with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdtMoments {
    pub mean: f64,
    pub second: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_second: f64,
}

/// Estimates the first two moments of the PDT. Deterministic models return
/// exact moments with zero error.
pub fn pdt_moments(model: &TransmittanceModel, count: usize, seed: u64) -> Result<PdtMoments> {
    if let TransmittanceModel::Deterministic(eta0) = model {
        model.validate()?;
        return Ok(PdtMoments {
            mean: *eta0,
            second: eta0 * eta0,
            variance: 0.0,
            se_mean: 0.0,
            se_second: 0.0,
        });
    }
    let samples = sample_pdt(model, count, seed)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let second = samples.iter().map(|s| s * s).sum::<f64>() / n;
    let var_of_eta = (second - mean * mean).max(0.0);
    let var_of_sq = (samples.iter().map(|s| s.powi(4)).sum::<f64>() / n - second * second).max(0.0);
    Ok(PdtMoments {
        mean,
        second,
        variance: var_of_eta,
        se_mean: (var_of_eta / n).sqrt(),
        se_second: (var_of_sq / n).sqrt(),
    })
}

/// Exceedance estimate; `stderr` is zero where a closed form applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceedanceEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Probability `P(eta >= eta_ps)`: closed-form for deterministic and
/// truncated log-normal models, exact for empirical lists, Monte Carlo
/// (with `count` samples) for the elliptic beam.
pub fn exceedance(
    model: &TransmittanceModel,
    eta_ps: f64,
    count: usize,
    seed: u64,
) -> Result<ExceedanceEstimate> {
    model.validate()?;
    if eta_ps <= 0.0 {
        return Ok(ExceedanceEstimate {
            value: 1.0,
            stderr: 0.0,
        });
    }
    match model {
        TransmittanceModel::Deterministic(eta0) => Ok(ExceedanceEstimate {
            value: if *eta0 >= eta_ps { 1.0 } else { 0.0 },
            stderr: 0.0,
        }),
        TransmittanceModel::TruncatedLogNormal(ch) => {
            let f_m = ch.truncation_mass();
            let value = ((f_m - ch.untruncated_cdf(eta_ps)) / f_m).clamp(0.0, 1.0);
            Ok(ExceedanceEstimate { value, stderr: 0.0 })
        }
        TransmittanceModel::EllipticBeam(_) => {
            let samples = sample_pdt(model, count, seed)?;
            let n = samples.len() as f64;
            let p = samples.iter().filter(|&&s| s >= eta_ps).count() as f64 / n;
            Ok(ExceedanceEstimate {
                value: p,
                stderr: (p * (1.0 - p) / n).sqrt(),
            })
        }
        TransmittanceModel::Postselected { inner, eta_ps: ps } => {
            let above = exceedance(inner, eta_ps.max(*ps), count, derive_seed(seed, 0))?;
            let feasible = exceedance(inner, *ps, count, derive_seed(seed, 1))?;
            if feasible.value <= 0.0 {
                return Err(Error::FeasibilityUnderflow {
                    limit: FEASIBILITY_LIMIT,
                    accepted: 0,
                    attempts: count as u64,
                });
            }
            let value = (above.value / feasible.value).clamp(0.0, 1.0);
            let rel = (above.stderr / above.value.max(1e-300)).hypot(
                feasible.stderr / feasible.value,
            );
            Ok(ExceedanceEstimate {
                value,
                stderr: value * rel,
            })
        }
        TransmittanceModel::Empirical(samples) => {
            let p = samples.iter().filter(|&&s| s >= eta_ps).count() as f64
                / samples.len() as f64;
            Ok(ExceedanceEstimate {
                value: p,
                stderr: 0.0,
            })
        }
    }
}

/// Probability that the transmittance exceeds `eta_ps` in both channels:
/// the product of per-channel exceedances for counterpropagation, the single
/// exceedance for copropagation (one shared draw).
pub fn joint_feasibility(
    scenario: &ChannelScenario,
    eta_ps: f64,
    count: usize,
    seed: u64,
) -> Result<ExceedanceEstimate> {
    match scenario {
        ChannelScenario::Copropagating(model) => exceedance(model, eta_ps, count, seed),
        ChannelScenario::Counterpropagating(a, b) => {
            let ea = exceedance(a, eta_ps, count, derive_seed(seed, 0))?;
            let eb = exceedance(b, eta_ps, count, derive_seed(seed, 1))?;
            let value = ea.value * eb.value;
            let stderr = (ea.stderr * eb.value).hypot(eb.stderr * ea.value);
            Ok(ExceedanceEstimate { value, stderr })
        }
    }
}

/// Draws `count` transmittance pairs `(eta_A, eta_B)`.
///
/// Copropagation emits the same draw on both components; counterpropagation
/// draws the two models from decorrelated sub-seeds.
pub fn sample_pairs(
    scenario: &ChannelScenario,
    count: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    scenario.validate()?;
    match scenario {
        ChannelScenario::Copropagating(model) => {
            let s = sample_pdt(model, count, derive_seed(seed, 0))?;
            Ok(s.into_iter().map(|eta| (eta, eta)).collect())
        }
        ChannelScenario::Counterpropagating(a, b) => {
            let sa = sample_pdt(a, count, derive_seed(seed, 1))?;
            let sb = sample_pdt(b, count, derive_seed(seed, 2))?;
            Ok(sa.into_iter().zip(sb).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub fn paper_strong_channel() -> TruncatedLogNormalChannel {
        TruncatedLogNormalChannel {
            mu: 7.49,
            sigma: 1.08,
            eta_m: 0.04,
        }
    }

    pub fn paper_weak_channel() -> EllipticBeamChannel {
        EllipticBeamChannel {
            rytov_sq: 1.5,
            fresnel: 0.98,
            beam_waist: 0.02,
            aperture: 0.04,
            length: 1600.0,
            eta_m: 0.75,
        }
    }

    /// Simpson quadrature of `f(u) * restricted-normal-density(u)` for
    /// `u = ln eta` on `(-inf, ln eta_m]`; independent of the sampling path.
    fn lognormal_quadrature<F: Fn(f64) -> f64>(ch: &TruncatedLogNormalChannel, f: F) -> f64 {
        let lo = -ch.mu - 12.0 * ch.sigma;
        let hi = ch.eta_m.ln();
        let n = 40_000;
        let h = (hi - lo) / n as f64;
        let g = |u: f64| {
            let z = (u + ch.mu) / ch.sigma;
            f(u.exp()) * (-0.5 * z * z).exp()
                / (ch.sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut sum = g(lo) + g(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * g(lo + i as f64 * h);
        }
        sum * h / 3.0 / ch.truncation_mass()
    }

    #[test]
    fn rytov_parameter_values() {
        assert_eq!(rytov_parameter(0.0, 5.0, 100.0), 0.0);
        assert_relative_eq!(rytov_parameter(1.0, 1.0, 1.0), 1.23);
        // High-precision evaluation of 1.23 cn2 k^{7/6} L^{11/6}.
        let k = 2.0 * std::f64::consts::PI / 8.1e-7;
        assert_relative_eq!(
            rytov_parameter(5e-16, k, 1600.0),
            0.050_242_635_029_379_901,
            max_relative = 1e-13
        );
    }

    #[test]
    fn fresnel_parameter_values() {
        let k = 7.84e6;
        assert_relative_eq!(fresnel_parameter(0.02, k, 1600.0), 0.98, max_relative = 1e-12);
        // Linear in k.
        assert_relative_eq!(
            fresnel_parameter(0.02, 2.0 * k, 1600.0),
            2.0 * fresnel_parameter(0.02, k, 1600.0)
        );
        // W0 = sqrt(2 L / k) gives 1.
        let w0 = (2.0 * 1600.0 / k).sqrt();
        assert_relative_eq!(fresnel_parameter(w0, k, 1600.0), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn elliptic_moments_paper_channel() {
        let spec = elliptic_moments(1.5, 0.98, 0.02).unwrap();
        assert_relative_eq!(spec.mean[2], 1.690_636_533_200_161_8, max_relative = 1e-12);
        assert_relative_eq!(
            spec.covariance[0][0],
            2.027_222_581_766_383_6e-4,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            spec.covariance[2][2],
            0.059_656_936_441_354_258,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            spec.covariance[2][3],
            -0.041_844_970_080_692_571,
            max_relative = 1e-12
        );
        assert_eq!(spec.covariance[0][2], 0.0);
    }

    #[test]
    fn elliptic_moments_no_turbulence() {
        let spec = elliptic_moments(0.0, 0.7, 0.02).unwrap();
        assert_eq!(spec.covariance[0][0], 0.0);
        assert_eq!(spec.covariance[2][2], 0.0);
        assert_relative_eq!(spec.mean[2], (1.0 / (0.7f64 * 0.7)).ln(), max_relative = 1e-12);
    }

    #[test]
    fn elliptic_moments_derived_point() {
        // Arbitrary-precision evaluation at sigma_R^2=3, Omega=0.5, W0=0.01.
        let spec = elliptic_moments(3.0, 0.5, 0.01).unwrap();
        assert_relative_eq!(spec.mean[2], 3.147_891_700_041_083_9, max_relative = 1e-12);
        assert_relative_eq!(
            spec.covariance[0][0],
            2.222_474_855_652_558_5e-4,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            spec.covariance[2][2],
            0.054_894_060_343_355_422,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            spec.covariance[2][3],
            -0.038_344_989_175_741_357,
            max_relative = 1e-12
        );
    }

    #[test]
    fn elliptic_transmittance_centered_circular_beam() {
        let ch = paper_weak_channel();
        let theta = 1.7f64;
        let w_sq = ch.beam_waist * ch.beam_waist * theta.exp();
        let expected = ch.eta_m * (1.0 - (-2.0 * ch.aperture * ch.aperture / w_sq).exp());
        let got = elliptic_transmittance([0.0, 0.0, theta, theta], 0.3, &ch).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn elliptic_transmittance_far_offset_vanishes() {
        let ch = paper_weak_channel();
        let got = elliptic_transmittance([50.0, 50.0, 1.7, 1.6], 0.3, &ch).unwrap();
        assert!(got >= 0.0 && got < 1e-12);
    }

    #[test]
    fn elliptic_transmittance_transcription_oracle() {
        // Independent high-precision transcription of the spot, scale, and
        // shape formulas evaluated at the paper's channel parameters.
        let ch = paper_weak_channel();
        let got = elliptic_transmittance([0.01, 0.02, 1.7, 1.6], 0.3, &ch).unwrap();
        assert_relative_eq!(got, 0.479_898_856_867_745_31, max_relative = 1e-10);
    }

    #[test]
    fn elliptic_transmittance_near_degenerate_continuity() {
        let ch = paper_weak_channel();
        let exact =
            elliptic_transmittance([0.01, 0.02, 1.7, 1.7 + 1e-6], 0.3, &ch).unwrap();
        let limit = elliptic_transmittance([0.01, 0.02, 1.7, 1.7], 0.3, &ch).unwrap();
        assert!((exact - limit).abs() < 1e-5, "exact={exact} limit={limit}");
    }

    #[test]
    fn lognormal_from_moments_paper_fit() {
        let (mu, sigma) = lognormal_from_moments(1e-3, 2.2e-6).unwrap();
        assert!((sigma - 1.08).abs() < 5e-3, "sigma={sigma}");
        assert!((mu - 7.49).abs() < 5e-3, "mu={mu}");
    }

    #[test]
    fn lognormal_from_moments_derived_and_limit() {
        let (mu, sigma) = lognormal_from_moments(0.5, 0.01).unwrap();
        assert_relative_eq!(sigma, 0.198_042_200_435_365_03, max_relative = 1e-12);
        assert_relative_eq!(mu, 0.712_757_537_136_585_96, max_relative = 1e-12);
        // variance -> 0 degenerates to a point mass at `mean`.
        let (mu, sigma) = lognormal_from_moments(0.3, 1e-14).unwrap();
        assert!(sigma < 1e-6);
        assert_relative_eq!(mu, -(0.3f64.ln()), max_relative = 1e-6);
    }

    #[test]
    fn sample_pdt_deterministic() {
        let model = TransmittanceModel::Deterministic(0.4);
        assert_eq!(sample_pdt(&model, 5, 1).unwrap(), vec![0.4; 5]);
    }

    #[test]
    fn sample_pdt_lognormal_mean_matches_quadrature() {
        let ch = paper_strong_channel();
        let model = TransmittanceModel::TruncatedLogNormal(ch.clone());
        let n = 1_000_000;
        let m = pdt_moments(&model, n, 31).unwrap();
        let mean_quad = lognormal_quadrature(&ch, |eta| eta);
        assert!(
            (m.mean - mean_quad).abs() <= 3.0 * m.se_mean,
            "mc={} quad={} se={}",
            m.mean,
            mean_quad,
            m.se_mean
        );
    }

    #[test]
    fn truncated_lognormal_density_normalized() {
        let ch = paper_strong_channel();
        let total = lognormal_quadrature(&ch, |_| 1.0);
        assert!((total - 1.0).abs() < 1e-8, "total={total}");
    }

    #[test]
    fn sample_pdt_all_in_unit_interval_and_deterministic_in_seed() {
        let model = TransmittanceModel::EllipticBeam(paper_weak_channel());
        let a = sample_pdt(&model, 2000, 9).unwrap();
        let b = sample_pdt(&model, 2000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&eta| (0.0..=1.0).contains(&eta)));
    }

    #[test]
    fn postselected_zero_threshold_is_identity() {
        let model = TransmittanceModel::TruncatedLogNormal(paper_strong_channel());
        let ps = TransmittanceModel::Postselected {
            inner: Box::new(model.clone()),
            eta_ps: 0.0,
        };
        assert_eq!(
            sample_pdt(&model, 100_000, 17).unwrap(),
            sample_pdt(&ps, 100_000, 17).unwrap()
        );
    }

    #[test]
    fn postselected_samples_respect_threshold() {
        let ps = TransmittanceModel::Postselected {
            inner: Box::new(TransmittanceModel::TruncatedLogNormal(
                paper_strong_channel(),
            )),
            eta_ps: 1e-3,
        };
        let s = sample_pdt(&ps, 20_000, 3).unwrap();
        assert_eq!(s.len(), 20_000);
        assert!(s.iter().all(|&eta| eta >= 1e-3));
    }

    #[test]
    fn postselected_infeasible_threshold_aborts() {
        // Rejection path: a deterministic inner below the threshold never
        // passes, so the underflow guard must fire.
        let ps = TransmittanceModel::Postselected {
            inner: Box::new(TransmittanceModel::Deterministic(0.01)),
            eta_ps: 0.5,
        };
        assert!(matches!(
            sample_pdt(&ps, 100, 3),
            Err(Error::FeasibilityUnderflow { .. })
        ));
        // Exact path: zero mass above eta_m is also rejected.
        let ps = TransmittanceModel::Postselected {
            inner: Box::new(TransmittanceModel::TruncatedLogNormal(
                paper_strong_channel(),
            )),
            eta_ps: 0.039_999,
        };
        let s = sample_pdt(&ps, 1000, 3).unwrap();
        assert!(s.iter().all(|&eta| (0.039_999..=0.04).contains(&eta)));
    }

    #[test]
    fn pdt_moments_deterministic_exact() {
        let m = pdt_moments(&TransmittanceModel::Deterministic(0.4), 10, 1).unwrap();
        assert_eq!(m.mean, 0.4);
        assert_eq!(m.second, 0.4 * 0.4);
        assert_eq!(m.variance, 0.0);
        assert_eq!(m.se_mean, 0.0);
    }

    #[test]
    fn pdt_second_moment_dominates_mean_squared() {
        for model in [
            TransmittanceModel::TruncatedLogNormal(paper_strong_channel()),
            TransmittanceModel::EllipticBeam(paper_weak_channel()),
            TransmittanceModel::empirical(vec![0.1, 0.4, 0.9]).unwrap(),
        ] {
            let m = pdt_moments(&model, 50_000, 5).unwrap();
            assert!(m.second >= m.mean * m.mean - 3.0 * m.se_second);
        }
    }

    #[test]
    fn exceedance_trivial_cases() {
        let det = TransmittanceModel::Deterministic(0.4);
        assert_eq!(exceedance(&det, 0.0, 100, 1).unwrap().value, 1.0);
        assert_eq!(exceedance(&det, 0.5, 100, 1).unwrap().value, 0.0);
        assert_eq!(exceedance(&det, 0.3, 100, 1).unwrap().value, 1.0);
    }

    #[test]
    fn exceedance_lognormal_matches_quadrature() {
        let ch = paper_strong_channel();
        let model = TransmittanceModel::TruncatedLogNormal(ch.clone());
        let got = exceedance(&model, 1e-3, 100, 1).unwrap().value;
        let quad = lognormal_quadrature(&ch, |eta| if eta >= 1e-3 { 1.0 } else { 0.0 });
        assert!((got - quad).abs() < 1e-4, "closed={got} quad={quad}");
    }

    #[test]
    fn exceedance_monotone_in_threshold() {
        let model = TransmittanceModel::TruncatedLogNormal(paper_strong_channel());
        let mut last = 1.0;
        for i in 0..40 {
            let eta_ps = i as f64 * 0.0015;
            let e = exceedance(&model, eta_ps, 100, 1).unwrap().value;
            assert!(e <= last + 1e-12);
            last = e;
        }
        assert_eq!(
            exceedance(&model, 1.0 + 1e-9, 100, 1).unwrap().value,
            0.0
        );
    }

    #[test]
    fn joint_feasibility_combinations() {
        let model = TransmittanceModel::TruncatedLogNormal(paper_strong_channel());
        let co = ChannelScenario::Copropagating(model.clone());
        let counter = ChannelScenario::Counterpropagating(model.clone(), model.clone());
        assert_eq!(joint_feasibility(&co, 0.0, 100, 1).unwrap().value, 1.0);
        let single = exceedance(&model, 0.002, 100, 1).unwrap().value;
        assert_relative_eq!(
            joint_feasibility(&co, 0.002, 100, 1).unwrap().value,
            single
        );
        assert_relative_eq!(
            joint_feasibility(&counter, 0.002, 100, 1).unwrap().value,
            single * single,
            max_relative = 1e-12
        );
    }

    #[test]
    fn sample_pairs_scenarios() {
        let co = ChannelScenario::Copropagating(TransmittanceModel::Deterministic(0.3));
        assert!(sample_pairs(&co, 10, 1)
            .unwrap()
            .iter()
            .all(|&p| p == (0.3, 0.3)));
        let counter = ChannelScenario::Counterpropagating(
            TransmittanceModel::Deterministic(0.2),
            TransmittanceModel::Deterministic(0.7),
        );
        assert!(sample_pairs(&counter, 10, 1)
            .unwrap()
            .iter()
            .all(|&p| p == (0.2, 0.7)));
    }

    #[test]
    fn copropagating_pairs_identical_bitwise() {
        let co = ChannelScenario::Copropagating(TransmittanceModel::TruncatedLogNormal(
            paper_strong_channel(),
        ));
        let pairs = sample_pairs(&co, 100_000, 2).unwrap();
        assert!(pairs.iter().all(|&(a, b)| a == b));
    }
}
