//! Special functions and seeded multivariate Gaussian sampling.
//!
//! The elliptic-beam transmittance needs the principal branch of the Lambert
//! W function and modified Bessel functions of order 0 and 1, stable up to
//! arguments of ~1e4. Exponentially scaled Bessel variants are provided for
//! use inside products with `exp(-x)`.

use crate::{derive_seed, Error, Result};
use nalgebra::{Matrix4, Vector4};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

const NEG_INV_E: f64 = -0.367_879_441_171_442_33;

/// Principal branch of the Lambert W function, `w * exp(w) = x`, `w >= -1`.
///
/// Halley iteration from a series/asymptotic initial guess; converges to
/// relative error below 1e-12 on the whole domain `x >= -1/e`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if !x.is_finite() || x < NEG_INV_E - 1e-12 {
        return Err(Error::Domain {
            function: "lambert_w0",
            value: x,
        });
    }
    let x = x.max(NEG_INV_E);
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut w = if x < -0.25 {
        // Branch-point series in p = sqrt(2(e x + 1)).
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 * p * p * p / 72.0
    } else if x < std::f64::consts::E {
        x.ln_1p()
    } else {
        let l1 = x.ln();
        l1 - l1.ln()
    };
    for _ in 0..50 {
        let ew = w.exp();
        let f = w * ew - x;
        let denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * (w + 1.0));
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// Lambert W evaluated at `exp(y)`, valid for arbitrarily large `y`.
///
/// Avoids the overflow of `exp(y)` by solving `w + ln w = y` directly when
/// `y` is beyond the representable range of the exponential.
pub fn lambert_w0_of_exp(y: f64) -> Result<f64> {
    if y <= 700.0 {
        return lambert_w0(y.exp());
    }
    let mut w = y - y.ln();
    for _ in 0..50 {
        let f = w + w.ln() - y;
        let dw = f / (1.0 + 1.0 / w);
        w -= dw;
        if dw.abs() <= 1e-15 * w.abs() {
            break;
        }
    }
    Ok(w)
}

fn i0_series(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn i1_series(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * (k + 1)) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum * x / 2.0
}

/// Asymptotic series for `exp(-x) I_nu(x)`, `x >= 15`, `mu = 4 nu^2`.
fn ive_asymptotic(x: f64, mu: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        let next = term * ((2.0 * kf - 1.0) * (2.0 * kf - 1.0) - mu) / (8.0 * kf * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// Exponentially scaled modified Bessel function, `exp(-|x|) I_0(x)`.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 15.0 {
        i0_series(ax) * (-ax).exp()
    } else {
        ive_asymptotic(ax, 0.0)
    }
}

/// Exponentially scaled modified Bessel function, `exp(-|x|) I_1(x)`.
pub fn bessel_i1_scaled(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= 15.0 {
        i1_series(ax) * (-ax).exp()
    } else {
        ive_asymptotic(ax, 4.0)
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// Modified Bessel function of the first kind, order 0.
pub fn bessel_i0(x: f64) -> Result<f64> {
    let ax = x.abs();
    if ax <= 15.0 {
        return Ok(i0_series(ax));
    }
    let v = bessel_i0_scaled(x) * ax.exp();
    if !v.is_finite() {
        return Err(Error::Overflow {
            function: "bessel_i0",
            value: x,
        });
    }
    Ok(v)
}

/// Modified Bessel function of the first kind, order 1 (odd in `x`).
pub fn bessel_i1(x: f64) -> Result<f64> {
    let ax = x.abs();
    if ax <= 15.0 {
        let v = i1_series(ax);
        return Ok(if x < 0.0 { -v } else { v });
    }
    let v = bessel_i1_scaled(x) * ax.exp();
    if !v.is_finite() {
        return Err(Error::Overflow {
            function: "bessel_i1",
            value: x,
        });
    }
    Ok(v)
}

/// Mean and covariance of the 4-vector `(x0, y0, Theta_1, Theta_2)` that
/// parameterizes the elliptic beam: centroid coordinates in meters and the
/// two log-scale semiaxis parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mean: [f64; 4],
    pub covariance: [[f64; 4]; 4],
}

impl GaussianSpec {
    /// Validates symmetry (1e-12) and positive semidefiniteness
    /// (eigenvalues >= -1e-12, clamped to zero in the factorization).
    pub fn new(mean: [f64; 4], covariance: [[f64; 4]; 4]) -> Result<Self> {
        let scale = covariance
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1.0);
        for i in 0..4 {
            for j in (i + 1)..4 {
                if (covariance[i][j] - covariance[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter {
                        name: "covariance",
                        message: format!("not symmetric at ({i},{j})"),
                    });
                }
            }
        }
        let spec = Self { mean, covariance };
        spec.sqrt_factor()?;
        Ok(spec)
    }

    /// Symmetric square root of the covariance with eigenvalue clamp.
    fn sqrt_factor(&self) -> Result<Matrix4<f64>> {
        let m = Matrix4::from_fn(|i, j| self.covariance[i][j]);
        let scale = m.amax().max(1.0);
        let eig = nalgebra::SymmetricEigen::new(m);
        let mut vals = eig.eigenvalues;
        for v in vals.iter_mut() {
            if *v < -1e-12 * scale {
                return Err(Error::IndefiniteCovariance { eigenvalue: *v });
            }
            *v = v.max(0.0).sqrt();
        }
        let q = eig.eigenvectors;
        Ok(q * Matrix4::from_diagonal(&vals) * q.transpose())
    }
}

/// Streaming sampler for a [`GaussianSpec`], deterministic in the seed.
pub struct GaussianSampler {
    mean: Vector4<f64>,
    factor: Matrix4<f64>,
    rng: ChaCha12Rng,
}

impl GaussianSampler {
    pub fn new(spec: &GaussianSpec, seed: u64) -> Result<Self> {
        Ok(Self {
            mean: Vector4::from_row_slice(&spec.mean),
            factor: spec.sqrt_factor()?,
            rng: ChaCha12Rng::seed_from_u64(derive_seed(seed, 0)),
        })
    }

    pub fn next_sample(&mut self) -> [f64; 4] {
        let z = Vector4::from_fn(|_, _| standard_normal(&mut self.rng));
        let v = self.mean + self.factor * z;
        [v[0], v[1], v[2], v[3]]
    }
}

/// One standard-normal variate via Box-Muller on the given generator.
pub(crate) fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    // Open-interval uniforms keep ln(u) finite.
    let u: f64 = loop {
        let u = rng.gen::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Draws `count` samples from the Gaussian, reproducible in `(seed, count)`.
pub fn gaussian_sample(spec: &GaussianSpec, seed: u64, count: usize) -> Result<Vec<[f64; 4]>> {
    let mut sampler = GaussianSampler::new(spec, seed)?;
    Ok((0..count).map(|_| sampler.next_sample()).collect())
}
