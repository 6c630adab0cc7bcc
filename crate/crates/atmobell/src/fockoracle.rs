//! Independent truncated-Fock-space validator.
//!
//! Represents the four polarization modes `(H_A, V_A, H_B, V_B)` in a
//! photon-number basis truncated at `n_cut` photons per site, and pushes the
//! density matrix through loss, polarization rotation, on/off detection and
//! squashing by direct linear algebra. No expression is shared with the
//! closed-form click statistics, so agreement between the two is a genuine
//! cross-check.

use crate::photocount::DetectorParams;
use crate::{Error, Result};

/// Single-site basis: occupation pairs `(n_H, n_V)` with `n_H + n_V <=
/// n_cut`. Polarization rotations conserve the per-site total, so the
/// truncated space is exactly closed under them.
#[derive(Debug, Clone)]
pub struct SiteBasis {
    pub n_cut: usize,
    states: Vec<(usize, usize)>,
    lookup: Vec<Option<usize>>,
}

impl SiteBasis {
    pub fn new(n_cut: usize) -> Self {
        let mut states = Vec::new();
        let mut lookup = vec![None; (n_cut + 1) * (n_cut + 1)];
        for total in 0..=n_cut {
            for h in (0..=total).rev() {
                let v = total - h;
                lookup[h * (n_cut + 1) + v] = Some(states.len());
                states.push((h, v));
            }
        }
        Self {
            n_cut,
            states,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, idx: usize) -> (usize, usize) {
        self.states[idx]
    }

    pub fn index(&self, h: usize, v: usize) -> Option<usize> {
        if h > self.n_cut || v > self.n_cut {
            return None;
        }
        self.lookup[h * (self.n_cut + 1) + v]
    }
}

/// Which site an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    A,
    B,
}

/// Which polarization mode of a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    H,
    V,
}

/// Pure four-mode state with real amplitudes, indexed `site_a * d + site_b`
/// over the per-site basis of dimension `d`.
#[derive(Debug, Clone)]
pub struct PureState {
    pub basis: SiteBasis,
    pub amps: Vec<f64>,
}

impl PureState {
    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a * a).sum()
    }

    pub fn overlap(&self, other: &PureState) -> f64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Outer product `|psi><psi|`.
    pub fn to_density(&self) -> DensityMatrix {
        let dim = self.amps.len();
        let mut rho = vec![0.0; dim * dim];
        for (i, &a) in self.amps.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in self.amps.iter().enumerate() {
                rho[i * dim + j] = a * b;
            }
        }
        DensityMatrix {
            basis: self.basis.clone(),
            rho,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Photon-number-truncated twin-beam PDC state.
///
/// Amplitude `(-1)^m tanh^n(xi) / cosh^2(xi)` on the occupation
/// `(n-m, m, m, n-m)`. The neglected norm is `tanh^{2(N+1)}(xi)
/// ((N+2) - (N+1) tanh^2 xi)`; if it exceeds `1e-7` the cutoff is refused.
pub fn build_pdc_state(xi: f64, n_cut: usize) -> Result<PureState> {
    let t = xi.tanh().powi(2);
    let tail = t.powi(n_cut as i32 + 1) * ((n_cut as f64 + 2.0) - (n_cut as f64 + 1.0) * t);
    const BOUND: f64 = 1e-7;
    if tail > BOUND {
        return Err(Error::CutoffTooSmall {
            cutoff: n_cut,
            tail,
            bound: BOUND,
        });
    }
    let basis = SiteBasis::new(n_cut);
    let d = basis.len();
    let mut amps = vec![0.0; d * d];
    let norm = 1.0 - t; // 1 / cosh^2(xi)
    let tanh = xi.tanh();
    for n in 0..=n_cut {
        for m in 0..=n {
            let a = basis.index(n - m, m).unwrap();
            let b = basis.index(m, n - m).unwrap();
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            amps[a * d + b] = sign * tanh.powi(n as i32) * norm;
        }
    }
    Ok(PureState { basis, amps })
}

/// The polarization singlet `(|1001> - |0110>)/sqrt(2)` over
/// `(H_A, V_A, H_B, V_B)`.
pub fn build_bell_state(n_cut: usize) -> PureState {
    let basis = SiteBasis::new(n_cut);
    let d = basis.len();
    let mut amps = vec![0.0; d * d];
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    amps[basis.index(1, 0).unwrap() * d + basis.index(0, 1).unwrap()] = inv_sqrt2;
    amps[basis.index(0, 1).unwrap() * d + basis.index(1, 0).unwrap()] = -inv_sqrt2;
    PureState { basis, amps }
}

/// Four-mode density matrix over the joint basis (dimension `d^2`), stored
/// dense and real.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub basis: SiteBasis,
    pub rho: Vec<f64>,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.basis.len() * self.basis.len()
    }

    pub fn trace(&self) -> f64 {
        let dim = self.dim();
        (0..dim).map(|i| self.rho[i * dim + i]).sum()
    }

    pub fn purity(&self) -> f64 {
        let dim = self.dim();
        let mut acc = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                acc += self.rho[i * dim + j] * self.rho[j * dim + i];
            }
        }
        acc
    }

    fn occupation(&self, joint: usize, site: Site, mode: Mode) -> usize {
        let d = self.basis.len();
        let idx = match site {
            Site::A => joint / d,
            Site::B => joint % d,
        };
        let (h, v) = self.basis.state(idx);
        match mode {
            Mode::H => h,
            Mode::V => v,
        }
    }

    fn shifted(&self, joint: usize, site: Site, mode: Mode, k: usize) -> usize {
        let d = self.basis.len();
        let (a, b) = (joint / d, joint % d);
        let idx = match site {
            Site::A => a,
            Site::B => b,
        };
        let (h, v) = self.basis.state(idx);
        let new = match mode {
            Mode::H => self.basis.index(h - k, v).unwrap(),
            Mode::V => self.basis.index(h, v - k).unwrap(),
        };
        match site {
            Site::A => new * d + b,
            Site::B => a * d + new,
        }
    }

    /// Pure-loss channel of transmittance `eta` on one mode, as a Kraus sum
    /// over the number `k` of absorbed photons.
    pub fn apply_loss(&mut self, site: Site, mode: Mode, eta: f64) {
        let dim = self.dim();
        let n_cut = self.basis.n_cut;
        // kraus[n][k] = <n-k| A_k |n>
        let mut kraus = vec![vec![0.0; n_cut + 1]; n_cut + 1];
        for (n, row) in kraus.iter_mut().enumerate() {
            for (k, cell) in row.iter_mut().enumerate().take(n + 1) {
                *cell = binomial(n, k).sqrt()
                    * eta.powf((n - k) as f64 / 2.0)
                    * (1.0 - eta).powf(k as f64 / 2.0);
            }
        }
        let occ: Vec<usize> = (0..dim).map(|j| self.occupation(j, site, mode)).collect();
        let mut out = vec![0.0; dim * dim];
        for k in 0..=n_cut {
            for (row, &n_row) in occ.iter().enumerate() {
                if n_row < k {
                    continue;
                }
                let row_k = self.shifted(row, site, mode, k);
                let c_row = kraus[n_row][k];
                for (col, &n_col) in occ.iter().enumerate() {
                    if n_col < k {
                        continue;
                    }
                    let val = self.rho[row * dim + col];
                    if val == 0.0 {
                        continue;
                    }
                    let col_k = self.shifted(col, site, mode, k);
                    out[row_k * dim + col_k] += c_row * kraus[n_col][k] * val;
                }
            }
        }
        self.rho = out;
    }

    /// Rotates the polarization analyzer of one site by `theta`: the
    /// transmitted mode becomes `cos(theta) a_H + sin(theta) a_V`.
    pub fn rotate_site(&mut self, site: Site, theta: f64) {
        let u = site_unitary(&self.basis, theta);
        let d = self.basis.len();
        let dim = d * d;
        // rho' = (U (x) I) rho (U (x) I)^T applied on the chosen site index.
        let site_idx = |joint: usize| match site {
            Site::A => joint / d,
            Site::B => joint % d,
        };
        let replace = |joint: usize, s: usize| match site {
            Site::A => s * d + joint % d,
            Site::B => (joint / d) * d + s,
        };
        let mut tmp = vec![0.0; dim * dim];
        for row in 0..dim {
            let s = site_idx(row);
            for sp in 0..d {
                let c = u[sp * d + s];
                if c == 0.0 {
                    continue;
                }
                let rowp = replace(row, sp);
                for col in 0..dim {
                    tmp[rowp * dim + col] += c * self.rho[row * dim + col];
                }
            }
        }
        let mut out = vec![0.0; dim * dim];
        for col in 0..dim {
            let s = site_idx(col);
            for sp in 0..d {
                let c = u[sp * d + s];
                if c == 0.0 {
                    continue;
                }
                let colp = replace(col, sp);
                for row in 0..dim {
                    out[row * dim + colp] += tmp[row * dim + col] * c;
                }
            }
        }
        self.rho = out;
    }
}

/// Matrix of the two-mode rotation `a_H -> cos a_H + sin a_V`,
/// `a_V -> -sin a_H + cos a_V` in the truncated site basis. Block diagonal
/// in the total photon number and exactly unitary on the truncated space.
pub fn site_unitary(basis: &SiteBasis, theta: f64) -> Vec<f64> {
    let d = basis.len();
    let (c, s) = (theta.cos(), theta.sin());
    let mut u = vec![0.0; d * d];
    for idx in 0..d {
        let (i, j) = basis.state(idx);
        // U (a_H^dag)^i (a_V^dag)^j |0> expanded binomially:
        // a_H^dag -> c a_H^dag - s a_V^dag, a_V^dag -> s a_H^dag + c a_V^dag.
        for p in 0..=i {
            for q in 0..=j {
                let h = p + q;
                let v = i + j - h;
                let coeff = binomial(i, p)
                    * c.powi(p as i32)
                    * (-s).powi((i - p) as i32)
                    * binomial(j, q)
                    * s.powi(q as i32)
                    * c.powi((j - q) as i32);
                let target = basis.index(h, v).unwrap();
                u[target * d + idx] +=
                    coeff * (factorial(h) * factorial(v) / (factorial(i) * factorial(j))).sqrt();
            }
        }
    }
    u
}

/// Joint click/no-click probabilities of the four on/off detectors
/// `(A_T, A_R, B_T, B_R)` reading the modes `(H_A, V_A, H_B, V_B)`.
///
/// Indexed by the bit pattern `A_T << 3 | A_R << 2 | B_T << 1 | B_R`, bit
/// set meaning "clicked". A detector seeing `n` photons stays silent with
/// probability `exp(-nu) (1 - eta_c)^n`.
pub fn click_pattern_probs(rho: &DensityMatrix, detector: &DetectorParams) -> [f64; 16] {
    let dim = rho.dim();
    let silent_base = (-detector.nu).exp();
    let miss = 1.0 - detector.eta_c;
    let mut patterns = [0.0; 16];
    for joint in 0..dim {
        let p = rho.rho[joint * dim + joint];
        if p == 0.0 {
            continue;
        }
        let occs = [
            rho.occupation(joint, Site::A, Mode::H),
            rho.occupation(joint, Site::A, Mode::V),
            rho.occupation(joint, Site::B, Mode::H),
            rho.occupation(joint, Site::B, Mode::V),
        ];
        let silent: Vec<f64> = occs
            .iter()
            .map(|&n| silent_base * miss.powi(n as i32))
            .collect();
        for (pattern, slot) in patterns.iter_mut().enumerate() {
            let mut w = p;
            for (det_idx, &sil) in silent.iter().enumerate() {
                let clicked = pattern & (8 >> det_idx) != 0;
                w *= if clicked { 1.0 - sil } else { sil };
            }
            *slot += w;
        }
    }
    patterns
}

/// Squashed coincidence probabilities `[TT, TR, RT, RR]` from the raw
/// pattern distribution.
///
/// Events need at least one click per side. With `include_double_clicks` a
/// side that fired both detectors contributes `1/2` to each of its outcomes;
/// without it, double-click events are discarded.
pub fn squash_patterns(patterns: &[f64; 16], include_double_clicks: bool) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (pattern, &p) in patterns.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let a_t = pattern & 8 != 0;
        let a_r = pattern & 4 != 0;
        let b_t = pattern & 2 != 0;
        let b_r = pattern & 1 != 0;
        if !(a_t || a_r) || !(b_t || b_r) {
            continue;
        }
        if !include_double_clicks && ((a_t && a_r) || (b_t && b_r)) {
            continue;
        }
        let wa = 1.0 / (a_t as u8 + a_r as u8) as f64;
        let wb = 1.0 / (b_t as u8 + b_r as u8) as f64;
        for (oa, fired_a) in [a_t, a_r].into_iter().enumerate() {
            if !fired_a {
                continue;
            }
            for (ob, fired_b) in [b_t, b_r].into_iter().enumerate() {
                if fired_b {
                    out[oa * 2 + ob] += p * wa * wb;
                }
            }
        }
    }
    out
}

/// Full oracle pipeline: PDC state, per-site channel loss, analyzer
/// rotations by `theta_a` and `theta_b`, on/off detection and squashing.
/// Returns `(p_same, p_different)`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_joint_probs(
    xi: f64,
    detector: &DetectorParams,
    eta_a: f64,
    eta_b: f64,
    theta_a: f64,
    theta_b: f64,
    n_cut: usize,
    include_double_clicks: bool,
) -> Result<(f64, f64)> {
    detector.validate()?;
    let state = build_pdc_state(xi, n_cut)?;
    let mut rho = state.to_density();
    rho.apply_loss(Site::A, Mode::H, eta_a);
    rho.apply_loss(Site::A, Mode::V, eta_a);
    rho.apply_loss(Site::B, Mode::H, eta_b);
    rho.apply_loss(Site::B, Mode::V, eta_b);
    if theta_a != 0.0 {
        rho.rotate_site(Site::A, theta_a);
    }
    if theta_b != 0.0 {
        rho.rotate_site(Site::B, theta_b);
    }
    let patterns = click_pattern_probs(&rho, detector);
    let squashed = squash_patterns(&patterns, include_double_clicks);
    Ok((squashed[0] + squashed[3], squashed[1] + squashed[2]))
}
