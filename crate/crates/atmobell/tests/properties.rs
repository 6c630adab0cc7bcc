//! Randomized property tests for structural invariants.

use atmobell::channels::{
    elliptic_transmittance, exceedance, lognormal_from_moments, EllipticBeamChannel,
    TransmittanceModel, TruncatedLogNormalChannel,
};
use atmobell::chsh::correlation;
use atmobell::config::parse_grid;
use atmobell::photocount::{pdc_coefficients, DetectorParams};
use proptest::prelude::*;

fn weak_channel() -> EllipticBeamChannel {
    EllipticBeamChannel {
        rytov_sq: 1.5,
        fresnel: 0.98,
        beam_waist: 0.02,
        aperture: 0.04,
        length: 1600.0,
        eta_m: 0.75,
    }
}

proptest! {
    #[test]
    fn elliptic_transmittance_in_range(
        x0 in -0.2f64..0.2,
        y0 in -0.2f64..0.2,
        t1 in 0.5f64..3.5,
        t2 in 0.5f64..3.5,
        chi in 0.0f64..std::f64::consts::FRAC_PI_2,
    ) {
        let ch = weak_channel();
        let eta = elliptic_transmittance([x0, y0, t1, t2], chi, &ch).unwrap();
        prop_assert!((0.0..=ch.eta_m).contains(&eta), "eta = {eta}");
    }

    #[test]
    fn elliptic_transmittance_axis_swap_symmetry(
        x0 in -0.1f64..0.1,
        y0 in -0.1f64..0.1,
        t1 in 0.8f64..3.0,
        t2 in 0.8f64..3.0,
        chi in 0.0f64..std::f64::consts::FRAC_PI_2,
    ) {
        // Swapping the semi-axes while rotating the frame by a quarter turn
        // leaves the overlap with the aperture unchanged.
        let ch = weak_channel();
        let a = elliptic_transmittance([x0, y0, t1, t2], chi, &ch).unwrap();
        let b = elliptic_transmittance(
            [-y0, x0, t2, t1],
            std::f64::consts::FRAC_PI_2 - chi,
            &ch,
        )
        .unwrap();
        prop_assert!((a - b).abs() < 1e-9, "a = {a}, b = {b}");
    }

    #[test]
    fn correlation_is_bounded(ps in 0.0f64..1.0, pd in 0.0f64..1.0) {
        prop_assume!(ps + pd > 0.0);
        let e = correlation(ps, pd).unwrap();
        prop_assert!(e.abs() <= 1.0);
    }

    #[test]
    fn coefficient_quarter_turn_swap(
        xi in 0.0f64..0.4,
        eta_c in 0.05f64..1.0,
        eta_a in 0.0f64..1.0,
        eta_b in 0.0f64..1.0,
        delta in 0.0f64..std::f64::consts::PI,
    ) {
        let det = DetectorParams { eta_c, nu: 0.0 };
        let c = pdc_coefficients(xi, &det, eta_a, eta_b, delta);
        let c2 = pdc_coefficients(
            xi,
            &det,
            eta_a,
            eta_b,
            delta + std::f64::consts::FRAC_PI_2,
        );
        prop_assert!((c.c_same - c2.c_different).abs() < 1e-15 * (1.0 + c.c_same.abs()));
        prop_assert!((c.c_different - c2.c_same).abs() < 1e-15 * (1.0 + c.c_different.abs()));
        prop_assert!((c.c0 - c2.c0).abs() == 0.0);
    }

    #[test]
    fn exceedance_is_monotone_in_threshold(
        lo in 0.0f64..0.04,
        hi in 0.0f64..0.04,
    ) {
        let model = TransmittanceModel::TruncatedLogNormal(TruncatedLogNormalChannel {
            mu: 7.49,
            sigma: 1.08,
            eta_m: 0.04,
        });
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let p_lo = exceedance(&model, lo, 100, 1).unwrap().value;
        let p_hi = exceedance(&model, hi, 100, 1).unwrap().value;
        prop_assert!(p_hi <= p_lo + 1e-15);
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
    }

    #[test]
    fn lognormal_fit_roundtrips_moments(
        mean in 1e-4f64..0.9,
        rel_sd in 0.05f64..3.0,
    ) {
        let variance = (mean * rel_sd).powi(2);
        let (mu, sigma) = lognormal_from_moments(mean, variance).unwrap();
        // Untruncated log-normal moments from the fitted parameters.
        let m1 = (-mu + sigma * sigma / 2.0).exp();
        let m2 = (-2.0 * mu + 2.0 * sigma * sigma).exp();
        prop_assert!((m1 - mean).abs() < 1e-10 * mean, "m1 = {m1}");
        prop_assert!((m2 - m1 * m1 - variance).abs() < 1e-9 * variance);
    }

    #[test]
    fn grid_ranges_are_sorted_and_bounded(
        start in 0.0f64..1.0,
        span in 0.0f64..1.0,
        step in 0.01f64..0.3,
    ) {
        let stop = start + span;
        let grid = parse_grid(&format!("{start}:{stop}:{step}")).unwrap();
        prop_assert!(!grid.is_empty());
        prop_assert!(grid.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(grid[0] == start);
        prop_assert!(*grid.last().unwrap() <= stop + 1e-9);
    }
}
