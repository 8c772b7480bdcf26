mod common;

use common::{difference_sigma, expected_start_stop, ThreeLevelG2};
use photonbench::detectors::SpadConfig;
use photonbench::fit::fit_g2;
use photonbench::presets::PRESETS;

#[test]
fn presets_reproduce_listed_purity() {
    let spad = SpadConfig::default();
    for p in PRESETS.iter() {
        let Some((target, _)) = p.g2_zero else { continue };
        let g2 = ThreeLevelG2::new(&p.emitter());
        let stop_rate = 0.5 * spad.efficiency * p.max_rate;
        let h = expected_start_stop(&g2, difference_sigma(spad.jitter_fwhm_ns), stop_rate, 0.25, 5000.0, 1e9);
        let fit = fit_g2(&h, None).unwrap();
        assert!(fit.converged, "{}", p.name);
        let g0 = fit.g2_zero.value;
        assert!((g0 - target).abs() < 0.002, "{}: fitted g2(0) {g0} vs {target}", p.name);
    }
}

#[test]
fn oracle_matches_two_level_limit() {
    use photonbench::photophysics::{antibunch_timescale, EmitterParams};
    let e = EmitterParams::two_level(4.0, 0.3);
    let g = ThreeLevelG2::new(&e);
    let t1 = antibunch_timescale(4.0, 0.3).unwrap();
    for t in [0.0, 0.5, 2.0, 10.0, -3.0] {
        let expected = 1.0 - (-f64::abs(t) / t1).exp();
        assert!((g.at(t) - expected).abs() < 1e-12, "t={t}");
    }
}
