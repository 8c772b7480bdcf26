//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::{difference_sigma, expected_start_stop, ThreeLevelG2};
use photonbench::calibrate::{
    combine_budget, efficiency_vs_flux, spad_efficiency, BudgetComponent, CalibrationInput, EvaluationType,
    SpadGate, TypeBUncertainties,
};
use photonbench::correlate::{
    full_correlation_with, normalize_g2, start_stop_histogram, start_stop_histogram_with, ChunkPlan,
};
use photonbench::detectors::{apply_dead_time, dead_time_correct, detect_spad, hbt_split, read_analog, DeadTimeModel, SpadConfig};
use photonbench::fit::fit_g2;
use photonbench::photophysics::{flux_to_power, photon_energy, EmitterParams, PumpMode};
use photonbench::presets::{calibration_analog, preset, CALIBRATION_SAMPLES};
use photonbench::stream::{equispaced_stream, poisson_stream, simulate_emission, variance_check, PhotonStream};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (&'static str, fn() -> Outcome);

const WAVELENGTH_NM: f64 = 785.6;

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn radiometric_endpoints() -> Outcome {
    let p_high = flux_to_power(1.32e6, WAVELENGTH_NM)?;
    let p_low = flux_to_power(1.44e5, WAVELENGTH_NM)?;
    let e = photon_energy(WAVELENGTH_NM);
    let ok_high = rel(p_high, 334e-15) <= 0.005;
    let ok_low = (36.4e-15 * 0.995..=36.5e-15 * 1.005).contains(&p_low);
    let ok_e = rel(e, 2.53e-19) <= 0.002;
    Ok((
        ok_high && ok_low && ok_e,
        format!(
            "P(1.32e6/s) = {:.2} fW, P(1.44e5/s) = {:.3} fW, E = {:.4e} J",
            p_high * 1e15,
            p_low * 1e15,
            e
        ),
    ))
}

fn uncertainty_budget() -> Outcome {
    let rows = [
        ("Wavelength", 0.008, EvaluationType::B),
        ("Si-detector spectral responsivity", 0.400, EvaluationType::B),
        ("Si-detector measurement", 1.870, EvaluationType::A),
        ("Amplification factor", 0.100, EvaluationType::B),
        ("Linearity factor", 0.030, EvaluationType::B),
        ("Si-SPAD counts", 0.020, EvaluationType::B),
    ]
    .into_iter()
    .map(|(n, p, k)| BudgetComponent::new(n, p, k))
    .collect();
    let b = combine_budget(rows)?;
    Ok(((b.combined - 1.92).abs() <= 0.005, format!("u_c = {:.4} %", b.combined)))
}

/// SPAD and reference-detector readings of a source delivering `power_w`
/// onto a SPAD of efficiency `eta`.
fn calibration_run(power_w: f64, eta: f64, seed: u64) -> Result<CalibrationInput, Box<dyn std::error::Error>> {
    let flux = power_w / photon_energy(WAVELENGTH_NM);
    let mut emitter = preset("T3K_30uW")?.emitter();
    emitter.collection_efficiency *= flux / emitter.steady_state_rate();
    let duration_s = 2.0;
    let photons = simulate_emission(&emitter, duration_s, seed)?;
    let spad = SpadConfig {
        efficiency: eta,
        ..SpadConfig::default()
    };
    let clicks = detect_spad(&photons, &spad, seed + 1)?;
    let gates = 20;
    let gate_ticks = clicks.duration_ticks() / gates;
    let gate_s = gate_ticks as f64 * clicks.resolution_ps() as f64 * 1e-12;
    let ts = clicks.timestamps();
    let spad_counts = (0..gates)
        .map(|g| {
            let lo = ts.partition_point(|&t| t < g * gate_ticks);
            let hi = ts.partition_point(|&t| t < (g + 1) * gate_ticks);
            SpadGate {
                gate_s,
                counts: (hi - lo) as u64,
            }
        })
        .collect();
    let analog = calibration_analog();
    let voltages = read_analog(power_w, &analog, CALIBRATION_SAMPLES, seed + 2)?;
    Ok(CalibrationInput {
        spad_counts,
        spad_dark_cps: spad.dark_rate_cps,
        voltages,
        analog,
        wavelength_nm: WAVELENGTH_NM,
        dead_time_ns: spad.dead_time_ns,
        dead_time_model: spad.dead_time_model,
        type_b: TypeBUncertainties::default(),
    })
}

fn calibration_recovery() -> Outcome {
    let truth = 0.603;
    let r = spad_efficiency(&calibration_run(193e-15, truth, 11)?)?;
    let ok_point = (r.eta_spad - truth).abs() <= 2.0 * r.u_absolute && (1.8..=2.1).contains(&r.u_combined);

    let e = photon_energy(WAVELENGTH_NM);
    let fluxes = [1.44e5, 2.5e5, 4.5e5, 7.64e5, 1.32e6];
    let inputs = fluxes
        .iter()
        .enumerate()
        .map(|(k, &n)| calibration_run(n * e, truth, 100 + 10 * k as u64))
        .collect::<Result<Vec<_>, _>>()?;
    let sweep = efficiency_vs_flux(&inputs)?;
    let u: Vec<f64> = sweep.iter().map(|p| p.u_combined).collect();
    let monotone = u.windows(2).all(|w| w[1] < w[0]);
    let low = u[0];
    let high = *u.last().unwrap();
    let ok_sweep = monotone && (low - 6.0).abs() <= 1.0 && (high - 2.0).abs() <= 0.5;
    let listed: Vec<String> = u.iter().map(|x| format!("{x:.2}")).collect();
    Ok((
        ok_point && ok_sweep,
        format!(
            "eta = {:.4} ± {:.4} (u_c {:.2} %); sweep u_c = [{}] %",
            r.eta_spad,
            r.u_absolute,
            r.u_combined,
            listed.join(", ")
        ),
    ))
}

struct HbtRun {
    fit: photonbench::fit::G2FitResult,
    stop_rate: f64,
}

fn hbt_pipeline(
    emitter: &EmitterParams,
    duration_s: f64,
    bin_ns: f64,
    seed: u64,
) -> Result<HbtRun, Box<dyn std::error::Error>> {
    let photons = simulate_emission(emitter, duration_s, seed)?;
    let (arm1, arm2) = hbt_split(&photons, seed + 1);
    let spad = SpadConfig::default();
    let start = detect_spad(&arm1, &spad, seed + 2)?;
    let stop = detect_spad(&arm2, &spad, seed + 3)?;
    let h = start_stop_histogram(&start, &stop, bin_ns, -5000.0, 5000.0)?;
    let fit = fit_g2(&h, None)?;
    Ok(HbtRun {
        fit,
        stop_rate: stop.rate(),
    })
}

fn g2_purity() -> Outcome {
    let emitter = preset("T3K_30uW")?.emitter();
    let clock = Instant::now();
    let run = hbt_pipeline(&emitter, 10.0, 0.25, 3)?;
    let elapsed = clock.elapsed().as_secs_f64();

    let spad = SpadConfig::default();
    let expected = expected_start_stop(
        &ThreeLevelG2::new(&emitter),
        difference_sigma(spad.jitter_fwhm_ns),
        run.stop_rate,
        0.25,
        5000.0,
        1e9,
    );
    let truth = fit_g2(&expected, None)?.g2_zero.value;
    let g0 = run.fit.g2_zero;
    let ok = run.fit.converged
        && (0.0..=0.12).contains(&g0.value)
        && (g0.value - truth).abs() <= 3.0 * g0.sigma
        && elapsed < 60.0;
    Ok((
        ok,
        format!(
            "g2(0) = {:.4} ± {:.4}, truth {:.4}, runtime {:.1} s",
            g0.value, g0.sigma, truth, elapsed
        ),
    ))
}

fn fit_rate_agreement() -> Outcome {
    let emitter = preset("T3K_30uW")?.emitter();
    let deviations = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let run = hbt_pipeline(&emitter, 1.0, 5.0, 1000 + 10 * s).map_err(|e| e.to_string())?;
            Ok(rel(run.fit.params.rate_r, run.stop_rate))
        })
        .collect::<Result<Vec<f64>, String>>()?;
    let within = deviations.iter().filter(|&&d| d <= 0.03).count();
    let worst = deviations.iter().cloned().fold(0.0, f64::max);
    Ok((within >= 95, format!("{within}/100 seeds within 3 %, worst {:.2} %", 100.0 * worst)))
}

fn thinning_variance() -> Outcome {
    let rate = 1e5;
    let dt_s = 1e-3;
    let duration_s = 1.0;
    let mut lines = Vec::new();
    let mut ok = true;
    for eta in [0.1, 0.5, 0.9] {
        for kind in ["poisson", "equispaced"] {
            let passed = (0..100u64)
                .into_par_iter()
                .map(|s| {
                    let emitted = match kind {
                        "poisson" => poisson_stream(rate, duration_s, 1, 7000 + s),
                        _ => equispaced_stream(rate, duration_s, 1),
                    }
                    .map_err(|e| e.to_string())?;
                    let r = variance_check(&emitted, eta, dt_s, 9000 + s).map_err(|e| e.to_string())?;
                    if r.n_windows != 1000 {
                        return Err(format!("{} windows", r.n_windows));
                    }
                    Ok(r.z_score.abs() < 3.0)
                })
                .collect::<Result<Vec<bool>, String>>()?
                .into_iter()
                .filter(|&p| p)
                .count();
            ok &= passed >= 99;
            lines.push(format!("{kind} η={eta}: {passed}/100"));
        }
    }
    Ok((ok, lines.join(", ")))
}

/// Standard deviation of the dead-time-corrected rate estimate for a Poisson
/// input of rate `lambda` observed for `duration_s`.
fn corrected_rate_sigma(lambda: f64, tau_s: f64, duration_s: f64, model: DeadTimeModel) -> f64 {
    let x = lambda * tau_s;
    let (mean_gap, var_gap, slope) = match model {
        DeadTimeModel::NonParalyzable => {
            let mean = tau_s + 1.0 / lambda;
            (mean, 1.0 / (lambda * lambda), 1.0 / (lambda * mean).powi(2))
        }
        DeadTimeModel::Paralyzable => {
            let ex = x.exp();
            let mean = ex / lambda;
            let var = (ex * ex - 2.0 * x * ex) / (lambda * lambda);
            (mean, var, (-x).exp() * (1.0 - x))
        }
    };
    let var_measured = var_gap / (duration_s * mean_gap.powi(3));
    var_measured.sqrt() / slope
}

fn dead_time_round_trip() -> Outcome {
    let tau_ns = 50.0;
    let duration_s = 1.0;
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    let mut ok = true;
    for x in [0.01, 0.05, 0.1] {
        let lambda = x / (tau_ns * 1e-9);
        for model in [DeadTimeModel::NonParalyzable, DeadTimeModel::Paralyzable] {
            for s in 0..10u64 {
                let input = poisson_stream(lambda, duration_s, 1, 500 + s)?;
                let measured = apply_dead_time(&input, tau_ns, model)?;
                let corrected = dead_time_correct(measured.rate(), tau_ns, model)?;
                let sigma = corrected_rate_sigma(lambda, tau_ns * 1e-9, duration_s, model);
                let z = (corrected - lambda).abs() / sigma;
                worst = worst.max(z);
                ok &= z < 3.0;
                checks += 1;
            }
        }
    }
    Ok((ok, format!("{checks} runs, largest |z| = {worst:.2}")))
}

fn random_stream(rng: &mut ChaCha8Rng, max_events: usize, span: u64) -> PhotonStream {
    let n = rng.random_range(0..=max_events);
    let mut ts: Vec<u64> = (0..n).map(|_| rng.random_range(0..span)).collect();
    ts.sort_unstable();
    PhotonStream::new(1, span, ts).unwrap()
}

fn brute_force(a: &[u64], b: &[u64], lo: i64, width: i64, n: usize, same: bool) -> Vec<u64> {
    let mut h = vec![0u64; n];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            if same && i == j {
                continue;
            }
            let d = y as i64 - x as i64;
            let k = (d - lo).div_euclid(width);
            if d >= lo && (k as usize) < n {
                h[k as usize] += 1;
            }
        }
    }
    h
}

fn correlator_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for case in 0..200 {
        let span = rng.random_range(1_000u64..200_000);
        let a = random_stream(&mut rng, 1000, span);
        let same = case % 5 == 0;
        let b = if same { a.clone() } else { random_stream(&mut rng, 1000, span) };
        let width = rng.random_range(1i64..500);
        let n = rng.random_range(1usize..200);
        let lo = rng.random_range(-20_000i64..20_000);
        let (w_ns, lo_ns, hi_ns) = (width as f64 / 1e3, lo as f64 / 1e3, (lo + width * n as i64) as f64 / 1e3);

        let sequential = full_correlation_with(&a, &b, w_ns, lo_ns, hi_ns, ChunkPlan::SEQUENTIAL)?;
        let chunked = full_correlation_with(
            &a,
            &b,
            w_ns,
            lo_ns,
            hi_ns,
            ChunkPlan {
                chunk_size: Some(rng.random_range(1usize..64)),
                parallel: true,
            },
        )?;
        let expected = brute_force(a.timestamps(), b.timestamps(), lo, width, n, same);
        if sequential.counts != expected || chunked != sequential {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches}/200 pairs differ")))
}

/// Maximum-likelihood decay rate (1/s) and its standard error from a
/// one-sided histogram starting at zero delay, treating the bin index as a
/// geometric variable truncated to the histogram.
fn truncated_geometric_rate(counts: &[u64], bin_s: f64) -> (f64, f64) {
    let n = counts.len() as f64;
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let mean_k = counts.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / total;
    let model_mean = |rate: f64| {
        let q = (-rate * bin_s).exp();
        q / (1.0 - q) - n * q.powf(n) / (1.0 - q.powf(n))
    };
    let model_var = |rate: f64| {
        let q = (-rate * bin_s).exp();
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for k in 0..counts.len() {
            let p = q.powi(k as i32);
            z += p;
            m1 += k as f64 * p;
            m2 += (k * k) as f64 * p;
        }
        m2 / z - (m1 / z).powi(2)
    };
    let (mut lo, mut hi) = (1.0, 1.0 / bin_s);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if model_mean(mid) > mean_k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rate = (lo * hi).sqrt();
    let h = rate * 1e-4;
    let slope = (model_mean(rate + h) - model_mean(rate - h)) / (2.0 * h);
    let sigma = (model_var(rate) / total).sqrt() / slope.abs();
    (rate, sigma)
}

fn poisson_baseline() -> Outcome {
    let a = poisson_stream(3e5, 10.0, 1, 21)?;
    let b = poisson_stream(3e5, 10.0, 1, 22)?;
    let h = full_correlation_with(&a, &b, 1.0, -500.0, 500.0, ChunkPlan::default())?;
    let g2 = normalize_g2(&h)?;
    let inside = g2.iter().filter(|p| (p.g2 - 1.0).abs() < 3.0 * p.stderr).count();
    let fraction = inside as f64 / g2.len() as f64;

    let starts = poisson_stream(1e4, 10.0, 1, 23)?;
    let stops = poisson_stream(5e5, 10.0, 1, 24)?;
    let bin_ns = 5.0;
    let ss = start_stop_histogram_with(&starts, &stops, bin_ns, 0.0, 10_000.0, ChunkPlan::default())?;
    let (fitted, sigma_fit) = truncated_geometric_rate(&ss.counts, bin_ns * 1e-9);
    let measured = stops.rate();
    let sigma = sigma_fit.hypot((measured / stops.duration_s()).sqrt());
    let z = (fitted - measured) / sigma;
    Ok((
        fraction >= 0.99 && z.abs() < 3.0,
        format!(
            "{inside}/{} bins within 3σ; tail decay {:.1} /s vs stop rate {:.1} /s (z = {z:.2})",
            g2.len(),
            fitted,
            measured
        ),
    ))
}

fn correlator_throughput() -> Outcome {
    let a = poisson_stream(5e5, 10.0, 1, 31)?;
    let b = poisson_stream(5e5, 10.0, 1, 32)?;
    let total = a.len() + b.len();
    let clock = Instant::now();
    let h = full_correlation_with(&a, &b, 0.1, -500.0, 500.0, ChunkPlan::SEQUENTIAL)?;
    let elapsed = clock.elapsed().as_secs_f64();
    Ok((
        elapsed < 5.0 && total >= 10_000_000 && h.n_bins() == 10_000,
        format!("{total} timestamps, {} pairs in {elapsed:.2} s", h.total()),
    ))
}

fn pulsed_prediction() -> Outcome {
    let rep_rate_mhz = 20.0;
    let spad_efficiency = 0.6;
    let end_to_end = 0.015;
    let emitter = EmitterParams {
        pump: PumpMode::Pulsed { rep_rate_mhz, p_exc: 1.0 },
        collection_efficiency: end_to_end / spad_efficiency,
        ..EmitterParams::two_level(4.0, 0.0)
    };
    let duration_s = 1.0;
    let photons = simulate_emission(&emitter, duration_s, 41)?;
    let spad = SpadConfig {
        efficiency: spad_efficiency,
        dark_rate_cps: 0.0,
        ..SpadConfig::default()
    };
    let clicks = detect_spad(&photons, &spad, 42)?;
    let pulses = rep_rate_mhz * 1e6 * duration_s;
    let sigma = (pulses * end_to_end * (1.0 - end_to_end)).sqrt() / duration_s;
    let rate = clicks.rate();
    let z = (rate - 3.0e5) / sigma;
    Ok((z.abs() < 3.0, format!("{rate:.0} clicks/s (σ {sigma:.0}, z = {z:.2})")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("radiometric endpoints", radiometric_endpoints),
        ("uncertainty budget", uncertainty_budget),
        ("calibration recovery", calibration_recovery),
        ("g2 purity", g2_purity),
        ("fit-rate agreement", fit_rate_agreement),
        ("thinning variance oracle", thinning_variance),
        ("dead-time round trip", dead_time_round_trip),
        ("correlator exactness", correlator_exactness),
        ("poisson baseline", poisson_baseline),
        ("correlator throughput", correlator_throughput),
        ("pulsed prediction", pulsed_prediction),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            clock.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
