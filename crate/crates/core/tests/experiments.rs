use proptest::prelude::*;

use nvsim_core::dynamics::{NVModel, NoiseProcess};
use nvsim_core::experiments::{
    entangled_conditional_probability, resonant_readout_population, simulate_bath_preparation,
    simulate_entanglement_run, simulate_nuclear_cooling, simulate_ple, BathConfig, CPTConfig, CoolingConfig,
    EntanglementConfig, LambdaState, PLEProtocol, PleMode, Polarization,
};

#[test]
fn ple_counts_are_poisson() {
    let protocol = PLEProtocol {
        mode: PleMode::RepumpEachScan,
        axis: (0..=10).map(|k| -5.0 + k as f64).collect(),
        n_scans: 400,
        ..PLEProtocol::default()
    };
    let s = simulate_ple(&NVModel::default(), &protocol, &NoiseProcess::none(), 11).unwrap();
    let rows = s.per_scan.as_ref().unwrap();
    let expected = s.per_scan_expected.as_ref().unwrap();
    let n = rows.len() as f64;
    let (mut var_sum, mut mean_sum) = (0.0, 0.0);
    for i in 0..s.axis.len() {
        let mean = rows.iter().map(|r| r[i] as f64).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[i] as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // Without diffusion every scan shares one expected row.
        assert!(expected.iter().all(|e| (e[i] - expected[0][i]).abs() <= 1e-9 * expected[0][i].max(1.0)));
        var_sum += var;
        mean_sum += mean;
    }
    let ratio = var_sum / mean_sum;
    assert!(mean_sum > 10.0, "too few counts: {mean_sum}");
    assert!((0.9..=1.1).contains(&ratio), "variance / mean = {ratio}");
}

#[test]
fn conditioning_narrows_the_bath() {
    let model = NVModel::default();
    for seed in [1, 2, 3] {
        let widths: Vec<(f64, f64)> = [2e4, 8e4, 3.2e5]
            .iter()
            .map(|&t_cond| {
                let cfg = BathConfig { t_cond, n_runs: 4000, ..BathConfig::default() };
                let r = simulate_bath_preparation(&cfg, &model, seed).unwrap();
                assert!(r.conditioned_width <= r.unconditioned_width * 1.05);
                (r.conditioned_width, r.expected_conditioned_width)
            })
            .collect();
        for w in widths.windows(2) {
            assert!(w[1].1 < w[0].1, "seed {seed}: expected widths {widths:?}");
            assert!(w[1].0 < w[0].0, "seed {seed}: sampled widths {widths:?}");
        }
    }
}

#[test]
fn a1_resonance_is_narrower() {
    let a1 = CPTConfig { lambda_state: LambdaState::A1, ..CPTConfig::default() };
    let a2 = CPTConfig { lambda_state: LambdaState::A2, ..CPTConfig::default() };
    assert!(a1.eta() < a2.eta());
    for r_a in [0.1, 0.5, 2.0] {
        let w1 = CPTConfig { r_a, ..a1.clone() }.linewidth().unwrap();
        let w2 = CPTConfig { r_a, ..a2.clone() }.linewidth().unwrap();
        assert!(w1 < w2, "r_a {r_a}: {w1} vs {w2}");
    }
}

/// Stationary m_I distribution of the per-excitation flip chain, by detailed
/// balance across the two links -1 <-> 0 <-> +1.
fn cooling_stationary(cfg: &CoolingConfig) -> [f64; 3] {
    let fwhm = cfg.cpt.linewidth().unwrap();
    let rate = |k: usize| {
        let delta = 2.0 * cfg.cpt.hyperfine_gs * (k as f64 - 1.0 - cfg.resonant_m_i as f64);
        1.0 - cfg.cpt.contrast / (1.0 + (2.0 * delta / fwhm).powi(2))
    };
    let w = [0.5 * rate(1) / rate(0), 1.0, 0.5 * rate(1) / rate(2)];
    let z: f64 = w.iter().sum();
    w.map(|x| x / z)
}

#[test]
fn cooling_reaches_the_chain_asymptote() {
    for m in -1i8..=1 {
        let cfg = CoolingConfig { resonant_m_i: m, n_runs: 2000, ..CoolingConfig::default() };
        let trace = simulate_nuclear_cooling(&NVModel::default(), &cfg, 5).unwrap();
        let p = trace.final_populations();
        let want = cooling_stationary(&cfg);
        let k = (m + 1) as usize;
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for j in 0..3 {
            let sigma = (want[j] * (1.0 - want[j]) / cfg.n_runs as f64).sqrt();
            assert!((p[j] - want[j]).abs() < 5.0 * sigma + 1e-3, "m_I {m}: {p:?} vs {want:?}");
        }
        // An edge projection is fed from m_I = 0 only, which caps it below the centre's asymptote.
        let floor = if m == 0 { 0.9 } else { 0.85 };
        assert!(want[k] > floor && p[k] > floor, "m_I {m}: {p:?} vs {want:?}");
    }
}

#[test]
fn entanglement_runs_are_reproducible() {
    let cfg = EntanglementConfig { n_events: 2000, ..EntanglementConfig::measured_budget() };
    let a = simulate_entanglement_run(&cfg, 4).unwrap();
    let b = simulate_entanglement_run(&cfg, 4).unwrap();
    let c = simulate_entanglement_run(&cfg, 5).unwrap();
    assert_eq!(a.records, b.records);
    assert_ne!(a.records, c.records);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn h_and_v_mirror(t in 0.0f64..50.0, dw in 1.0f64..500.0, phi in -6.3f64..6.3) {
        let cfg = EntanglementConfig { delta_omega: dw, phi_plus_minus: phi, ..EntanglementConfig::default() };
        let h = entangled_conditional_probability(Polarization::H, t, &cfg).unwrap();
        let v = entangled_conditional_probability(Polarization::V, t, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!(((h - 0.5) + (v - 0.5)).abs() <= f64::EPSILON);
    }

    #[test]
    fn readout_inverts_calibration(p in 0.0f64..=1.0, c_b in 0.0f64..0.05, span in 0.01f64..1.0) {
        let c_m = c_b + span;
        let r = resonant_readout_population(c_b + p * span, c_m, c_b).unwrap();
        prop_assert!((r.population - p).abs() < 1e-12);
        prop_assert!(!r.clamped || p == 0.0 || p == 1.0);
    }
}
