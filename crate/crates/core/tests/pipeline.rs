use dwlab::config::{Command, ExperimentConfig};
use dwlab::energy::{EnergyContext, EnergyTracker};
use dwlab::experiment::{read_verdict, run_experiment, simulate_wave};
use dwlab::grid::{bump_initial_data, DampingProfile, RadialGrid};
use dwlab::wave::{solve_wave, WaveRunConfig};
use dwlab::weight::{assemble_a_eps, h_constant};
use proptest::prelude::*;

fn config(alpha: f64, dim: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"N": {dim}, "alpha": {alpha},
            "grid": {{"r0": 1.0, "r_max": 30.0, "n": 291}},
            "data": {{"center": 3.0, "width": 1.0, "amp_u0": 1.0, "amp_u1": 1.0}},
            "run": {{"T": 20.0, "record_every": 0.5, "fit_window": [4.0, 20.0]}},
            "checks": ["hardy", "monotonicity", "appfps"]}}"#
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn weight_is_positive_with_bounded_gradient(alpha in 0.2f64..2.0, dim in 2usize..5, eps in 0.05f64..0.3) {
        let p = DampingProfile::power(alpha, 1.0).unwrap();
        let grid = RadialGrid::new(1.0, 80.0, 1581, dim).unwrap();
        let w = assemble_a_eps(&p, &grid, eps).unwrap();
        let h = h_constant(dim, alpha);
        let a = w.a_eps.values();
        let da = w.da_eps.values();
        prop_assert!(a.iter().all(|v| *v > 0.0));
        prop_assert!(da.iter().all(|v| *v >= 0.0));
        for i in 0..a.len() {
            let q = da[i] * da[i] / (p.eval(grid.node(i)) * a[i]);
            prop_assert!(q <= h + eps + 0.02, "r = {} ratio {q}", grid.node(i));
        }
    }

    #[test]
    fn e1_never_increases(alpha in 0.3f64..1.5, amp0 in -2.0f64..2.0, amp1 in -2.0f64..2.0) {
        let p = DampingProfile::power(alpha, 1.0).unwrap();
        let grid = RadialGrid::new(1.0, 25.0, 481, 2).unwrap();
        let w = assemble_a_eps(&p, &grid, 0.1).unwrap();
        let data = bump_initial_data(&grid, 3.0, 1.0, amp0, amp1).unwrap();
        let ctx = EnergyContext::new(&w, &p, 4.0);
        let dt = 0.45 * grid.dr();
        let steps: Vec<usize> = (0..=15).map(|k| (k as f64 / dt).round() as usize).collect();
        let mut tracker = EnergyTracker::new(&ctx, steps, 1e-8);
        let cfg = WaveRunConfig { dt, t_final: 15.0 + 2.0 * dt, sample_times: vec![] };
        solve_wave(&cfg, &data, &p, |v| tracker.observe(v)).unwrap();
        let recs = tracker.finish();
        let scale = recs[0].e1().max(1e-300);
        for pair in recs.windows(2) {
            prop_assert!(pair[1].e1() <= pair[0].e1() + 1e-8 * scale);
        }
        prop_assert!(recs.iter().all(|r| r.hardy_margin >= -1e-8 * r.parts.e_dx.max(1e-300)));
    }
}

#[test]
fn inequality_checks_hold_across_dimensions() {
    for dim in [2, 3, 5] {
        let cfg = config(1.0, dim);
        let dir = tempfile::tempdir().unwrap();
        let art = run_experiment(&cfg, Command::Wave, dir.path()).unwrap();
        let v = read_verdict(&art).unwrap();
        assert_eq!(v.status, "complete");
        for c in &v.checks {
            assert!(c.pass, "N = {dim}: {} {}", c.name, c.detail);
        }
    }
}

#[test]
fn in_memory_run_matches_csv() {
    let cfg = config(1.0, 2);
    let dir = tempfile::tempdir().unwrap();
    let art = run_experiment(&cfg, Command::Wave, dir.path()).unwrap();
    let text = std::fs::read_to_string(art.energy_csv.unwrap()).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "E1").unwrap();
    let csv: Vec<f64> = lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    let mem = simulate_wave(&cfg).unwrap();
    assert_eq!(csv.len(), mem.records.len());
    for (c, r) in csv.iter().zip(&mem.records) {
        assert!((c - r.e1()).abs() <= 1e-11 * r.e1().abs());
    }
}

#[test]
fn every_command_writes_a_verdict() {
    let cfg = ExperimentConfig::from_json(
        r#"{"N": 2, "alpha": 1.0,
            "grid": {"r0": 1.0, "r_max": 40.0, "n": 391},
            "data": {"center": 3.0, "width": 1.0, "amp_u0": 1.0, "amp_u1": 1.0},
            "run": {"T": 8.0, "record_every": 0.5, "heat_T": 20.0, "heat_dt": 0.05, "fit_window": [2.0, 8.0]},
            "duhamel": {"ds": 0.05, "heat_dt": 0.005},
            "transform": {"isometry_n": 512, "psi0_n": [101, 201]}}"#,
    )
    .unwrap();
    for cmd in [
        Command::Weight,
        Command::Wave,
        Command::Heat,
        Command::Compare,
        Command::TransformCheck,
        Command::Duhamel,
    ] {
        let dir = tempfile::tempdir().unwrap();
        let art = run_experiment(&cfg, cmd, dir.path()).unwrap();
        let v = read_verdict(&art).unwrap();
        assert_eq!(v.command, cmd.as_str());
        assert_eq!(v.status, "complete");
        assert!(dir.path().join("artifact.json").exists());
        assert!(!art.csvs().is_empty(), "{}", cmd.as_str());
    }
}
