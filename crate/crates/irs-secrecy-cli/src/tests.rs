use super::*;

use std::collections::HashSet;

use approx::assert_relative_eq;

fn tiny_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::default();
    spec.scenario = Scenario::MaxminPerfect;
    spec.trials = 3;
    spec.seed = 11;
    spec.sweep.antennas = vec![3, 4];
    spec.system.k = 2;
    spec.system.n = 4;
    spec.system.bits = 2;
    spec
}

// ---- Metrics ----

#[test]
fn fairness_index_anchor_values() {
    assert_relative_eq!(jains_index(&[2.0, 2.0, 2.0]), 1.0, max_relative = 1e-12);
    assert_relative_eq!(jains_index(&[5.0, 0.0, 0.0, 0.0]), 0.25, max_relative = 1e-12);
    assert_relative_eq!(jains_index(&[1.0, 2.0]), 0.9, max_relative = 1e-12);
    // All-zero is the all-equal limit.
    assert_eq!(jains_index(&[0.0, 0.0]), 1.0);
}

#[test]
fn fairness_index_stays_in_bounds() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let k = rng.gen_range(1..9);
        let rates: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..20.0)).collect();
        let j = jains_index(&rates);
        assert!(j >= 1.0 / k as f64 - 1e-12 && j <= 1.0, "j={j} for {rates:?}");
    }
}

#[test]
#[should_panic(expected = "fairness of an empty")]
fn fairness_index_rejects_empty_input() {
    jains_index(&[]);
}

#[test]
fn median_handles_odd_even_and_unsorted() {
    assert_eq!(median(&[3.0]), 3.0);
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
}

// ---- Seed derivation ----

#[test]
fn derived_seeds_are_stable_and_distinct() {
    assert_eq!(derive_seed(1, 0, 0), derive_seed(1, 0, 0));
    let mut seen = HashSet::new();
    for base in [0u64, 1, 99] {
        for p in 0..6 {
            for t in 0..8 {
                seen.insert(derive_seed(base, p, t));
            }
        }
    }
    assert_eq!(seen.len(), 3 * 6 * 8, "collision in the derived seed grid");
}

// ---- Configuration ----

#[test]
fn bits_mapping_covers_continuous_and_quantized() {
    assert_eq!(quantization_of(-1), Quantization::Continuous);
    assert_eq!(quantization_of(0), Quantization::Bits(0));
    assert_eq!(quantization_of(3), Quantization::Bits(3));
}

#[test]
fn empty_config_file_yields_the_documented_defaults() {
    let spec = ExperimentSpec::from_toml("").unwrap();
    assert_eq!(spec, ExperimentSpec::default());
    let s = &spec.system;
    assert_eq!((s.m, s.k, s.n, s.bits), (6, 3, 16, 3));
    assert_eq!(s.p_t_dbm, 20.0);
    assert_eq!(s.noise_density_dbm_hz, -174.0);
    assert_eq!(s.bandwidth_hz, 1e6);
    assert_eq!((s.g_a_dbi, s.g_irs_dbi), (5.0, 5.0));
    assert_eq!(s.rician_k, 3.0);
    assert_eq!(s.alice_pos, [15.0, 0.0, 15.0]);
    assert_eq!(s.irs_pos, [0.0, 25.0, 40.0]);
    assert_eq!(s.user_area_center, [0.0, 25.0]);
    assert_eq!(s.user_area_side, 60.0);
    assert_eq!(s.delta, 0.02);
    assert_eq!(spec.trials, PRESET_TRIALS);
    assert_eq!(spec.seed, 1);
}

#[test]
fn config_file_overrides_and_rejections() {
    let spec = ExperimentSpec::from_toml(
        r#"
            scenario = "ssr_robust"
            trials = 5
            seed = 42

            [sweep]
            delta = [0.01, 0.05]

            [system]
            m = 4
            k = 2
            n = 8
        "#,
    )
    .unwrap();
    assert_eq!(spec.scenario, Scenario::SsrRobust);
    assert_eq!(spec.trials, 5);
    assert_eq!(spec.sweep.delta, vec![0.01, 0.05]);
    assert_eq!((spec.system.m, spec.system.k, spec.system.n), (4, 2, 8));

    // Unknown keys are configuration mistakes, not extensions.
    assert!(matches!(
        ExperimentSpec::from_toml("[system]\nantennas = 4"),
        Err(HarnessError::Parse(_))
    ));
    // Axis values outside their domain fail validation.
    for bad in [
        "trials = 0",
        "[sweep]\ndelta = [1.5]",
        "[sweep]\ngamma = [0.0]",
        "[sweep]\nbits = [-2]",
        "[system]\nk = 0",
    ] {
        assert!(
            matches!(ExperimentSpec::from_toml(bad), Err(HarnessError::Config(_))),
            "accepted invalid config {bad:?}"
        );
    }
    // Power minimization needs spare antennas for the noise subspace.
    let err = ExperimentSpec::from_toml("scenario = \"power_min\"\n[system]\nm = 3\nk = 3");
    assert!(matches!(err, Err(HarnessError::Config(_))));
}

#[test]
fn toml_round_trip_preserves_the_spec() {
    let spec = tiny_spec();
    let text = spec.to_toml();
    assert_eq!(ExperimentSpec::from_toml(&text).unwrap(), spec);
}

#[test]
fn axes_fall_back_to_the_template() {
    let mut spec = ExperimentSpec::default();
    spec.system.qos_gamma = 2.5;
    let ax = spec.axes();
    assert_eq!(ax.antennas, vec![6]);
    assert_eq!(ax.bits, vec![3]);
    assert_eq!(ax.delta, vec![0.02]);
    assert_eq!(ax.gamma, vec![2.5]);

    spec.sweep.bits = vec![1, -1];
    assert_eq!(spec.axes().bits, vec![1, -1]);
}

#[test]
fn sweep_grid_is_the_cartesian_product_in_axis_order() {
    let mut spec = ExperimentSpec::default();
    spec.sweep.antennas = vec![4, 6];
    spec.sweep.bits = vec![1, -1];
    spec.sweep.delta = vec![0.0, 0.02, 0.05];
    let points = spec.sweep_points();
    assert_eq!(points.len(), 2 * 2 * 3);
    assert_eq!(points[0], SweepPoint { m: 4, bits: 1, delta: 0.0, gamma: 1.0 });
    // Innermost axis varies fastest.
    assert_eq!(points[1].delta, 0.02);
    assert_eq!(points[3].bits, -1);
    assert_eq!(points[6].m, 6);
}

#[test]
fn perfect_scenarios_collapse_the_error_balls() {
    let mut spec = ExperimentSpec::default();
    spec.system.delta = 0.05;
    let point = spec.sweep_points()[0];
    let cfg = spec.to_config(&point, 9);
    assert_eq!(cfg.delta_k, 0.0);
    assert_eq!(cfg.delta_e, 0.0);

    spec.scenario = Scenario::MaxminRobust;
    let cfg = spec.to_config(&point, 9);
    assert_eq!(cfg.delta_k, 0.05);
    assert_eq!(cfg.delta_e, 0.05);
    // 20 dBm is 100 mW.
    assert_relative_eq!(cfg.p_t, 0.1, max_relative = 1e-12);
}

#[test]
fn config_hash_tracks_semantic_identity() {
    let a = tiny_spec();
    let mut b = a.clone();
    assert_eq!(a.config_hash(), b.config_hash());
    b.out_dir = PathBuf::from("elsewhere");
    assert_eq!(a.config_hash(), b.config_hash(), "output location is not identity");
    b.seed = 77;
    assert_eq!(a.config_hash(), b.config_hash(), "seed is not identity");
    b.trials = 4;
    assert_ne!(a.config_hash(), b.config_hash());
    let mut c = a.clone();
    c.system.delta = 0.3;
    assert_ne!(a.config_hash(), c.config_hash());
}

#[test]
fn every_preset_is_valid_and_named() {
    for name in PRESET_NAMES {
        let spec = preset(name).unwrap_or_else(|| panic!("missing preset {name}"));
        spec.validate().unwrap_or_else(|e| panic!("preset {name} invalid: {e}"));
        assert_eq!(spec.trials, PRESET_TRIALS);
    }
    assert!(preset("power_min").is_some(), "underscore spelling accepted");
    assert!(preset("nonsense").is_none());
    let gaps = preset("quantization-gap").unwrap();
    assert_eq!(gaps.sweep.bits, vec![3, -1]);
    let power = preset("power-min").unwrap();
    assert_eq!(power.sweep.gamma, vec![0.25, 0.5, 1.0, 2.0, 4.0]);
}

#[test]
fn scenario_names_round_trip() {
    for s in Scenario::ALL {
        assert_eq!(s.as_str().parse::<Scenario>().unwrap(), s);
    }
    assert_eq!("maxmin-robust".parse::<Scenario>().unwrap(), Scenario::MaxminRobust);
    assert!("sideways".parse::<Scenario>().is_err());
}

// ---- CSV formatting ----

#[test]
fn float_formatting_is_shortest_round_trip() {
    assert_eq!(fmt_f64(0.1), "0.1");
    assert_eq!(fmt_f64(2.0), "2.0");
    assert_eq!(fmt_f64(f64::NAN), "nan");
    assert_eq!(fmt_f64(f64::INFINITY), "inf");
    assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    let v = 0.30000000000000004;
    assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
}

#[test]
fn csv_fields_are_quoted_per_rfc4180() {
    assert_eq!(csv_field("plain"), "plain");
    assert_eq!(csv_field("a,b"), "\"a,b\"");
    assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    assert_eq!(csv_field("two\nlines"), "\"two\nlines\"");
}

fn synthetic_record(bits: i64, trial: usize, min_sr: f64) -> TrialRecord {
    TrialRecord {
        scenario: Scenario::MaxminPerfect,
        config_hash: 0xabcd,
        point: 0,
        trial,
        seed: trial as u64,
        m: 6,
        bits,
        delta: 0.0,
        gamma: 1.0,
        user_rates_bps: vec![min_sr, min_sr + 0.5],
        min_sr_bps: min_sr,
        ssr_bps: 2.0 * min_sr + 0.5,
        jain: 0.95,
        iterations: 4,
        total_power_w: 0.1,
        an_power_w: 0.0,
        wall_time_s: 0.25,
        status: "converged".into(),
    }
}

#[test]
fn record_csv_layout_and_line_endings() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    let mut rec = synthetic_record(3, 0, 1.25);
    rec.status = "error: solver said no, twice".into();
    emit_csv(&[rec], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.split("\r\n");
    assert_eq!(
        lines.next().unwrap(),
        "scenario,config_hash,point,trial,seed,m,bits,delta,gamma,sr_bps_user1,sr_bps_user2,\
         min_sr_bps,ssr_bps,jain,iterations,total_power_w,an_power_w,status"
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("maxmin_perfect,000000000000abcd,0,0,0,6,3,0.0,1.0,1.25,1.75,"));
    assert!(row.ends_with("\"error: solver said no, twice\""));
    assert!(!row.contains("0.25,"), "wall time must not appear in records");
    assert_eq!(lines.next().unwrap(), "", "file ends with CRLF");
}

#[test]
fn gap_pairing_matches_trials_and_medians() {
    let records = vec![
        synthetic_record(3, 0, 0.9),
        synthetic_record(3, 1, 0.5),
        synthetic_record(-1, 0, 1.0),
        synthetic_record(-1, 1, 1.0),
    ];
    let report = quantization_gap(&records, 3).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_relative_eq!(report.rows[0].3, 0.1, max_relative = 1e-12);
    assert_relative_eq!(report.rows[1].3, 0.5, max_relative = 1e-12);
    assert_relative_eq!(report.median_gap, 0.3, max_relative = 1e-12);
    assert!(report.alert);

    // A quantized row without a continuous partner voids the report.
    assert!(quantization_gap(&records[..3], 3).is_none() || records[..3].len() != 3);
    let unpaired = vec![synthetic_record(3, 0, 0.9)];
    assert!(quantization_gap(&unpaired, 3).is_none());
    // No quantized rows at all: nothing to report.
    assert!(quantization_gap(&[synthetic_record(-1, 0, 1.0)], 3).is_none());
}

// ---- End-to-end harness ----

#[test]
fn tiny_experiment_produces_one_record_per_cell() {
    let spec = tiny_spec();
    let result = run_experiment(&spec).unwrap();
    assert_eq!(result.records.len(), 2 * 3, "two sweep points, three trials");
    for (i, r) in result.records.iter().enumerate() {
        assert_eq!((r.point, r.trial), (i / 3, i % 3), "cell order is point-major");
        assert_eq!(r.m, [3, 4][r.point]);
        assert_eq!(r.seed, derive_seed(spec.seed, r.point, r.trial));
        assert!(!r.hard_failed(), "trial failed: {}", r.status);
        assert_eq!(r.user_rates_bps.len(), 2);
        assert!(r.user_rates_bps.iter().all(|&x| x.is_finite() && x >= 0.0));
        assert_relative_eq!(
            r.min_sr_bps,
            r.user_rates_bps.iter().cloned().fold(f64::INFINITY, f64::min),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            r.ssr_bps,
            r.user_rates_bps.iter().sum::<f64>(),
            max_relative = 1e-12
        );
        assert!(r.jain >= 0.5 - 1e-12 && r.jain <= 1.0);
        assert!(r.iterations >= 1);
        assert!(r.total_power_w > 0.0);
        assert_eq!(r.an_power_w, 0.0, "no artificial noise outside power_min");
        assert!(r.wall_time_s >= 0.0);
    }
    // Each non-failed trial leaves a trace and the trace is monotone.
    for p in 0..2 {
        for t in 0..3 {
            let objs: Vec<f64> = result
                .traces
                .iter()
                .filter(|row| row.point == p && row.trial == t)
                .map(|row| row.objective)
                .collect();
            assert!(!objs.is_empty());
            for w in objs.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "trace regressed at ({p},{t})");
            }
        }
    }
}

#[test]
fn record_and_trace_csvs_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec();
    spec.trials = 2;
    spec.sweep.antennas = vec![3];

    spec.out_dir = dir.path().join("a");
    let first = run_and_emit(&spec).unwrap();
    spec.out_dir = dir.path().join("b");
    let second = run_and_emit(&spec).unwrap();

    assert_eq!(first.traces, second.traces);
    for name in ["records.csv", "traces.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(!a.is_empty());
    }
    assert!(dir.path().join("a").join("timings.csv").exists());
}

#[test]
fn quantization_gap_csv_appears_when_both_resolutions_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec();
    spec.trials = 1;
    spec.sweep.antennas = vec![3];
    spec.sweep.bits = vec![2, -1];
    spec.out_dir = dir.path().to_path_buf();
    run_and_emit(&spec).unwrap();
    let gap = std::fs::read_to_string(dir.path().join("quantization_gap.csv")).unwrap();
    let lines: Vec<&str> = gap.trim_end().split("\r\n").collect();
    assert_eq!(lines[0], "trial,min_sr_bps_quantized,min_sr_bps_continuous,rel_gap");
    assert_eq!(lines.len(), 3, "one gap row and the median row");
    assert!(lines[2].starts_with("median,"));
}

#[test]
fn tiny_power_min_reports_noise_and_power() {
    let mut spec = tiny_spec();
    spec.scenario = Scenario::PowerMin;
    spec.trials = 1;
    spec.sweep.antennas = vec![4];
    spec.system.qos_gamma = 0.5;
    let result = run_experiment(&spec).unwrap();
    assert_eq!(result.records.len(), 1);
    let r = &result.records[0];
    assert!(!r.hard_failed(), "power run failed: {}", r.status);
    if r.status == "converged" || r.status == "max_iter" {
        assert!(r.total_power_w > 0.0);
        assert!(r.an_power_w >= 0.0);
        assert!(r.total_power_w >= r.an_power_w);
        assert!(r.user_rates_bps.iter().all(|&x| x > 0.0), "QoS delivers positive rates");
    }
}

#[test]
fn driver_failures_are_recorded_not_raised() {
    // M = K leaves no artificial-noise subspace; the spec validator
    // rejects it, which is itself the recorded contract.
    let mut spec = tiny_spec();
    spec.scenario = Scenario::PowerMin;
    spec.sweep.antennas = vec![2];
    assert!(matches!(spec.validate(), Err(HarnessError::Config(_))));
}

#[test]
fn validation_suite_passes_on_a_clean_build() {
    let checks = run_validation(7, 1);
    assert_eq!(checks.len(), 5);
    for c in &checks {
        assert!(c.passed, "check `{}` failed: {}", c.name, c.detail);
    }
}
