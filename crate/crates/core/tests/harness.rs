use std::fs;

use relay_precoding::harness::monte_carlo::{mean_and_stderr, realization_seeds, run_realization};
use relay_precoding::harness::{emit_results, monte_carlo, timesharing_sweep, ExperimentConfig, Series};
use relay_precoding::linalg::complex_gaussian;
use relay_precoding::pipeline::init_seed;
use relay_precoding::topology::{build_topology, parse_system_spec, rng_from_seed, sample_channels};
use relay_precoding::{Instance, VariantId};

fn config(system: &str) -> ExperimentConfig {
    ExperimentConfig::new(parse_system_spec(system).unwrap())
}

#[test]
fn single_link_matches_direct_sampling() {
    // One 1x1 link per hop at 0 dB: every variant reaches
    // 0.5 * min(log2(1 + |h|^2), log2(1 + |g|^2)).
    let mut cfg = config("(1^1 x 1^1 x 1^1, 1x1)");
    cfg.power_db = vec![0.0];
    cfg.realizations = 1000;
    cfg.seed = 9;
    let report = monte_carlo(&cfg).unwrap();

    let mut rng = rng_from_seed(0xfeed);
    let samples: Vec<f64> = (0..10_000)
        .map(|_| {
            let h = complex_gaussian(&mut rng, 1, 1)[(0, 0)].norm_sqr();
            let g = complex_gaussian(&mut rng, 1, 1)[(0, 0)].norm_sqr();
            0.5 * h.min(g).ln_1p() / std::f64::consts::LN_2
        })
        .collect();
    let (oracle, oracle_se) = mean_and_stderr(&samples);

    for v in VariantId::ALL {
        let row = report.row(0.0, 0.5, Series::Variant(v), 1).unwrap();
        let se = (row.stderr_bits.powi(2) + oracle_se.powi(2)).sqrt();
        assert!(
            (row.mean_sum_rate_bits - oracle).abs() <= 2.0 * se,
            "{v}: {} vs oracle {oracle} (2 SE = {})",
            row.mean_sum_rate_bits,
            2.0 * se
        );
    }
}

#[test]
fn one_realization_has_zero_stderr() {
    let mut cfg = config("(2^2 x 2^4 x 2^8, 1x1)");
    cfg.power_db = vec![10.0];
    cfg.realizations = 1;
    let report = monte_carlo(&cfg).unwrap();
    assert!(report.rows.iter().all(|r| r.stderr_bits == 0.0 && r.realizations == 1));
}

#[test]
fn trace_files_hold_one_line_per_iteration() {
    let mut cfg = config("(2^2 x 2^4 x 2^8, 1x1)");
    cfg.power_db = vec![20.0];
    cfg.timesharing = vec![0.4];
    cfg.realizations = 2;
    cfg.seed = 4;
    cfg.traces = true;
    let report = monte_carlo(&cfg).unwrap();
    let traces: Vec<_> = report.realizations.iter().flat_map(|r| r.traces.clone()).collect();
    let dir = tempfile::tempdir().unwrap();
    emit_results(&cfg, &report.rows, &traces, report.flags, dir.path()).unwrap();

    for r in 0..cfg.realizations {
        // Rebuild the same runs independently and count their iterations per phase.
        let spec = cfg.system_at(20.0, 0.4);
        let topology = build_topology(&spec);
        let (channel_seed, init_base) = realization_seeds(cfg.seed, r);
        let channels = sample_channels(&topology, &spec, channel_seed);
        let instance = Instance::new(&channels, &topology, &spec);
        let prepared = instance.prepare(0, init_seed(init_base, 0), &VariantId::ALL).unwrap();
        let proposed = instance
            .first_hop(
                &relay_precoding::first_hop::RateMatchTargets::new(prepared.second_hop.xi2_bar.clone(), 0.4),
                &prepared.first_hop_init,
            )
            .unwrap();
        for run in instance.run(&prepared, 0.4, &VariantId::ALL).unwrap() {
            let phase2 = if matches!(run.variant, VariantId::Baseline | VariantId::BaselinePc) {
                prepared.baseline.as_ref().unwrap().state.iterations()
            } else {
                proposed.state.iterations()
            };
            let expected = prepared.second_hop.state.iterations() + phase2 + run.phase3_iterations.unwrap_or(0);
            let name = format!("r{r:05}_p20_t0.4_{}.jsonl", run.variant);
            let text = fs::read_to_string(dir.path().join("traces").join(&name)).unwrap();
            assert_eq!(text.lines().count(), expected, "{name}");
            for line in text.lines() {
                let v: serde_json::Value = serde_json::from_str(line).unwrap();
                for key in ["phase", "iteration", "objective_bits", "max_delta"] {
                    assert!(v.get(key).is_some(), "{name}: missing {key}");
                }
            }
        }
    }
}

#[test]
fn rows_do_not_depend_on_thread_count() {
    let mut cfg = config("(2^2 x 2^4 x 2^8, 1x1)");
    cfg.power_db = vec![5.0, 25.0];
    cfg.realizations = 5;
    cfg.n_init = vec![1, 2];
    let serial = monte_carlo(&cfg).unwrap();
    cfg.parallel = 4;
    let parallel = monte_carlo(&cfg).unwrap();
    assert_eq!(serial.rows, parallel.rows);
    let again = run_realization(&cfg, 3).unwrap();
    assert_eq!(again.values, serial.realizations[3].values);
}

#[test]
fn sweep_endpoints_lose_to_the_interior() {
    let mut cfg = config("(2^2 x 2^4 x 2^8, 1x1)");
    cfg.power_db = vec![20.0];
    cfg.timesharing = vec![0.05, 0.3, 0.5, 0.7, 0.95];
    cfg.realizations = 6;
    cfg.variants = vec![VariantId::Baseline, VariantId::Final];
    let sweep = timesharing_sweep(&cfg).unwrap();
    for v in [VariantId::Baseline, VariantId::Final] {
        let mean = |t| sweep.report.row(20.0, t, Series::Variant(v), 1).unwrap().mean_sum_rate_bits;
        let interior = [0.3, 0.5, 0.7].map(mean).into_iter().fold(0.0, f64::max);
        assert!(mean(0.05) < interior && mean(0.95) < interior, "{v}");
    }
}

#[test]
fn weaker_relays_pull_the_best_timesharing_below_half() {
    let mut cfg = config("(2^4 x 2^8 x 2^16, 1x1)");
    cfg.power_db = vec![30.0];
    cfg.variants = vec![VariantId::Final];
    cfg.realizations = 20;
    cfg.seed = 12;

    cfg.timesharing = (1..10).map(|i| i as f64 / 10.0).collect();
    let sweep = timesharing_sweep(&cfg).unwrap();
    let best = |s: &relay_precoding::harness::SweepReport| {
        s.optima.iter().find(|o| o.series == Series::Variant(VariantId::Final)).unwrap().t
    };
    assert!((best(&sweep) - 0.5).abs() <= 0.1 + 1e-12, "equal powers: {}", best(&sweep));

    cfg.relay_power_offset_db = -10.0;
    cfg.timesharing = (0..7).map(|i| 0.35 + 0.025 * i as f64).collect();
    let sweep = timesharing_sweep(&cfg).unwrap();
    assert!(best(&sweep) < 0.5, "relays 10 dB down: {}", best(&sweep));
}

#[test]
fn channels_are_shared_across_powers() {
    // Same realization index, different power lists: the common cell agrees.
    let mut a = config("(2^2 x 2^4 x 2^8, 1x1)");
    a.power_db = vec![15.0];
    a.realizations = 2;
    let mut b = a.clone();
    b.power_db = vec![0.0, 15.0];
    let ra = monte_carlo(&a).unwrap();
    let rb = monte_carlo(&b).unwrap();
    for v in VariantId::ALL {
        let s = Series::Variant(v);
        assert_eq!(ra.row(15.0, 0.5, s, 1), rb.row(15.0, 0.5, s, 1));
    }
}
