use std::fs;

use ossa_core::engine::run;
use ossa_core::harness::{
    default_policies, run_sweep, summarize, write_outputs, InstanceSource, PolicySpec, SweepConfig,
};
use ossa_core::instances::{gen_lower1, SyntheticConfig};
use ossa_core::policies::{AlwaysFill, PolicyKind};

fn small_config() -> SweepConfig {
    let mut config = SweepConfig::new(InstanceSource::Synthetic {
        config: SyntheticConfig {
            n: 6,
            horizon: 120,
            ..Default::default()
        },
    });
    config.rho_grid = Some(vec![0.2, 0.6, 1.2]);
    config.replications = 3;
    config.base_seed = 11;
    let mut policies = default_policies();
    policies.push(PolicySpec::la_gpa(0.01, 0.0));
    policies.push(PolicySpec::la_gpa(0.1, 10.0));
    policies.push(PolicySpec::la_gpa(1.0 / 3.0, 10.0));
    config.policies = policies;
    config
}

#[test]
fn sweep_outputs_are_byte_identical() {
    let config = small_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let rows = run_sweep(&config).unwrap();
    write_outputs(&rows, a.path()).unwrap();
    write_outputs(&run_sweep(&config).unwrap(), b.path()).unwrap();
    for name in [
        "results.csv",
        "costs.csv",
        "ratios_baselines.csv",
        "ratios_la_gpa.csv",
    ] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs");
    }
    let header = fs::read_to_string(a.path().join("results.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "rho,policy,series,seed,replication,lambda,eta_target,eta_realized,supply,baseline_rho,\
         transport,penalty,total,opt_relaxed,opt_rounded,ratio_relaxed,invariant_violations"
    );
}

#[test]
fn sweep_rows_are_consistent() {
    let config = small_config();
    let rows = run_sweep(&config).unwrap();
    assert_eq!(rows.len(), 3 * 3 * config.policies.len());
    for w in rows.windows(2) {
        let key = |r: &ossa_core::harness::ResultRow| (r.rho, r.policy.clone(), r.seed);
        assert!(key(&w[0]) <= key(&w[1]));
    }
    for r in &rows {
        assert!((r.transport + r.penalty - r.total).abs() <= 1e-9 * r.total.max(1.0));
        assert_eq!(r.invariant_violations, 0, "{r:?}");
        if r.opt_relaxed > 0.0 {
            assert_eq!(r.ratio_relaxed, Some(r.total / r.opt_relaxed));
        }
        if r.series.contains("eta=10s") {
            let target = r.eta_target.unwrap();
            assert_eq!(target, 10.0 * r.supply as f64);
            let got = r.eta_realized.unwrap();
            assert!(got >= 0.95 * target && got <= 1.05 * target);
        }
    }
    let summary = summarize(&rows).unwrap();
    assert_eq!(summary.len(), 3 * config.policies.len());
    assert!(summary.iter().all(|s| s.runs == 3));
    let la: Vec<_> = summary.iter().filter(|s| s.policy == "la-gpa").collect();
    assert_eq!(la.len(), 9);
}

#[test]
fn one_run_gives_one_row() {
    let mut config = small_config();
    config.rho_grid = Some(vec![0.5]);
    config.replications = 1;
    config.policies = vec![PolicySpec::plain(PolicyKind::Gpa)];
    let rows = run_sweep(&config).unwrap();
    assert_eq!(rows.len(), 1);
    let summary = summarize(&rows).unwrap();
    assert_eq!(summary[0].std_total, 0.0);
}

#[test]
fn file_source_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, _) = gen_lower1(4, 2, 0.5, 1.0, 3).unwrap();
    fs::write(dir.path().join("inst.json"), inst.to_json_pretty()).unwrap();
    let cfg = r#"{"source": {"kind": "file", "path": "inst.json"},
                  "rho_grid": [0.5, 1.0], "policies": [{"policy": "gpa"}, {"policy": "never"}]}"#;
    let path = dir.path().join("sweep.json");
    fs::write(&path, cfg).unwrap();
    let config = SweepConfig::from_path(&path).unwrap();
    let rows = run_sweep(&config).unwrap();
    assert_eq!(rows.len(), 4);
}

#[test]
fn first_wave_shortfall_averages_a_quarter() {
    // AlwaysFill stocks the lowest-index half; the random half H misses it
    // on about half its sites.
    let (n, g) = (20usize, 3u64);
    let trials = 2000;
    let mut total = 0u64;
    for seed in 0..trials {
        let (inst, _) = gen_lower1(n, g, 0.5, 1.0, seed).unwrap();
        let trace = run(&inst, &mut AlwaysFill).unwrap();
        total += trace.step(2).iter().map(|r| r.penalty_units).sum::<u64>();
    }
    let mean = total as f64 / trials as f64;
    let expect = (n as u64 * g) as f64 / 4.0;
    assert!(
        (mean - expect).abs() < 0.05 * expect,
        "mean {mean} vs {expect}"
    );
}
