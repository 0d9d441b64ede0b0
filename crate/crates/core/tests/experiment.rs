use proptest::prelude::*;

use dlmpc::admm::Algorithm;
use dlmpc::agents::Scheduler;
use dlmpc::experiment::{
    benchmark_point, build_scenario, initial_state, run_benchmark, simulate, subproblem_counts, verify, write_benchmark_csv, ExperimentConfig,
    ProblemKind, Sweep, SystemKind,
};
use dlmpc::model::{write_model, SubsystemPartition, SystemModel};
use nalgebra::DMatrix;

fn fixture(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(format!("{}/../../fixtures/{name}.cfg", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn bench(case: ProblemKind, n: usize) -> ExperimentConfig {
    ExperimentConfig { system: SystemKind::BenchmarkChain, subsystems: n, problem: case, ..Default::default() }
}

#[test]
fn parses_keys_and_comments() {
    let cfg = ExperimentConfig::parse(
        "# comment\nsystem = benchmark_chain\n\ncase = c4\nsubsystems = 12\nrho = 2.5\nscheduler = parallel\nsweep_subsystems = 10, 20\ncases = c1,c3\nterminal_constraint = yes\n",
    )
    .unwrap();
    assert_eq!(cfg.system, SystemKind::BenchmarkChain);
    assert_eq!(cfg.problem, ProblemKind::C4);
    assert_eq!(cfg.subsystems, 12);
    assert_eq!(cfg.rho, 2.5);
    assert_eq!(cfg.scheduler, Scheduler::Parallel);
    assert_eq!(cfg.sweep_subsystems, vec![10, 20]);
    assert_eq!(cfg.cases, vec![ProblemKind::C1, ProblemKind::C3]);
    assert!(cfg.terminal_constraint);
    assert_eq!(cfg.horizon(), 5);
}

#[test]
fn rejects_bad_config() {
    assert!(ExperimentConfig::parse("nonsense = 1").is_err());
    assert!(ExperimentConfig::parse("rho = fast").is_err());
    assert!(ExperimentConfig::parse("just a line").is_err());
    assert!(ExperimentConfig::parse("case = c9").is_err());
    assert!(ExperimentConfig { rho: -1.0, ..Default::default() }.validate().is_err());
    assert!(ExperimentConfig { subsystems: 0, ..Default::default() }.validate().is_err());
    assert!(ExperimentConfig { problem: ProblemKind::C1, ..Default::default() }.validate().is_err());
    assert!(ExperimentConfig { problem: ProblemKind::S2, ..bench(ProblemKind::C1, 3) }.validate().is_err());
}

#[test]
fn fixtures_load_and_validate() {
    for name in ["s1", "s2", "s3", "s1_terminal", "c1", "c2", "c3", "c4"] {
        let cfg = fixture(name);
        cfg.validate().unwrap();
        assert_eq!(cfg.locality, 1);
        assert_eq!((cfg.eps_p, cfg.eps_d, cfg.eps_x), (1e-5, 1e-5, 1e-5));
    }
    assert_eq!(fixture("s1").horizon(), 50);
    assert_eq!(fixture("c1").subsystems, 10);
    assert!(fixture("s1_terminal").terminal_constraint);
}

#[test]
fn scenarios_select_the_table_algorithm() {
    for case in ProblemKind::CASES {
        let s = build_scenario::<f64>(&bench(case, 4)).unwrap();
        assert_eq!(matches!(s.algorithm, Algorithm::Coupled(_)), case.is_coupled(), "{case}");
        let p = s.problem().unwrap();
        assert_eq!(p.objectives.iter().all(|o| o.is_closed_form()), case.is_closed_form(), "{case}");
        assert_eq!(p.objectives.iter().all(|o| o.is_separable()), !case.is_coupled(), "{case}");
    }
    let s1 = build_scenario::<f64>(&fixture("s1")).unwrap();
    assert_eq!((s1.model().count(), s1.locality, s1.template.horizon), (4, 1, 50));
    assert_eq!(s1.algorithm, Algorithm::Separable);
    assert!(matches!(build_scenario::<f64>(&fixture("s3")).unwrap().algorithm, Algorithm::Coupled(_)));
}

#[test]
fn initial_state_is_seeded() {
    assert_eq!(initial_state::<f64>(8, 2020), initial_state::<f64>(8, 2020));
    assert_ne!(initial_state::<f64>(8, 2020), initial_state::<f64>(8, 2021));
}

#[test]
fn counts_do_not_depend_on_network_size() {
    let counts = |n: usize| {
        let cfg = bench(ProblemKind::C4, n);
        let s = build_scenario::<f64>(&cfg).unwrap();
        let c = s.controller(&cfg).unwrap();
        let mut v = subproblem_counts(&s, &c).unwrap();
        v.sort_unstable();
        v.dedup();
        v
    };
    assert_eq!(counts(10), counts(25));
}

#[test]
fn benchmark_point_and_csv() {
    let cfg = ExperimentConfig { steps: 2, ..bench(ProblemKind::C2, 5) };
    let row = benchmark_point(&cfg).unwrap();
    assert_eq!((row.subsystems, row.locality, row.horizon, row.steps), (5, 1, 5, 2));
    assert!(row.iteration_ms > 0.0 && row.mean_iterations >= 1.0 && row.bytes_per_agent_iteration > 0.0);
    assert_eq!(row.counts.len(), 5);
    let mut buf = Vec::new();
    write_benchmark_csv(&mut buf, &[row]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("case,subsystems,locality,horizon,steps,iteration_ms"));
}

#[test]
fn locality_sweep_has_one_row_per_radius() {
    let cfg = ExperimentConfig { steps: 1, sweep_locality: vec![1, 2], cases: vec![ProblemKind::C1], ..bench(ProblemKind::C1, 6) };
    let rows = run_benchmark(&cfg, Sweep::Locality).unwrap();
    assert_eq!(rows.iter().map(|r| r.locality).collect::<Vec<_>>(), vec![1, 2]);
    assert!(rows[1].max_counts().row_variables > rows[0].max_counts().row_variables);
}

#[test]
fn simulation_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { steps: 3, ..bench(ProblemKind::C3, 4) };
    let sim = simulate(&cfg).unwrap();
    assert_eq!(sim.dlmpc.steps(), 3);
    assert!(sim.max_deviation() <= 1e-3);
    sim.write(dir.path()).unwrap();
    for f in ["trajectory.csv", "oracle_trajectory.csv", "stats.csv", "iterations.csv", "inner.csv", "messages.csv"] {
        assert!(dir.path().join(f).metadata().unwrap().len() > 0, "{f}");
    }
}

#[test]
fn verify_passes_on_small_instance() {
    let report = verify(&ExperimentConfig { steps: 2, ..bench(ProblemKind::C4, 4) }).unwrap();
    assert!(report.passed(), "{:?}", report.checks);
    assert!(report.checks.iter().any(|c| c.name == "audit"));
}

#[test]
fn verify_reports_injected_fault() {
    let report = verify(&ExperimentConfig { steps: 1, inject_fault: true, ..bench(ProblemKind::C1, 4) }).unwrap();
    assert!(!report.passed());
    let failed: Vec<&str> = report.failures().map(|c| c.name).collect();
    assert_eq!(failed, vec!["audit"]);
}

#[test]
fn verify_reports_non_localizable_model() {
    let dir = tempfile::tempdir().unwrap();
    let part = SubsystemPartition::uniform(3, 1, 1).unwrap();
    let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.3, 0.0, 0.3, 0.5, 0.3, 0.0, 0.3, 0.5]);
    let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 0.0, 1.0]));
    let path = dir.path().join("m.json");
    write_model(&path, &SystemModel::<f64>::from_dense(part, &a, &b, 0.1).unwrap()).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.set("model_path", path.to_str().unwrap()).unwrap();
    cfg.horizon = Some(4);
    let report = verify(&cfg).unwrap();
    assert!(!report.passed());
    assert_eq!(report.checks.len(), 1);
    assert_eq!(report.checks[0].name, "localizability");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn initial_states_lie_in_unit_box(n in 1usize..40, seed in any::<u64>()) {
        let x = initial_state::<f64>(n, seed);
        prop_assert_eq!(x.len(), n);
        prop_assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn set_then_parse_round_trips(rho in 0.01f64..100.0, steps in 0usize..50, n in 1usize..200) {
        let text = format!("system = benchmark_chain\ncase = c2\nrho = {rho}\nsteps = {steps}\nsubsystems = {n}\n");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(cfg.rho, rho);
        prop_assert_eq!(cfg.steps, steps);
        prop_assert_eq!(cfg.subsystems, n);
        prop_assert!(cfg.validate().is_ok());
    }
}
