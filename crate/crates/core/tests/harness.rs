use gradtrack::harness::{
    build_default_config, emit_csv, emit_plot, parse_csv, run_sweep, sweep_csv, sweep_svg, CsvRow, ExperimentConfig,
    GridConfig, NetworkConfig, ProblemKind, SweepResult, CSV_HEADER,
};
use gradtrack::method::{RunStatus, StepKind, TrackingKind};

fn quick(points: usize, max_iter: usize) -> ExperimentConfig {
    let mut cfg = build_default_config();
    cfg.max_iter = max_iter;
    cfg.grid = GridConfig::LogOverL { lo: 1.0 / 50.0, hi: 10.0, points };
    cfg
}

#[test]
fn default_config_matches_the_experiment() {
    let cfg = build_default_config();
    assert_eq!((cfg.n, cfg.d, cfg.r, cfg.eps, cfg.d_min), (25, 10, 0.25, 1e-5, 1e-8));
    assert_eq!(cfg.grid, GridConfig::LogOverL { lo: 0.02, hi: 10.0, points: 30 });
    assert_eq!(cfg.b_rule.b(0.5), 2.0);
    assert!(matches!(cfg.network, NetworkConfig::GeometricDropout { drop_prob, .. } if drop_prob == 0.25));
}

#[test]
fn sweep_has_one_row_per_cell_and_round_trips() {
    let res = run_sweep(&quick(30, 5)).unwrap();
    assert_eq!(res.cells.len(), 270);
    assert!((res.grid[0] - 1.0 / (50.0 * res.l)).abs() <= 1e-15 * res.grid[0]);
    assert!((res.grid[29] - 10.0 / res.l).abs() <= 1e-15 * res.grid[29]);
    let text = sweep_csv(&res);
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    assert_eq!(text.lines().count(), 271);
    let parsed = parse_csv(&text).unwrap();
    let expected: Vec<CsvRow> = res.cells.iter().map(CsvRow::from).collect();
    assert_eq!(parsed, expected);
}

#[test]
fn cells_at_equal_d_max_share_data_and_stream() {
    let res = run_sweep(&quick(4, 20)).unwrap();
    for g in 0..4 {
        let at: Vec<_> = res.cells.iter().filter(|c| c.grid_index == g).collect();
        assert_eq!(at.len(), 9);
        assert!(at.iter().all(|c| c.stream_checksum == at[0].stream_checksum));
        assert!(at.iter().all(|c| c.data_checksum == at[0].data_checksum));
    }
    let first = res.cells.iter().find(|c| c.grid_index == 0).unwrap().stream_checksum;
    let second = res.cells.iter().find(|c| c.grid_index == 1).unwrap().stream_checksum;
    assert_ne!(first, second);
}

#[test]
fn repeated_sweeps_are_identical() {
    let cfg = quick(3, 400);
    let a = run_sweep(&cfg).unwrap();
    let b = run_sweep(&cfg).unwrap();
    assert_eq!(a.cells, b.cells);
    assert_eq!(sweep_csv(&a), sweep_csv(&b));
}

#[test]
fn small_steps_converge_and_diverged_rows_use_sentinel() {
    let mut cfg = quick(2, 50_000);
    cfg.variants = vec![TrackingKind::Zero];
    cfg.policies = vec![StepKind::Constant];
    cfg.grid = GridConfig::Explicit { values: vec![0.1, 50.0] };
    let res = run_sweep(&cfg).unwrap();
    assert_eq!(res.cells[0].status, RunStatus::Converged);
    assert_eq!(res.cells[1].status, RunStatus::Diverged);
    let rows = parse_csv(&sweep_csv(&res)).unwrap();
    assert_eq!(rows[1].iterations, -1);
    assert!(rows[0].iterations > 0);
}

#[test]
fn plot_has_a_panel_per_variant_and_survives_empty_input() {
    let res = run_sweep(&quick(3, 30)).unwrap();
    let svg = sweep_svg(&res);
    assert_eq!(svg.matches("B: ").count(), 3);
    assert!(svg.contains("<polyline"));
    let empty = SweepResult { cells: Vec::new(), grid: Vec::new(), ..res };
    let svg = sweep_svg(&empty);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(!svg.contains("<polyline"));
}

#[test]
fn files_are_written_and_bad_paths_fail() {
    let res = run_sweep(&quick(2, 10)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_csv(&res, &dir.path().join("s.csv")).unwrap();
    emit_plot(&res, &dir.path().join("s.svg")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(parse_csv(&text).unwrap().len(), res.cells.len());
    let missing = dir.path().join("no/such/dir/s.csv");
    assert!(matches!(emit_csv(&res, &missing), Err(gradtrack::Error::Io(_))));
}

#[test]
fn config_validation() {
    let text = build_default_config().to_toml();
    assert!(text.lines().any(|l| l.starts_with("eps = ")));
    let bad_eps: String = text
        .lines()
        .map(|l| if l.starts_with("eps = ") { "eps = -1.0" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    assert!(ExperimentConfig::from_toml(&bad_eps).is_err());
    let mut cfg = quick(3, 10);
    cfg.grid = GridConfig::Explicit { values: vec![0.1, 0.05] };
    assert!(run_sweep(&cfg).is_err());
    cfg.grid = GridConfig::Explicit { values: vec![1e-9, 0.05] };
    assert!(run_sweep(&cfg).is_err());
    let mut quad = quick(3, 200);
    quad.problem = ProblemKind::Quadratic;
    quad.d = 1;
    assert_eq!(run_sweep(&quad).unwrap().cells.len(), 27);
}
