mod common;

use std::fs;

use crowdnav::bench::{
    audit_results, eval_predictor, render_frames, run_benchmark, BenchmarkConfig, ControllerSpec, DataSource, ImageFormat,
    PredictorSpec, ResultsTable,
};
use crowdnav::dataset::CrowdConfig;
use crowdnav::policy::{encode_joint_state, AgentObservation};
use crowdnav::sim::{parse_event_log, EpisodeLog};
use crowdnav::{GridSpec, PixelPoint, SceneSpec};

fn config(controller: ControllerSpec, episodes: usize, out: &std::path::Path) -> BenchmarkConfig {
    let source = DataSource::Synth(CrowdConfig { seed: 4, ..CrowdConfig::default() });
    let mut cfg = BenchmarkConfig::new(source, controller, episodes, 11);
    cfg.workers = Some(2);
    cfg.out = Some(out.to_path_buf());
    cfg
}

#[test]
fn nearest_pedestrians_are_sorted_by_distance() {
    let scene = SceneSpec::new(1000.0, 1000.0, 25.0).unwrap();
    let robot = AgentObservation::new(PixelPoint::new(0.0, 0.0), (0.0, 0.0), 15.0);
    let peds: Vec<_> =
        [10.0, 400.0, 20.0, 30.0, 500.0].iter().map(|&d| AgentObservation::new(PixelPoint::new(d, 0.0), (0.0, 0.0), 15.0)).collect();
    let e = encode_joint_state(&robot, PixelPoint::new(100.0, 100.0), &peds, &scene);
    let got: Vec<f64> = (0..3).map(|k| e.pedestrian_block(k)[0] * 1000.0).collect();
    assert_eq!(got, vec![10.0, 20.0, 30.0]);
}

#[test]
fn perfect_prediction_benchmark_is_clean_and_auditable() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_benchmark(&config(ControllerSpec::DStarPerfect, 100, dir.path())).unwrap();
    let row = &run.table.rows[0];
    assert_eq!((row.sr, row.sp, row.mrp), (0, 0, 0));
    assert_eq!(row.episodes, 100);
    assert_eq!(audit_results(dir.path()).unwrap(), *row);
    assert_eq!(ResultsTable::load(dir.path().join("results.csv")).unwrap(), run.table);
    assert!(fs::read_to_string(dir.path().join("results.md")).unwrap().contains("dstar+perfect"));
}

#[test]
fn paired_controllers_share_the_episode_list() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_benchmark(&config(ControllerSpec::DStarPerfect, 20, a.path())).unwrap();
    let rb = run_benchmark(&config(ControllerSpec::DStarBaseline { radius: 1 }, 20, b.path())).unwrap();
    assert_eq!(ra.table.metadata["episode_hash"], rb.table.metadata["episode_hash"]);
    assert_eq!(fs::read(a.path().join("episodes.csv")).unwrap(), fs::read(b.path().join("episodes.csv")).unwrap());
    let mut merged = ra.table.clone();
    merged.merge(&rb.table).unwrap();
    assert_eq!(merged.rows.len(), 2);
}

#[test]
fn tampered_results_fail_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    run_benchmark(&config(ControllerSpec::DStarBaseline { radius: 1 }, 10, dir.path())).unwrap();
    let path = dir.path().join("results.csv");
    let mut table = ResultsTable::load(&path).unwrap();
    table.rows[0].stall_ticks += 1;
    fs::write(&path, table.to_csv().unwrap()).unwrap();
    assert!(audit_results(dir.path()).is_err());
}

#[test]
fn missing_model_is_reported_before_any_episode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(ControllerSpec::DStarForest { path: dir.path().join("nope.bin") }, 5, &dir.path().join("out"));
    assert!(run_benchmark(&cfg).is_err());
    assert!(!dir.path().join("out").join("logs").exists());
}

#[test]
fn rendering_one_image_per_tick_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(ControllerSpec::DStarPerfect, 1, &dir.path().join("run"));
    let run = run_benchmark(&cfg).unwrap();
    let store = cfg.source.load().unwrap();
    let grid = GridSpec::new(store.scene(), cfg.cols, cfg.rows).unwrap();
    let log = &run.logs[0];
    let first = render_frames(log, &store, &grid, dir.path().join("a"), ImageFormat::Ppm).unwrap();
    let second = render_frames(log, &store, &grid, dir.path().join("b"), ImageFormat::Ppm).unwrap();
    assert_eq!(first.len(), log.ticks.len());
    for (x, y) in first.iter().zip(&second) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let empty = EpisodeLog { ticks: vec![], ..parse_event_log(&log.to_csv()).unwrap() };
    assert!(render_frames(&empty, &store, &grid, dir.path().join("c"), ImageFormat::Ppm).unwrap().is_empty());
}

#[test]
fn oracle_and_persistence_nmse() {
    let store = common::crowd(6);
    let oracle = eval_predictor(&PredictorSpec::Oracle, &store, 1).unwrap();
    assert_eq!((oracle.train, oracle.validation, oracle.test), (0.0, 0.0, 0.0));
    let persistence = eval_predictor(&PredictorSpec::Persistence, &store, 1).unwrap();
    assert!(persistence.test > 0.0);
    let tiny = crowdnav::dataset::TrajectoryStore::empty(*store.scene());
    assert!(eval_predictor(&PredictorSpec::Persistence, &tiny, 1).is_err());
}
