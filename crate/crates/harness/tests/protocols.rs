use reveal_core::grid::{decode_runs, Grid2D};
use reveal_core::model::{save_params, Ablation, ArchConfig, ModelParams, TrainConfig};
use reveal_core::planner::{CemConfig, Policy};
use reveal_core::rng::Rng;
use reveal_core::space::{ActionSpace, PlantKind};
use reveal_harness::config::{ApDataset, ApRow, ExperimentConfig, Setting};
use reveal_harness::experiments::*;

fn small_model(kind: PlantKind, ablation: Ablation, seed: u64) -> ModelParams {
    let arch = ArchConfig::new(&ActionSpace::for_kind(kind), ablation);
    let arch = arch.clone().with_widths(vec![4; arch.levels()], 2);
    ModelParams::init(&arch, &mut Rng::new(seed)).unwrap()
}

fn models() -> Models {
    let mut m = Models::new();
    for kind in [PlantKind::Vine, PlantKind::Dracaena] {
        m.insert(kind, false, small_model(kind, Ablation::Full, 1)).unwrap();
        m.insert(kind, true, small_model(kind, Ablation::Blind, 2)).unwrap();
    }
    m
}

fn quick() -> ExperimentConfig {
    ExperimentConfig {
        cem: CemConfig {
            samples: 24,
            iterations: 2,
            ..CemConfig::default()
        },
        resamples: 300,
        ..ExperimentConfig::default()
    }
}

#[test]
fn single_action_is_interleaved_paired_and_reproducible() {
    let cfg = quick();
    let m = models();
    let a = run_single_action(&cfg, Setting::VineBase, &m, 5).unwrap();
    assert_eq!(a.ppg.len(), 20);
    assert_eq!(a.records.len(), 40);
    for ci in [a.ppg_ci, a.random_ci, a.diff_ci] {
        assert!(ci.low <= ci.mean && ci.mean <= ci.high);
    }
    // Order is shuffled, not blocked by method.
    let first: Vec<_> = a.records[..20].iter().map(|r| r.method).collect();
    assert!(first.contains(&Method::Ppg) && first.contains(&Method::RestrictedRandom));
    let b = run_single_action(&cfg, Setting::VineBase, &m, 5).unwrap();
    assert_eq!(a.trials_table().unwrap(), b.trials_table().unwrap());
    assert_eq!(a.summary_table().unwrap().to_csv().unwrap(), b.summary_table().unwrap().to_csv().unwrap());
    // Method order depends only on the seed, not on the models.
    let mut other = Models::new();
    other.insert(PlantKind::Vine, false, small_model(PlantKind::Vine, Ablation::Full, 77)).unwrap();
    let c = run_single_action(&cfg, Setting::VineBase, &other, 5).unwrap();
    let order = |r: &SingleActionResult| r.records.iter().map(|t| (t.trial, t.method)).collect::<Vec<_>>();
    assert_eq!(order(&a), order(&c));
    // The restricted-random arm does not use the model at all.
    assert_eq!(a.random, c.random);
}

#[test]
fn single_action_enforces_minimum_trials() {
    let cfg = ExperimentConfig {
        trials: Some(19),
        ..quick()
    };
    assert!(run_single_action(&cfg, Setting::VineBase, &models(), 0).is_err());
}

#[test]
fn long_horizon_matrix_is_monotone_and_complete() {
    let cfg = ExperimentConfig {
        trials: Some(2),
        steps: 3,
        ..quick()
    };
    let r = run_long_horizon(&cfg, &models(), 3).unwrap();
    assert_eq!(r.runs.len(), 4 * 4 * 2);
    assert_eq!(r.curves.rows.len(), 4 * 4 * 4);
    for run in &r.runs {
        let h = run.trace.header.height;
        let w = run.trace.header.width;
        let mut prev = decode_runs(h, w, &run.trace.header.initial).unwrap();
        for s in &run.trace.steps {
            let cur = decode_runs(h, w, &s.coverage).unwrap();
            assert!(prev.iter().zip(cur.iter()).all(|(&a, &b)| !a || b));
            prev = cur;
        }
        let c = run.trace.curve();
        assert!(c.windows(2).all(|w| w[0] <= w[1]));
    }
    // Paired plants: every policy sees the same initial coverage per trial.
    for s in Setting::LONG_HORIZON {
        let init: Vec<usize> = r
            .runs
            .iter()
            .filter(|x| x.setting == s && x.trial == 0)
            .map(|x| x.trace.header.initial_area)
            .collect();
        assert!(init.windows(2).all(|w| w[0] == w[1]));
    }
    let plot = r.plot(Setting::VineBase, "t").render();
    assert_eq!(plot.matches("<polyline").count(), 4);
}

#[test]
fn long_horizon_output_is_byte_identical_across_thread_counts() {
    let cfg = ExperimentConfig {
        trials: Some(2),
        steps: 2,
        settings: vec![Setting::VineBase, Setting::DracaenaBase],
        ..quick()
    };
    let m = models();
    let render = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let r = pool.install(|| run_long_horizon(&cfg, &m, 9).unwrap());
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path(), "long_horizon.csv", "x").unwrap();
        let mut files: Vec<(String, Vec<u8>)> = walk(dir.path());
        files.sort();
        files
    };
    let one = render(1);
    assert!(one.len() > 10);
    assert_eq!(one, render(3));
}

fn walk(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push((p.file_name().unwrap().to_string_lossy().into(), std::fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn targeted_counts_only_cells_inside_the_target() {
    let cfg = ExperimentConfig {
        trials: Some(2),
        steps: 3,
        ..quick()
    };
    let target = Grid2D::from_fn(80, 80, |r, c| (25..45).contains(&r) && (30..50).contains(&c));
    let r = run_targeted(&cfg, &target, &models(), 1).unwrap();
    assert_eq!(r.runs.len(), 3 * 2);
    for run in &r.runs {
        assert!(run.trace.cumulative() <= 400);
        for s in &run.trace.steps {
            let cov = decode_runs(80, 80, &s.coverage).unwrap();
            let outside_missing = (0..80).any(|i| (0..80).any(|j| !target[(i, j)] && !cov[(i, j)]));
            assert!(!outside_missing);
        }
    }
    let empty = Grid2D::filled(80, 80, false);
    assert!(matches!(
        run_targeted(&cfg, &empty, &models(), 1),
        Err(reveal_harness::HarnessError::Core(reveal_core::Error::DegenerateTarget))
    ));
    let tiling = ExperimentConfig {
        policies: Some(vec![Policy::Tiling]),
        ..cfg.clone()
    };
    assert!(run_targeted(&tiling, &target, &models(), 1).is_err());
}

#[test]
fn growth_does_not_modify_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.ckpt");
    save_params(&small_model(PlantKind::Dracaena, Ablation::Full, 4), &path).unwrap();
    let before = std::fs::read(&path).unwrap();
    let mut cfg = quick();
    cfg.checkpoints.dracaena = Some(path.clone());
    let r = run_growth(&cfg, 2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert_eq!(r.checkpoint_sha256, sha256_file(&path).unwrap());
    assert_eq!(r.single.setting, Setting::GrownDracaena);
    // Both methods see the same trials.
    let mut trials: Vec<_> = r.single.records.iter().map(|t| t.trial).collect();
    trials.sort();
    assert!(trials.chunks(2).all(|c| c[0] == c[1]));
}

#[test]
fn offline_table_has_rows_in_range_and_reproduces() {
    let cfg = ExperimentConfig {
        dataset: reveal_harness::config::DatasetSection {
            samples: 40,
            ..Default::default()
        },
        offline: reveal_harness::config::OfflineSection {
            datasets: vec![ApDataset::VinesAll],
            rows: vec![ApRow::Full, ApRow::Blind],
        },
        train: TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        },
        ..quick()
    };
    let a = run_offline_ap(&cfg, 3).unwrap();
    assert_eq!(a.table.header, vec!["model", "vines-all"]);
    assert_eq!(a.table.rows[0][0], "full");
    for r in &a.runs {
        assert!((0.0..=1.0).contains(&r.test_ap));
    }
    let b = run_offline_ap(&cfg, 3).unwrap();
    assert_eq!(a.table.to_csv().unwrap(), b.table.to_csv().unwrap());
    let stats = reveal_by_direction(&a.dataset(ApDataset::VinesAll).unwrap().samples.iter().collect::<Vec<_>>(), &Setting::VineBase.space());
    assert_eq!(stats.count.iter().sum::<usize>(), 40);
}

#[test]
fn models_reject_mismatched_slots() {
    let mut m = Models::new();
    assert!(m.insert(PlantKind::Vine, true, small_model(PlantKind::Vine, Ablation::Full, 0)).is_err());
    assert!(m.insert(PlantKind::Dracaena, false, small_model(PlantKind::Vine, Ablation::Full, 0)).is_err());
    assert!(m.get(PlantKind::Vine, false).is_err());
}
