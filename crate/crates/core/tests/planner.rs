use rand::Rng as _;
use reveal_core::grid::Grid2D;
use reveal_core::model::{predict_reveal_batch, Ablation, ArchConfig, ModelParams};
use reveal_core::planner::*;
use reveal_core::rng::Rng;
use reveal_core::sim::{render, sim_init, Scenario, SimConfig};
use reveal_core::space::{ActionSpace, ActionSpec, CoverageMap, PlantKind, Rect};

/// 5 x 3 starts and 3 directions: 45 actions, small enough to enumerate.
fn small_space() -> ActionSpace {
    ActionSpace::new(
        PlantKind::Vine,
        12,
        12,
        Rect::new(1.0, 1.0, 11.0, 7.0),
        None,
        2.0,
        vec![0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI],
        vec![0.0],
        2.0,
    )
    .unwrap()
}

fn random_field(space: &ActionSpace, seed: u64) -> impl Fn(&ActionSpec) -> Grid2D<f32> + Sync + 'static {
    let space = space.clone();
    move |a: &ActionSpec| {
        let (iy, ix, d, _) = space.action_key(a);
        let mut rng = Rng::new(seed).substream(&format!("{iy}/{ix}/{d}"));
        Grid2D::from_fn(12, 12, |_, _| rng.gen_range(0.0f32..1.0))
    }
}

#[test]
fn cem_matches_exhaustive_search_on_small_space() {
    let space = small_space();
    let all = space.all_actions();
    assert!(all.len() <= 50);
    let obs = render(&sim_init(&SimConfig::vine(Scenario::Base), &mut Rng::new(0)).unwrap());
    for seed in 0..8u64 {
        let field = random_field(&space, seed);
        let mut cov_rng = Rng::new(100 + seed);
        let cov = CoverageMap::from_mask(Grid2D::from_fn(12, 12, |_, _| cov_rng.gen_bool(0.3)));
        let exhaustive = all
            .iter()
            .map(|a| (objective(&field(a), &cov).unwrap(), *a))
            .fold(None::<(f64, ActionSpec)>, |best, (s, a)| match best {
                Some((bs, _)) if bs >= s => best,
                _ => Some((s, a)),
            })
            .unwrap();
        let r = cem_select(&FnPredictor(field), &obs, &cov, &space, &CemConfig::default(), &mut Rng::new(seed))
            .unwrap();
        assert_eq!(r.action, exhaustive.1, "seed {seed}");
        assert!((r.score - exhaustive.0).abs() < 1e-9);
    }
}

fn small_model(space: &ActionSpace) -> ModelParams {
    let arch = ArchConfig::new(space, Ablation::Full).with_widths(vec![4, 4, 4, 4, 4], 2);
    ModelParams::init(&arch, &mut Rng::new(9)).unwrap()
}

#[test]
fn model_predictor_is_thread_count_invariant() {
    let space = ActionSpace::vine();
    let params = small_model(&space);
    let obs = render(&sim_init(&SimConfig::vine(Scenario::Base), &mut Rng::new(1)).unwrap());
    let actions: Vec<ActionSpec> = space.all_actions().into_iter().step_by(37).take(70).collect();
    assert!(actions.len() > 64);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| ModelPredictor(&params).predict(&obs, &actions, &space).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(2));
    assert_eq!(one, predict_reveal_batch(&params, &obs, &actions, &space).unwrap());
}

#[test]
fn cem_with_model_is_thread_count_invariant() {
    let space = ActionSpace::vine();
    let params = small_model(&space);
    let obs = render(&sim_init(&SimConfig::vine(Scenario::Base), &mut Rng::new(2)).unwrap());
    let cov = CoverageMap::empty(80, 80);
    let cfg = CemConfig {
        samples: 60,
        iterations: 2,
        ..CemConfig::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| cem_select(&ModelPredictor(&params), &obs, &cov, &space, &cfg, &mut Rng::new(3)).unwrap())
    };
    assert_eq!(run(1), run(2));
}

#[test]
fn handcrafted_episode_coverage_is_monotone() {
    let space = ActionSpace::dracaena();
    let state = sim_init(&SimConfig::dracaena(Scenario::Base), &mut Rng::new(6)).unwrap();
    let pred = HandcraftedPredictor {
        center: nominal_center(&space),
    };
    let cfg = EpisodeConfig {
        cem: CemConfig {
            samples: 50,
            ..CemConfig::default()
        },
        ..EpisodeConfig::default()
    };
    let tr = run_episode(&state, &space, Some(&pred), Policy::HandcraftedPpg, 4, None, &cfg, &Rng::new(1)).unwrap();
    assert_eq!(tr.steps.len(), 4);
    let curve = tr.curve();
    assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    for s in &tr.steps {
        assert!(s.predicted.is_some());
        assert!(s.new_area <= s.revealed_area);
        assert!(space.validate(&s.action).is_ok());
    }
}

#[test]
fn targeted_episode_only_counts_target_cells() {
    let space = ActionSpace::vine();
    let state = sim_init(&SimConfig::vine(Scenario::Base), &mut Rng::new(7)).unwrap();
    let target = Grid2D::from_fn(80, 80, |r, c| (30..50).contains(&r) && (30..50).contains(&c));
    let init = targeted_init(&target).unwrap();
    let cfg = EpisodeConfig {
        reveal_from: RevealFrom::Oracle,
        ..EpisodeConfig::default()
    };
    let tr = run_episode(&state, &space, None, Policy::Tiling, 5, Some(init), &cfg, &Rng::new(4)).unwrap();
    assert!(tr.cumulative() <= 400);
    assert_eq!(tr.header.initial_area, 80 * 80 - 400);
}
