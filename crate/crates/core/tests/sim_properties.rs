use rand::Rng as _;
use reveal_core::labels::{visible_background, LabelConfig};
use reveal_core::rng::Rng;
use reveal_core::sim::{apply_push, render, sim_init, truth_reveal, PlantState, Scenario, SimConfig};
use reveal_core::space::{angle_distance, clip_action, ActionSpace, PlantKind};

fn random_state(cfg: &SimConfig, space: &ActionSpace, rng: &mut Rng, warmup: usize) -> PlantState {
    let starts = space.start_centers();
    let mut s = sim_init(cfg, rng).unwrap();
    for _ in 0..warmup {
        let (x, y) = starts[rng.gen_range(0..starts.len())];
        let a = clip_action(space, x, y, rng.gen_range(0..space.directions.len()), rng.gen_range(0..space.z_levels.len())).unwrap();
        s = apply_push(&s, &a, space, rng).unwrap();
    }
    s
}

#[test]
fn horizontal_pushes_reveal_most_on_vines() {
    let cfg = SimConfig::vine(Scenario::Base);
    let space = ActionSpace::vine();
    let starts = space.start_centers();
    let mut rng = Rng::new(31);
    let mut sums = [0.0; 7];
    let mut counts = vec![0usize; 7];
    for i in 0..280 {
        let state = random_state(&cfg, &space, &mut rng.fork(i / 10), (i % 10) as usize);
        let (x, y) = starts[rng.gen_range(0..starts.len())];
        let dir = (i % 7) as usize;
        let a = clip_action(&space, x, y, dir, 0).unwrap();
        let next = apply_push(&state, &a, &space, &mut rng).unwrap();
        sums[dir] += truth_reveal(&state, &next).unwrap().area() as f64;
        counts[dir] += 1;
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    eprintln!("vine mean reveal per direction {means:?}");
    let horizontal = means[0].min(means[6]);
    for (d, m) in means.iter().enumerate().skip(1).take(5) {
        assert!(horizontal > *m, "direction {d}: {m} vs horizontal {horizontal}");
    }
    assert!(means[0].max(means[6]) > means[3]);
}

#[test]
fn tangential_pushes_beat_random_on_dracaena() {
    let cfg = SimConfig::dracaena(Scenario::Base);
    let space = ActionSpace::dracaena();
    let starts = space.start_centers();
    let mut rng = Rng::new(32);
    let (mut tangential, mut random) = (0.0, 0.0);
    let n = 500;
    for i in 0..n {
        let state = random_state(&cfg, &space, &mut rng.fork(i / 10), (i % 10) as usize);
        let PlantState::Dracaena(d) = &state else { unreachable!() };
        let (x, y) = starts[rng.gen_range(0..starts.len())];
        let z = rng.gen_range(0..3);
        // counterclockwise tangent at the start, viewer frame
        let radial = (-(y - d.center.1)).atan2(x - d.center.0);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let want = radial + sign * std::f64::consts::FRAC_PI_2;
        let dir = (0..space.directions.len())
            .min_by(|&a, &b| angle_distance(space.directions[a], want).total_cmp(&angle_distance(space.directions[b], want)))
            .unwrap();
        let t = clip_action(&space, x, y, dir, z).unwrap();
        let r = clip_action(&space, x, y, rng.gen_range(0..8), z).unwrap();
        let mut r1 = rng.fork(1000 + i);
        let mut r2 = rng.fork(1000 + i);
        tangential += truth_reveal(&state, &apply_push(&state, &t, &space, &mut r1).unwrap()).unwrap().area() as f64;
        random += truth_reveal(&state, &apply_push(&state, &r, &space, &mut r2).unwrap()).unwrap().area() as f64;
    }
    eprintln!("dracaena mean reveal tangential {} random {}", tangential / n as f64, random / n as f64);
    assert!(tangential > random);
}

#[test]
fn reveals_only_previously_occluded_cells() {
    let labels = LabelConfig::default();
    for kind in [PlantKind::Vine, PlantKind::Dracaena] {
        let cfg = SimConfig::for_kind(kind, Scenario::Base);
        let space = ActionSpace::for_kind(kind);
        let mut rng = Rng::new(33);
        let mut state = sim_init(&cfg, &mut rng).unwrap();
        let starts = space.start_centers();
        for _ in 0..30 {
            let (x, y) = starts[rng.gen_range(0..starts.len())];
            let a = clip_action(&space, x, y, rng.gen_range(0..space.directions.len()), rng.gen_range(0..space.z_levels.len())).unwrap();
            let next = apply_push(&state, &a, &space, &mut rng).unwrap();
            let bg = visible_background(&render(&state), kind, &labels);
            let mask = truth_reveal(&state, &next).unwrap();
            for (m, b) in mask.revealed.iter().zip(bg.iter()) {
                assert!(!(*m && *b), "{kind:?}: revealed cell was already visible");
            }
            state = next;
        }
    }
}

#[test]
fn push_is_deterministic_across_runs() {
    for kind in [PlantKind::Vine, PlantKind::Dracaena] {
        let cfg = SimConfig::for_kind(kind, Scenario::Base);
        let space = ActionSpace::for_kind(kind);
        let run = || {
            let mut rng = Rng::new(5);
            random_state(&cfg, &space, &mut rng, 8)
        };
        assert_eq!(run(), run());
    }
}
