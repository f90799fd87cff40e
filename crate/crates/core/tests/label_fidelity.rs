use rand::Rng as _;
use reveal_core::labels::{extract_dracaena, extract_vine, iou_counts, LabelConfig, VineRule};
use reveal_core::rng::Rng;
use reveal_core::sim::{apply_push, render, sim_init, truth_reveal, Scenario, SimConfig};
use reveal_core::space::{clip_action, ActionSpace, PlantKind};

fn pooled_iou(kind: PlantKind, pushes: usize, seed: u64) -> f64 {
    let cfg = SimConfig::for_kind(kind, Scenario::Base);
    let labels = LabelConfig::default();
    let space = ActionSpace::for_kind(kind);
    let starts = space.start_centers();
    let mut rng = Rng::new(seed);
    let (mut inter, mut union) = (0, 0);
    let mut state = sim_init(&cfg, &mut rng).unwrap();
    for i in 0..pushes {
        if i % 10 == 0 {
            state = sim_init(&cfg, &mut rng).unwrap();
        }
        let (x, y) = starts[rng.gen_range(0..starts.len())];
        let dir = rng.gen_range(0..space.directions.len());
        let z = rng.gen_range(0..space.z_levels.len());
        let a = clip_action(&space, x, y, dir, z).unwrap();
        let next = apply_push(&state, &a, &space, &mut rng).unwrap();
        let (b, af) = (render(&state), render(&next));
        let mask = match kind {
            PlantKind::Vine => extract_vine(&b, &af, VineRule::BoardColor, &labels).unwrap(),
            PlantKind::Dracaena => extract_dracaena(&b, &af, labels.tau, &labels).unwrap(),
        };
        let truth = truth_reveal(&state, &next).unwrap();
        let (i, u) = iou_counts(&mask.revealed, &truth.revealed);
        inter += i;
        union += u;
        state = next;
    }
    inter as f64 / union as f64
}

#[test]
fn vine_color_labels_track_the_oracle() {
    let iou = pooled_iou(PlantKind::Vine, 120, 1);
    eprintln!("vine label IoU {iou:.3}");
    assert!(iou >= 0.9, "vine IoU {iou}");
}

#[test]
fn dracaena_aligned_labels_track_the_oracle() {
    let iou = pooled_iou(PlantKind::Dracaena, 120, 2);
    eprintln!("dracaena label IoU {iou:.3}");
    assert!(iou >= 0.8, "dracaena IoU {iou}");
}
