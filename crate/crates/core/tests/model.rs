use rand::Rng as _;
use reveal_core::dataset::{encode_action, query_sample, Sample};
use reveal_core::grid::Grid2D;
use reveal_core::model::*;
use reveal_core::rng::Rng;
use reveal_core::sim::{render, sim_init, Scenario, SimConfig};
use reveal_core::space::{ActionSpace, ActionSpec};

const SIDE: usize = 8;

fn tiny_arch(ablation: Ablation, out_channels: usize) -> ArchConfig {
    ArchConfig {
        ablation,
        input_size: SIDE,
        encoder_channels: vec![4, 5],
        encoder_strides: vec![2, 1],
        action_dim: 10,
        action_channels: 3,
        out_channels,
    }
}

fn tiny_sample(rng: &mut Rng, aux: bool) -> Sample {
    let space = ActionSpace::vine();
    let action = ActionSpec {
        x: 21.0,
        y: 21.0,
        dir_index: rng.gen_range(0..7),
        z_index: 0,
        length: rng.gen_range(5.0..15.0),
    };
    let valid = Grid2D::from_fn(SIDE, SIDE, |_, _| rng.gen_bool(0.85));
    let label = Grid2D::from_fn(SIDE, SIDE, |i, j| valid[(i, j)] && rng.gen_bool(0.4));
    Sample {
        kind: space.kind,
        action,
        color: Grid2D::from_fn(SIDE, SIDE, |_, _| [0, 1, 2].map(|_| rng.gen_range(0.0..255.0))),
        height: Grid2D::from_fn(SIDE, SIDE, |_, _| rng.gen_range(0.0..20.0)),
        valid,
        action_feat: encode_action(&space, &action),
        label,
        aux_height_drop: aux.then(|| Grid2D::from_fn(SIDE, SIDE, |_, _| rng.gen_range(0.0..8.0))),
    }
}

/// Random small biases keep pre-activations away from the rectifier kink.
fn jitter_biases(p: &mut ModelParams<f64>, rng: &mut Rng) {
    let names: Vec<String> = p.arch.param_shapes().into_iter().map(|s| s.0).collect();
    for (t, name) in p.tensors.iter_mut().zip(names) {
        if name.ends_with(".bias") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
}

fn grad_check(ablation: Ablation, out_channels: usize, seed: u64) {
    let mut rng = Rng::new(seed);
    let arch = tiny_arch(ablation, out_channels);
    let mut p = ModelParams::<f64>::init(&arch, &mut rng).unwrap();
    jitter_biases(&mut p, &mut rng);
    let samples: Vec<Sample> = (0..3).map(|_| tiny_sample(&mut rng, out_channels == 2)).collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let report = check_gradients(&p, &refs, &LossConfig::default(), 1e-3).unwrap();
    let total: usize = report.iter().map(|t| t.checked + t.kinked).sum();
    let kinked: usize = report.iter().map(|t| t.kinked).sum();
    assert!(kinked * 50 <= total, "{kinked} of {total} entries straddle a kink");
    for t in &report {
        assert!(t.rel_error < 1e-3, "{ablation:?} {}: relative error {:e}", t.name, t.rel_error);
    }
}

#[test]
fn gradients_match_finite_differences_full() {
    grad_check(Ablation::Full, 1, 1);
}

#[test]
fn gradients_match_finite_differences_aux_head() {
    grad_check(Ablation::Full, 2, 2);
}

#[test]
fn gradients_match_finite_differences_ablations() {
    for (i, a) in [Ablation::NoAction, Ablation::NoRgb, Ablation::NoHeight, Ablation::Blind]
        .into_iter()
        .enumerate()
    {
        grad_check(a, 1, 10 + i as u64);
    }
}

#[test]
fn duplicated_batch_has_same_gradient() {
    let mut rng = Rng::new(3);
    let p = ModelParams::<f64>::init(&tiny_arch(Ablation::Full, 1), &mut rng).unwrap();
    let s = tiny_sample(&mut rng, false);
    let cfg = LossConfig::default();
    let (l1, g1) = loss_and_grad(&p, &[&s], &cfg).unwrap();
    let (l2, g2) = loss_and_grad(&p, &[&s, &s], &cfg).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    for (a, b) in g1.iter().zip(&g2) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn saturated_batch_has_vanishing_gradient() {
    let mut rng = Rng::new(4);
    let arch = tiny_arch(Ablation::Full, 1);
    let mut p = ModelParams::<f64>::init(&arch, &mut rng).unwrap();
    let last = p.tensors.len() - 2;
    p.tensors[last].data_mut().fill(0.0);
    p.tensors[last + 1].data_mut().fill(-60.0);
    let mut s = tiny_sample(&mut rng, false);
    s.label = Grid2D::filled(SIDE, SIDE, false);
    let (loss, g) = loss_and_grad(&p, &[&s], &LossConfig::default()).unwrap();
    assert!(loss < 1e-20);
    assert!(g.iter().flat_map(|t| t.data()).all(|v| v.abs() < 1e-20));
}

#[test]
fn loss_matches_per_cell_recomputation() {
    let mut rng = Rng::new(5);
    let arch = tiny_arch(Ablation::Full, 2);
    let p = ModelParams::<f64>::init(&arch, &mut rng).unwrap();
    let samples: Vec<Sample> = (0..2).map(|_| tiny_sample(&mut rng, true)).collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let b = Batch::<f64>::new(&arch, &refs).unwrap();
    let f = forward(&p, &b, false).unwrap();
    let got = batch_loss(&f.logits, f.aux.as_deref(), &b, &LossConfig::default()).unwrap().loss;
    let aux = f.aux.unwrap();
    let mut want = 0.0;
    for (si, s) in samples.iter().enumerate() {
        let mut sum = 0.0;
        let mut n = 0.0;
        for k in 0..SIDE * SIDE {
            if !s.valid.data()[k] {
                continue;
            }
            n += 1.0;
            let z = f.logits[si * 64 + k];
            let y = if s.label.data()[k] { 1.0 } else { 0.0 };
            let prob = 1.0 / (1.0 + (-z).exp());
            sum += -(y * prob.ln() + (1.0 - y) * (1.0 - prob).ln());
            let r: f64 = aux[si * 64 + k] - s.aux_height_drop.as_ref().unwrap().data()[k] as f64 / 50.0;
            sum += if r.abs() <= 0.1 { 0.5 * r * r } else { 0.1 * (r.abs() - 0.05) };
        }
        want += sum / n / 2.0;
    }
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

#[test]
fn zero_logits_give_ln2() {
    let mut rng = Rng::new(6);
    let arch = tiny_arch(Ablation::Full, 1);
    let s = tiny_sample(&mut rng, false);
    let b = Batch::<f64>::new(&arch, &[&s]).unwrap();
    let loss = batch_loss(&vec![0.0; 64], None, &b, &LossConfig::default()).unwrap().loss;
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn sample_without_valid_cells_is_rejected() {
    let mut rng = Rng::new(7);
    let arch = tiny_arch(Ablation::Full, 1);
    let mut s = tiny_sample(&mut rng, false);
    s.valid = Grid2D::filled(SIDE, SIDE, false);
    let b = Batch::<f64>::new(&arch, &[&s]).unwrap();
    assert!(batch_loss(&vec![0.0; 64], None, &b, &LossConfig::default()).is_err());
}

#[test]
fn invalid_cells_do_not_affect_loss_or_gradients() {
    let mut rng = Rng::new(8);
    let arch = tiny_arch(Ablation::Full, 2);
    let p = ModelParams::<f64>::init(&arch, &mut rng).unwrap();
    let s = tiny_sample(&mut rng, true);
    let mut t = s.clone();
    for k in 0..SIDE * SIDE {
        if !s.valid.data()[k] {
            t.color.data_mut()[k] = [255.0, 0.0, 17.0];
            t.height.data_mut()[k] = 99.0;
            t.label.data_mut()[k] = !t.label.data()[k];
            t.aux_height_drop.as_mut().unwrap().data_mut()[k] = 33.0;
        }
    }
    let cfg = LossConfig::default();
    let (la, ga) = loss_and_grad(&p, &[&s], &cfg).unwrap();
    let (lb, gb) = loss_and_grad(&p, &[&t], &cfg).unwrap();
    assert_eq!(la, lb);
    assert_eq!(ga, gb);
}

fn perturbed_train_step(p: &mut ModelParams<f64>, rng: &mut Rng) {
    let samples: Vec<Sample> = (0..4).map(|_| tiny_sample(rng, false)).collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let mut opt = Adam::new(&p.tensors, AdamConfig::default());
    for _ in 0..3 {
        let (_, g) = loss_and_grad(p, &refs, &LossConfig::default()).unwrap();
        opt.step(&mut p.tensors, &g, 1e-2);
    }
}

#[test]
fn no_action_model_ignores_action() {
    let mut rng = Rng::new(9);
    let mut p = ModelParams::<f64>::init(&tiny_arch(Ablation::NoAction, 1), &mut rng).unwrap();
    for trained in [false, true] {
        if trained {
            perturbed_train_step(&mut p, &mut rng);
        }
        let a = tiny_sample(&mut rng, false);
        let mut b = a.clone();
        b.action.dir_index = (a.action.dir_index + 3) % 7;
        b.action_feat = encode_action(&ActionSpace::vine(), &b.action);
        let fa = forward(&p, &Batch::new(&p.arch, &[&a]).unwrap(), false).unwrap();
        let fb = forward(&p, &Batch::new(&p.arch, &[&b]).unwrap(), false).unwrap();
        assert_eq!(fa.logits, fb.logits);
    }
}

#[test]
fn blind_model_ignores_imagery() {
    let mut rng = Rng::new(10);
    let mut p = ModelParams::<f64>::init(&tiny_arch(Ablation::Blind, 1), &mut rng).unwrap();
    assert_eq!(p.tensors[0].len(), 0);
    for trained in [false, true] {
        if trained {
            perturbed_train_step(&mut p, &mut rng);
        }
        let a = tiny_sample(&mut rng, false);
        let mut b = tiny_sample(&mut rng, false);
        b.action = a.action;
        b.action_feat = a.action_feat.clone();
        let fa = forward(&p, &Batch::new(&p.arch, &[&a]).unwrap(), false).unwrap();
        let fb = forward(&p, &Batch::new(&p.arch, &[&b]).unwrap(), false).unwrap();
        assert_eq!(fa.logits, fb.logits);
    }
}

#[test]
fn ablations_remove_inputs_structurally() {
    let space = ActionSpace::vine();
    let counts: Vec<usize> = Ablation::ALL.iter().map(|&a| ArchConfig::new(&space, a).input_channels()).collect();
    assert_eq!(counts, vec![4, 4, 1, 3, 0]);
    let full = ModelParams::<f32>::init(&ArchConfig::new(&space, Ablation::Full), &mut Rng::new(0)).unwrap();
    let none = ModelParams::<f32>::init(&ArchConfig::new(&space, Ablation::NoAction), &mut Rng::new(0)).unwrap();
    assert_eq!(full.tensors.len(), none.tensors.len() + 6);
}

#[test]
fn mismatched_sample_is_a_configuration_error() {
    let mut rng = Rng::new(11);
    let arch = tiny_arch(Ablation::Full, 1);
    let mut s = tiny_sample(&mut rng, false);
    s.action_feat.z_onehot.push(0.0);
    assert!(Batch::<f32>::new(&arch, &[&s]).is_err());
}

#[test]
fn full_size_forward_keeps_crop_shape() {
    let space = ActionSpace::dracaena();
    let arch = ArchConfig::new(&space, Ablation::Full);
    let p = ModelParams::<f32>::init(&arch, &mut Rng::new(1)).unwrap();
    let cfg = SimConfig::dracaena(Scenario::Base);
    let obs = render(&sim_init(&cfg, &mut Rng::new(2)).unwrap());
    let a = space.all_actions()[100];
    let s = query_sample(&space, &obs, &a);
    let f = forward(&p, &Batch::new(&arch, &[&s]).unwrap(), false).unwrap();
    assert_eq!(f.logits.len(), 48 * 48);
    assert_eq!(f.aux.unwrap().len(), 48 * 48);
}

#[test]
fn checkpoint_round_trip() {
    let space = ActionSpace::vine();
    for ab in Ablation::ALL {
        let p = ModelParams::<f32>::init(&ArchConfig::new(&space, ab), &mut Rng::new(3)).unwrap();
        let bytes = encode_params(&p);
        assert_eq!(&bytes[..4], b"PPGM");
        assert_eq!(decode_params(&bytes).unwrap(), p);
    }
    let mut bytes = encode_params(&ModelParams::<f32>::init(&tiny_arch(Ablation::Full, 1), &mut Rng::new(4)).unwrap());
    bytes.truncate(bytes.len() - 1);
    assert!(decode_params(&bytes).is_err());
}

#[test]
fn predict_reveal_pastes_at_action_start() {
    let space = ActionSpace::vine();
    let arch = ArchConfig::new(&space, Ablation::Full);
    let mut p = ModelParams::<f32>::init(&arch, &mut Rng::new(5)).unwrap();
    // Force a single hot output cell at crop (24, 24) through the last bias.
    let last = p.tensors.len() - 2;
    p.tensors[last].data_mut().fill(0.0);
    p.tensors[last + 1].data_mut().fill(-5.0);
    let cfg = SimConfig::vine(Scenario::Base);
    let obs = render(&sim_init(&cfg, &mut Rng::new(6)).unwrap());
    let a = ActionSpec {
        x: 31.0,
        y: 41.0,
        dir_index: 0,
        z_index: 0,
        length: 15.0,
    };
    let g1 = predict_reveal(&p, &obs, &a, &space).unwrap();
    let g2 = predict_reveal(&p, &obs, &a, &space).unwrap();
    assert_eq!(g1, g2);
    let (r0, c0) = (41 - 24, 31 - 24);
    for r in 0..80 {
        for c in 0..80 {
            let inside = (r0..r0 + 48).contains(&r) && (c0..c0 + 48).contains(&c);
            let v = g1[(r as usize, c as usize)];
            if inside && obs.valid[(r as usize, c as usize)] {
                assert!(v > 0.0 && v < 1.0);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }
    let bad = ActionSpec { x: 22.0, ..a };
    assert!(predict_reveal(&p, &obs, &bad, &space).is_err());
}

/// Area under the step PR curve from explicit cutoffs.
fn brute_ap(scores: &[f32], labels: &[bool]) -> f64 {
    let n = scores.len();
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    // rank(i) = number of items ahead of or equal to i in the tie-broken order.
    let rank = |i: usize| (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i)).count();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 1..=n {
        let top: Vec<usize> = (0..n).filter(|&i| rank(i) <= k).collect();
        let tp = top.iter().filter(|&&i| labels[i]).count() as f64;
        let recall = tp / pos;
        ap += (recall - prev_recall) * tp / k as f64;
        prev_recall = recall;
    }
    ap
}

#[test]
fn average_precision_matches_brute_force() {
    let mut rng = Rng::new(12);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.gen_range(1..=12);
        let levels = rng.gen_range(1..=6);
        let scores: Vec<f32> = (0..n).map(|_| rng.gen_range(0..levels) as f32 / levels as f32).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        if !labels.contains(&true) {
            continue;
        }
        let got = average_precision(&scores, &labels).unwrap();
        assert!((got - brute_ap(&scores, &labels)).abs() < 1e-12, "{scores:?} {labels:?}");
        let squashed: Vec<f32> = scores.iter().map(|s| s * 3.0 + 1.0).collect();
        assert_eq!(average_precision(&squashed, &labels).unwrap(), got);
        checked += 1;
    }
    let ap = average_precision(&[0.9, 0.8, 0.1], &[true, false, true]).unwrap();
    assert!((ap - 0.8333333333333334).abs() < 1e-9);
}
