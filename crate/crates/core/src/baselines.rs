//! Non-learned comparators: spaghetti-style reveal models and the tiling
//! policy.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI, TAU};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::{dist_to_segment, Capsule};
use crate::grid::Grid2D;
use crate::rng::Rng;
use crate::space::{clip_action, push_direction, ActionSpace, ActionSpec, PlantKind};

/// Effector radius assumed by the hand-crafted models, cm.
pub const CORRIDOR_RADIUS: f64 = 2.0;
/// Lattice spacing of tiling candidates on vines, cm.
pub const VINE_TILING_PITCH: f64 = 8.0;
/// Ring radii of tiling candidates around a Dracaena, cm.
pub const DRACAENA_RINGS: [f64; 2] = [13.0, 21.0];

fn corridor(a: &ActionSpec, space: &ActionSpace) -> Capsule {
    Capsule {
        a: (a.x, a.y),
        b: space.endpoint(a),
        radius: CORRIDOR_RADIUS,
    }
}

/// Boundary slack so exactly-on-edge cell centers survive angle round-off.
const EPS: f64 = 1e-9;

fn in_corridor(cap: &Capsule, p: (f64, f64)) -> bool {
    dist_to_segment(p, cap.a, cap.b) <= cap.radius + EPS
}

fn cell_center(r: usize, c: usize) -> (f64, f64) {
    (c as f64 + 0.5, r as f64 + 0.5)
}

/// Strands hang from the top: the swept corridor, plus everything below the
/// contact row across the swept x-interval when the push moves sideways.
pub fn handcrafted_vine_predict(a: &ActionSpec, space: &ActionSpace) -> Grid2D<bool> {
    let cap = corridor(a, space);
    let end = cap.b;
    let lateral = space.theta(a).cos().abs() > 1e-9;
    let (x0, x1) = (a.x.min(end.0), a.x.max(end.0));
    let top = cap.y_range().0;
    Grid2D::from_fn(space.grid_height, space.grid_width, |r, c| {
        let p = cell_center(r, c);
        in_corridor(&cap, p) || (lateral && p.0 >= x0 - EPS && p.0 <= x1 + EPS && p.1 >= top - EPS)
    })
}

/// Polar angle about `center`, counterclockwise as viewed.
fn polar(center: (f64, f64), p: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (p.0 - center.0, -(p.1 - center.1));
    ((dx * dx + dy * dy).sqrt(), dy.atan2(dx))
}

fn signed_angle(a: f64) -> f64 {
    let t = a.rem_euclid(TAU);
    if t > PI {
        t - TAU
    } else {
        t
    }
}

/// Leaves radiate from `center`: the corridor plus the annular sector the
/// push sweeps tangentially at the start radius.
pub fn handcrafted_dracaena_predict(a: &ActionSpec, center: (f64, f64), space: &ActionSpace) -> Grid2D<bool> {
    let cap = corridor(a, space);
    let (h, w) = (space.grid_height, space.grid_width);
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in 0..h {
        for c in 0..w {
            let p = cell_center(r, c);
            if in_corridor(&cap, p) {
                let (rho, _) = polar(center, p);
                rmin = rmin.min(rho);
                rmax = rmax.max(rho);
            }
        }
    }
    let (rho0, psi0) = polar(center, (a.x, a.y));
    let sweep = if rho0 > 1e-9 {
        a.length * (space.theta(a) - psi0).sin() / rho0
    } else {
        0.0
    };
    let sweep = if sweep.abs() < 1e-9 { 0.0 } else { sweep };
    Grid2D::from_fn(h, w, |r, c| {
        let p = cell_center(r, c);
        if in_corridor(&cap, p) {
            return true;
        }
        if sweep == 0.0 {
            return false;
        }
        let (rho, psi) = polar(center, p);
        if rho < rmin || rho > rmax {
            return false;
        }
        let d = signed_angle(psi - psi0);
        if sweep > 0.0 {
            d >= 0.0 && d <= sweep
        } else {
            d <= 0.0 && d >= sweep
        }
    })
}

/// Whether a push belongs to the strong direction class: horizontal on
/// vines, within 22.5 degrees of the local tangent on a Dracaena.
pub fn is_strong_action(a: &ActionSpec, center: (f64, f64), space: &ActionSpace) -> bool {
    let theta = space.theta(a);
    match space.kind {
        PlantKind::Vine => (theta.cos().abs() - 1.0).abs() < 1e-9,
        PlantKind::Dracaena => {
            let (_, psi) = polar(center, (a.x, a.y));
            (theta - psi).sin().abs() >= (FRAC_PI_2 - FRAC_PI_8).sin() - 1e-9
        }
    }
}

/// All legal strong-direction actions, in `all_actions` order.
pub fn strong_actions(space: &ActionSpace, center: (f64, f64)) -> Vec<ActionSpec> {
    space
        .all_actions()
        .into_iter()
        .filter(|a| is_strong_action(a, center, space))
        .collect()
}

/// Uniform draw from the strong-direction actions.
pub fn restricted_random(space: &ActionSpace, center: (f64, f64), rng: &mut Rng) -> Result<ActionSpec> {
    let all = strong_actions(space, center);
    if all.is_empty() {
        return Err(Error::PlanningFailure("no strong-direction action is legal".into()));
    }
    Ok(all[rng.gen_range(0..all.len())])
}

/// Spread-out candidates consumed without replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct TilingPlan {
    pub candidates: Vec<ActionSpec>,
    remaining: Vec<usize>,
}

impl TilingPlan {
    pub fn new(candidates: Vec<ActionSpec>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Config("tiling plan needs at least one candidate".into()));
        }
        Ok(Self {
            remaining: (0..candidates.len()).collect(),
            candidates,
        })
    }

    /// Default lattice for a plant: pitch-8 starts with horizontal pushes on
    /// vines; two rings of tangential pushes at every height on a Dracaena.
    pub fn for_space(space: &ActionSpace, center: (f64, f64)) -> Result<Self> {
        let mut out: Vec<ActionSpec> = Vec::new();
        let mut add = |a: ActionSpec| {
            if !out.iter().any(|b| space.action_key(b) == space.action_key(&a)) {
                out.push(a);
            }
        };
        match space.kind {
            PlantKind::Vine => {
                let step = (VINE_TILING_PITCH / space.pitch).round().max(1.0) as usize;
                let dirs: Vec<usize> = (0..space.directions.len())
                    .filter(|&d| (space.directions[d].cos().abs() - 1.0).abs() < 1e-9)
                    .collect();
                for &y in space.start_ys().iter().step_by(step) {
                    for &x in space.start_xs().iter().step_by(step) {
                        for &d in &dirs {
                            if let Ok(a) = clip_action(space, x, y, d, 0) {
                                add(a);
                            }
                        }
                    }
                }
            }
            PlantKind::Dracaena => {
                let centers = space.start_centers();
                for &radius in &DRACAENA_RINGS {
                    for k in 0..8 {
                        let psi = k as f64 * PI / 4.0;
                        let (ux, uy) = push_direction(psi);
                        let want = (center.0 + radius * ux, center.1 + radius * uy);
                        let Some(&(x, y)) = centers.iter().min_by(|p, q| {
                            let dp = (p.0 - want.0).powi(2) + (p.1 - want.1).powi(2);
                            let dq = (q.0 - want.0).powi(2) + (q.1 - want.1).powi(2);
                            dp.total_cmp(&dq)
                        }) else {
                            continue;
                        };
                        for z in 0..space.z_levels.len() {
                            for d in 0..space.directions.len() {
                                let Ok(a) = clip_action(space, x, y, d, z) else { continue };
                                let (_, p) = polar(center, (x, y));
                                if ((space.directions[d] - p).sin().abs() - 1.0).abs() < 0.08 {
                                    add(a);
                                }
                            }
                        }
                    }
                }
            }
        }
        Self::new(out)
    }

    pub fn remaining(&self) -> usize {
        self.remaining.len()
    }
}

/// Draws an unconsumed candidate uniformly; an exhausted plan is refilled.
pub fn tiling_next(plan: &mut TilingPlan, rng: &mut Rng) -> ActionSpec {
    if plan.remaining.is_empty() {
        plan.remaining = (0..plan.candidates.len()).collect();
    }
    let i = rng.gen_range(0..plan.remaining.len());
    plan.candidates[plan.remaining.remove(i)]
}
