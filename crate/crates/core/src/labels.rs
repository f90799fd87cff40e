//! Revealed-space labels recovered from before/after observations alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform2D;
use crate::grid::Grid2D;
use crate::sim::{Observation, Rgb, BOARD_COLOR};
use crate::space::PlantKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevealSource {
    VineColor,
    Vine5cm,
    DracaenaAligned,
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RevealMask {
    pub revealed: Grid2D<bool>,
    pub source: RevealSource,
    /// Set when the extractor could not do its job (e.g. nothing to align).
    pub warning: bool,
}

impl RevealMask {
    pub fn area(&self) -> usize {
        self.revealed.count_true()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VineRule {
    BoardColor,
    Height5cm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    pub board_color: Rgb,
    /// Euclidean RGB distance (0-255 scale) counted as "board".
    pub color_tolerance: f64,
    pub vine_height_drop: f64,
    pub tau: f64,
    /// Heights below this are ground for Dracaena alignment.
    pub plant_height_min: f64,
    /// Residual (cm) beyond which a cell stops influencing the alignment.
    pub align_outlier: f64,
    /// After-heights are read as the maximum over cells within this many
    /// cm of the aligned point.
    pub resample_radius: f64,
    /// Smoothing applied to height fields before alignment, cells.
    pub align_blur: f64,
    pub align_max_rotation_deg: f64,
    pub align_max_shift: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            board_color: BOARD_COLOR,
            color_tolerance: 30.0,
            vine_height_drop: 5.0,
            tau: 3.0,
            plant_height_min: 0.25,
            align_outlier: 5.0,
            resample_radius: 1.0,
            align_blur: 1.0,
            align_max_rotation_deg: 3.0,
            align_max_shift: 2.0,
        }
    }
}

fn color_dist(a: Rgb, b: Rgb) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(x, y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn check_pair(before: &Observation, after: &Observation) -> Result<()> {
    let s = before.shape();
    after.color.check_shape(s)?;
    for o in [before, after] {
        o.height.check_shape(s)?;
        o.valid.check_shape(s)?;
    }
    Ok(())
}

/// Vine labels by board-color thresholding or by a 5 cm height drop.
pub fn extract_vine(before: &Observation, after: &Observation, rule: VineRule, cfg: &LabelConfig) -> Result<RevealMask> {
    check_pair(before, after)?;
    let (h, w) = before.shape();
    let is_board = |c: Rgb| color_dist(c, cfg.board_color) <= cfg.color_tolerance;
    let revealed = Grid2D::from_fn(h, w, |r, c| {
        if !(before.valid[(r, c)] && after.valid[(r, c)]) {
            return false;
        }
        match rule {
            VineRule::BoardColor => is_board(after.color[(r, c)]) && !is_board(before.color[(r, c)]),
            VineRule::Height5cm => (before.height[(r, c)] - after.height[(r, c)]) as f64 >= cfg.vine_height_drop,
        }
    });
    Ok(RevealMask {
        revealed,
        source: match rule {
            VineRule::BoardColor => RevealSource::VineColor,
            VineRule::Height5cm => RevealSource::Vine5cm,
        },
        warning: false,
    })
}

/// Least-squares rigid motion taking `src` onto `dst`.
pub fn estimate_rigid_2d(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<RigidTransform2D> {
    estimate_rigid_2d_weighted(src, dst, &vec![1.0; src.len()])
}

pub fn estimate_rigid_2d_weighted(src: &[(f64, f64)], dst: &[(f64, f64)], weights: &[f64]) -> Result<RigidTransform2D> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(Error::Dimension {
            expected: format!("{} correspondences", src.len()),
            found: format!("{} targets, {} weights", dst.len(), weights.len()),
        });
    }
    if src.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "rigid fit needs at least 2 points, got {}",
            src.len()
        )));
    }
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) {
        return Err(Error::DegenerateInput("weights sum to zero".into()));
    }
    let centroid = |pts: &[(f64, f64)]| {
        let (mut x, mut y) = (0.0, 0.0);
        for (p, w) in pts.iter().zip(weights) {
            x += w * p.0;
            y += w * p.1;
        }
        (x / wsum, y / wsum)
    };
    let cs = centroid(src);
    let cd = centroid(dst);
    let (mut dot, mut cross, mut spread) = (0.0, 0.0, 0.0);
    for ((s, d), w) in src.iter().zip(dst).zip(weights) {
        let (sx, sy) = (s.0 - cs.0, s.1 - cs.1);
        let (dx, dy) = (d.0 - cd.0, d.1 - cd.1);
        dot += w * (sx * dx + sy * dy);
        cross += w * (sx * dy - sy * dx);
        spread += w * (sx * sx + sy * sy);
    }
    if spread <= 1e-18 {
        return Err(Error::DegenerateInput("all source points coincide".into()));
    }
    let angle = cross.atan2(dot);
    let (s, c) = angle.sin_cos();
    Ok(RigidTransform2D::new(
        angle,
        cd.0 - (c * cs.0 - s * cs.1),
        cd.1 - (s * cs.0 + c * cs.1),
    ))
}

/// Highest valid height among cells whose centers lie within `radius` of
/// `p`, always including the cell containing `p`.
fn local_max(obs: &Observation, p: (f64, f64), radius: f64) -> Option<f64> {
    let (pr, pc) = (p.1.floor() as isize, p.0.floor() as isize);
    if !*obs.valid.get(pr, pc)? {
        return None;
    }
    let mut best = *obs.height.get(pr, pc)? as f64;
    let r2 = radius * radius;
    for r in pr - 1..=pr + 1 {
        for c in pc - 1..=pc + 1 {
            let (dx, dy) = (c as f64 + 0.5 - p.0, r as f64 + 0.5 - p.1);
            if dx * dx + dy * dy <= r2 {
                if let (Some(true), Some(&h)) = (obs.valid.get(r, c), obs.height.get(r, c)) {
                    best = best.max(h as f64);
                }
            }
        }
    }
    Some(best)
}

/// Gaussian-smoothed heights; invalid cells are left out of the average.
fn smooth_heights(obs: &Observation, sigma: f64) -> Grid2D<f64> {
    let (h, w) = obs.shape();
    let rad = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-rad..=rad)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let pass = |vals: &Grid2D<f64>, wts: &Grid2D<f64>, horizontal: bool| {
        let mut v2 = Grid2D::filled(h, w, 0.0);
        let mut w2 = Grid2D::filled(h, w, 0.0);
        for r in 0..h {
            for c in 0..w {
                let (mut sv, mut sw) = (0.0, 0.0);
                for (k, &g) in kernel.iter().enumerate() {
                    let off = k as isize - rad;
                    let (rr, cc) = if horizontal {
                        (r as isize, c as isize + off)
                    } else {
                        (r as isize + off, c as isize)
                    };
                    if let (Some(&v), Some(&wt)) = (vals.get(rr, cc), wts.get(rr, cc)) {
                        sv += g * v;
                        sw += g * wt;
                    }
                }
                v2[(r, c)] = sv;
                w2[(r, c)] = sw;
            }
        }
        (v2, w2)
    };
    let wts = obs.valid.map(|&v| v as u8 as f64);
    let vals = Grid2D::from_fn(h, w, |r, c| wts[(r, c)] * obs.height[(r, c)] as f64);
    let (v1, w1) = pass(&vals, &wts, true);
    let (v2, w2) = pass(&v1, &w1, false);
    v2.zip_map(&w2, |&v, &wt| if wt > 1e-9 { v / wt } else { 0.0 })
        .expect("same shape")
}

fn bilinear(g: &Grid2D<f64>, p: (f64, f64)) -> Option<f64> {
    let fx = p.0 - 0.5;
    let fy = p.1 - 0.5;
    let (c0, r0) = (fx.floor(), fy.floor());
    let (tx, ty) = (fx - c0, fy - r0);
    let (r0, c0) = (r0 as isize, c0 as isize);
    let v = |dr: isize, dc: isize| g.get(r0 + dr, c0 + dc).copied();
    Some(
        (1.0 - ty) * ((1.0 - tx) * v(0, 0)? + tx * v(0, 1)?)
            + ty * ((1.0 - tx) * v(1, 0)? + tx * v(1, 1)?),
    )
}

/// Rigid motion taking the plant in `before` onto the plant in `after`.
///
/// Minimizes a truncated squared difference between smoothed height
/// fields: a coarse grid over small motions (around the identity and around
/// the height-weighted centroid shift), then a shrinking pattern search.
/// Cells whose leaves actually moved saturate the truncated loss and stop
/// pulling on the fit.
pub fn align_heights(before: &Observation, after: &Observation, cfg: &LabelConfig) -> Result<RigidTransform2D> {
    check_pair(before, after)?;
    let sb = smooth_heights(before, cfg.align_blur);
    let sa = smooth_heights(after, cfg.align_blur);
    let plant = |g: &Grid2D<f64>, o: &Observation| -> Vec<((f64, f64), f64)> {
        let (h, w) = g.shape();
        let mut pts = Vec::new();
        for r in 0..h {
            for c in 0..w {
                if o.valid[(r, c)] && g[(r, c)] >= cfg.plant_height_min {
                    pts.push(((c as f64 + 0.5, r as f64 + 0.5), g[(r, c)]));
                }
            }
        }
        pts
    };
    let src = plant(&sb, before);
    let dst = plant(&sa, after);
    let raw_plant = |o: &Observation| {
        o.height
            .iter()
            .zip(o.valid.iter())
            .filter(|(&z, &v)| v && z as f64 >= cfg.plant_height_min)
            .count()
    };
    if raw_plant(before) < 2 || raw_plant(after) < 2 {
        return Err(Error::DegenerateInput("no plant pixels to align".into()));
    }
    let weighted_centroid = |pts: &[((f64, f64), f64)]| {
        let wsum: f64 = pts.iter().map(|p| p.1).sum();
        let x = pts.iter().map(|p| p.0 .0 * p.1).sum::<f64>() / wsum;
        let y = pts.iter().map(|p| p.0 .1 * p.1).sum::<f64>() / wsum;
        (x, y)
    };
    let cs = weighted_centroid(&src);
    let cd = weighted_centroid(&dst);
    let cap = cfg.align_outlier * cfg.align_outlier;
    let coarse: Vec<_> = src.iter().step_by(4).copied().collect();
    let cost_on = |pts: &[((f64, f64), f64)], angle: f64, tx: f64, ty: f64| -> f64 {
        let t = RigidTransform2D::about(angle, cs.0, cs.1, (tx, ty));
        pts.iter()
            .map(|&(p, z)| match bilinear(&sa, t.apply(p)) {
                Some(ha) => (z - ha).powi(2).min(cap),
                None => cap,
            })
            .sum()
    };
    let cost = |angle: f64, tx: f64, ty: f64| cost_on(&src, angle, tx, ty);
    let n_rot = (cfg.align_max_rotation_deg.max(0.0)).round() as i32;
    let n_shift = (cfg.align_max_shift.max(0.0) * 2.0).round() as i32;
    let mut best = (0.0, 0.0, 0.0);
    let mut best_cost = cost_on(&coarse, 0.0, 0.0, 0.0);
    for origin in [(0.0, 0.0), (cd.0 - cs.0, cd.1 - cs.1)] {
        for ia in -n_rot..=n_rot {
            let a = (ia as f64).to_radians();
            for ix in -n_shift..=n_shift {
                for iy in -n_shift..=n_shift {
                    let cand = (a, origin.0 + ix as f64 * 0.5, origin.1 + iy as f64 * 0.5);
                    let c = cost_on(&coarse, cand.0, cand.1, cand.2);
                    if c < best_cost {
                        best = cand;
                        best_cost = c;
                    }
                }
            }
        }
    }
    best_cost = cost(best.0, best.1, best.2);
    let mut step_a = 0.5f64.to_radians();
    let mut step_t = 0.25;
    while step_t > 0.01 {
        let mut improved = false;
        for (da, dx, dy) in [
            (step_a, 0.0, 0.0),
            (-step_a, 0.0, 0.0),
            (0.0, step_t, 0.0),
            (0.0, -step_t, 0.0),
            (0.0, 0.0, step_t),
            (0.0, 0.0, -step_t),
        ] {
            let cand = (best.0 + da, best.1 + dx, best.2 + dy);
            let c = cost(cand.0, cand.1, cand.2);
            if c < best_cost - 1e-9 {
                best = cand;
                best_cost = c;
                improved = true;
            }
        }
        if !improved {
            step_a *= 0.5;
            step_t *= 0.5;
        }
    }
    Ok(RigidTransform2D::about(best.0, cs.0, cs.1, (best.1, best.2)))
}

/// Dracaena labels: cells whose height dropped by at least `tau` once the
/// whole-plant wobble is aligned out. Labels live in the `before` frame.
pub fn extract_dracaena(before: &Observation, after: &Observation, tau: f64, cfg: &LabelConfig) -> Result<RevealMask> {
    let (drop, warning) = dracaena_height_drop(before, after, cfg)?;
    Ok(RevealMask {
        revealed: drop.map(|&d| d as f64 >= tau),
        source: RevealSource::DracaenaAligned,
        warning,
    })
}

/// Aligned per-cell height decrease (cm, never negative) in the `before`
/// frame, and whether alignment failed. Cells invalid in either view are 0.
pub fn dracaena_height_drop(before: &Observation, after: &Observation, cfg: &LabelConfig) -> Result<(Grid2D<f32>, bool)> {
    check_pair(before, after)?;
    let (h, w) = before.shape();
    let t = match align_heights(before, after, cfg) {
        Ok(t) => t,
        Err(Error::DegenerateInput(_)) => return Ok((Grid2D::filled(h, w, 0.0), true)),
        Err(e) => return Err(e),
    };
    let drop = Grid2D::from_fn(h, w, |r, c| {
        if !before.valid[(r, c)] || !after.valid[(r, c)] {
            return 0.0;
        }
        let hb = before.height[(r, c)] as f64;
        // Any nearby cell still high enough counts as not revealed; this
        // absorbs resampling error along leaf edges.
        match local_max(after, t.apply((c as f64 + 0.5, r as f64 + 0.5)), cfg.resample_radius) {
            Some(ha) => (hb - ha).max(0.0) as f32,
            None => 0.0,
        }
    });
    Ok((drop, false))
}

/// Cells where the surface beneath the plant is visible.
pub fn visible_background(obs: &Observation, kind: PlantKind, cfg: &LabelConfig) -> Grid2D<bool> {
    let (h, w) = obs.shape();
    Grid2D::from_fn(h, w, |r, c| {
        obs.valid[(r, c)]
            && match kind {
                PlantKind::Vine => color_dist(obs.color[(r, c)], cfg.board_color) <= cfg.color_tolerance,
                PlantKind::Dracaena => (obs.height[(r, c)] as f64) < cfg.plant_height_min,
            }
    })
}

/// Pooled intersection-over-union; `None` when both masks are empty.
pub fn iou(a: &Grid2D<bool>, b: &Grid2D<bool>) -> Option<f64> {
    let (i, u) = iou_counts(a, b);
    (u > 0).then(|| i as f64 / u as f64)
}

pub fn iou_counts(a: &Grid2D<bool>, b: &Grid2D<bool>) -> (usize, usize) {
    let mut inter = 0;
    let mut union = 0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    (inter, union)
}
