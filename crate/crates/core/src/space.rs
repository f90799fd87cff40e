//! Workspace geometry, push action spaces, and coverage bookkeeping.
//!
//! Angles are measured counterclockwise as seen in the rendered image, with
//! `theta = 0` pointing along +x. Because image rows grow downward, a push of
//! length `d` at angle `theta` displaces the effector by
//! `(d cos(theta), -d sin(theta))` in workspace coordinates; `theta = pi/2`
//! moves toward row 0.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    Vine,
    Dracaena,
}

impl PlantKind {
    pub fn code(self) -> u8 {
        match self {
            PlantKind::Vine => 0,
            PlantKind::Dracaena => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(PlantKind::Vine),
            1 => Ok(PlantKind::Dracaena),
            other => Err(Error::Format(format!("unknown plant kind code {other}"))),
        }
    }
}

/// Closed axis-aligned rectangle in workspace centimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        assert!(x1 > x0 && y1 > y0, "rectangle must have positive area");
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn contains_strict(&self, x: f64, y: f64) -> bool {
        x > self.x0 && x < self.x1 && y > self.y0 && y < self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// Unit displacement of a push at angle `theta` in workspace coordinates.
pub fn push_direction(theta: f64) -> (f64, f64) {
    (theta.cos(), -theta.sin())
}

pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if (TAU - t).abs() < 1e-12 {
        0.0
    } else {
        t
    }
}

pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TAU - d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub kind: PlantKind,
    /// Workspace size in cells (rows, cols).
    pub grid_height: usize,
    pub grid_width: usize,
    pub reachable: Rect,
    pub exclusion: Option<Rect>,
    /// Spacing of start centers, cm.
    pub pitch: f64,
    pub directions: Vec<f64>,
    /// Effector heights above the ground/board, cm.
    pub z_levels: Vec<f64>,
    pub push_length: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl ActionSpace {
    pub fn new(
        kind: PlantKind,
        grid_height: usize,
        grid_width: usize,
        reachable: Rect,
        exclusion: Option<Rect>,
        pitch: f64,
        directions: Vec<f64>,
        z_levels: Vec<f64>,
        push_length: f64,
    ) -> Result<Self> {
        if directions.is_empty() || z_levels.is_empty() {
            return Err(Error::Config("action space needs at least one direction and one z level".into()));
        }
        if !(pitch > 0.0 && push_length > 0.0) {
            return Err(Error::Config("pitch and push length must be positive".into()));
        }
        if reachable.x0 < 0.0
            || reachable.y0 < 0.0
            || reachable.x1 > grid_width as f64
            || reachable.y1 > grid_height as f64
        {
            return Err(Error::Config("reachable region exceeds the workspace".into()));
        }
        let lattice = |lo: f64, len: f64| -> Vec<f64> {
            let n = (len / pitch + 1e-9).floor() as usize;
            (0..n).map(|i| lo + pitch * (i as f64 + 0.5)).collect()
        };
        let xs = lattice(reachable.x0, reachable.width());
        let ys = lattice(reachable.y0, reachable.height());
        let space = Self {
            kind,
            grid_height,
            grid_width,
            reachable,
            exclusion,
            pitch,
            directions: directions.into_iter().map(wrap_angle).collect(),
            z_levels,
            push_length,
            xs,
            ys,
        };
        if space.start_centers().is_empty() {
            return Err(Error::Config("action space has no legal start centers".into()));
        }
        Ok(space)
    }

    /// 80x80 board with a centered 40x40 reachable square, 7 directions over
    /// the upper half-plane, a single effector height.
    pub fn vine() -> Self {
        let directions = (0..7).map(|i| i as f64 * PI / 6.0).collect();
        Self::new(
            PlantKind::Vine,
            80,
            80,
            Rect::new(20.0, 20.0, 60.0, 60.0),
            None,
            2.0,
            directions,
            vec![0.0],
            15.0,
        )
        .expect("default vine space is valid")
    }

    /// 90x90 top-down workspace, 58x54 reachable region with the plant's
    /// center excluded, 8 directions, 3 insertion heights.
    pub fn dracaena() -> Self {
        let directions = (0..8).map(|i| i as f64 * FRAC_PI_4).collect();
        Self::new(
            PlantKind::Dracaena,
            90,
            90,
            Rect::new(16.0, 18.0, 74.0, 72.0),
            Some(Rect::new(38.0, 38.0, 52.0, 52.0)),
            2.0,
            directions,
            vec![22.5, 27.5, 32.5],
            15.0,
        )
        .expect("default dracaena space is valid")
    }

    pub fn for_kind(kind: PlantKind) -> Self {
        match kind {
            PlantKind::Vine => Self::vine(),
            PlantKind::Dracaena => Self::dracaena(),
        }
    }

    pub fn start_xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn start_ys(&self) -> &[f64] {
        &self.ys
    }

    fn excluded(&self, x: f64, y: f64) -> bool {
        self.exclusion.is_some_and(|e| e.contains_strict(x, y))
    }

    /// Legal start centers in row-major lattice order.
    pub fn start_centers(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.xs.len() * self.ys.len());
        for &y in &self.ys {
            for &x in &self.xs {
                if !self.excluded(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Lattice coordinates of a start point, if it is a legal start center.
    pub fn lattice_index(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let find = |axis: &[f64], v: f64| axis.iter().position(|&a| (a - v).abs() < 1e-6);
        let ix = find(&self.xs, x)?;
        let iy = find(&self.ys, y)?;
        if self.excluded(x, y) {
            None
        } else {
            Some((ix, iy))
        }
    }

    pub fn is_start_center(&self, x: f64, y: f64) -> bool {
        self.lattice_index(x, y).is_some()
    }

    /// Boolean mask of cells whose centers lie in the reachable region and
    /// outside the exclusion rectangle.
    pub fn reachable_grid(&self) -> Grid2D<bool> {
        Grid2D::from_fn(self.grid_height, self.grid_width, |r, c| {
            let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
            self.reachable.contains(x, y) && !self.excluded(x, y)
        })
    }

    pub fn direction_index(&self, theta: f64) -> Option<usize> {
        self.directions
            .iter()
            .position(|&d| angle_distance(d, theta) < 1e-6)
    }

    pub fn theta(&self, a: &ActionSpec) -> f64 {
        self.directions[a.dir_index]
    }

    pub fn z(&self, a: &ActionSpec) -> f64 {
        self.z_levels[a.z_index]
    }

    pub fn endpoint(&self, a: &ActionSpec) -> (f64, f64) {
        let (ux, uy) = push_direction(self.theta(a));
        (a.x + a.length * ux, a.y + a.length * uy)
    }

    /// Longest feasible push from `(x, y)` at `theta`, capped at `max_len`.
    /// Endpoints exactly on the boundary count as feasible.
    pub fn feasible_length(&self, x: f64, y: f64, theta: f64, max_len: f64) -> f64 {
        let (ux, uy) = push_direction(theta);
        let r = &self.reachable;
        let mut d = max_len;
        let axis = |d: &mut f64, pos: f64, u: f64, lo: f64, hi: f64| {
            if u > 1e-12 {
                *d = d.min((hi - pos) / u);
            } else if u < -1e-12 {
                *d = d.min((lo - pos) / u);
            }
        };
        axis(&mut d, x, ux, r.x0, r.x1);
        axis(&mut d, y, uy, r.y0, r.y1);
        d.max(0.0)
    }

    /// Number of discrete actions: starts x directions x z levels.
    pub fn num_actions(&self) -> usize {
        self.start_centers().len() * self.directions.len() * self.z_levels.len()
    }

    /// Canonical ordering key: (start lattice row, start lattice col, direction, z).
    pub fn action_key(&self, a: &ActionSpec) -> (usize, usize, usize, usize) {
        let (ix, iy) = self.lattice_index(a.x, a.y).unwrap_or((usize::MAX, usize::MAX));
        (iy, ix, a.dir_index, a.z_index)
    }

    /// Every clipped action of the space, in canonical order.
    pub fn all_actions(&self) -> Vec<ActionSpec> {
        let mut out = Vec::new();
        for (x, y) in self.start_centers() {
            for d in 0..self.directions.len() {
                for z in 0..self.z_levels.len() {
                    if let Ok(a) = clip_action(self, x, y, d, z) {
                        out.push(a);
                    }
                }
            }
        }
        out
    }

    /// Checks every [`ActionSpec`] invariant against this space.
    pub fn validate(&self, a: &ActionSpec) -> Result<()> {
        if !self.is_start_center(a.x, a.y) {
            return Err(Error::InfeasibleAction(format!("({}, {}) is not a legal start center", a.x, a.y)));
        }
        if a.dir_index >= self.directions.len() || a.z_index >= self.z_levels.len() {
            return Err(Error::InfeasibleAction("direction or z index out of range".into()));
        }
        if !(a.length > 0.0 && a.length <= self.push_length + 1e-9) {
            return Err(Error::InfeasibleAction(format!("length {} outside (0, {}]", a.length, self.push_length)));
        }
        let (ex, ey) = self.endpoint(a);
        let eps = 1e-9;
        let r = &self.reachable;
        if ex < r.x0 - eps || ex > r.x1 + eps || ey < r.y0 - eps || ey > r.y1 + eps {
            return Err(Error::InfeasibleAction("endpoint leaves the reachable region".into()));
        }
        Ok(())
    }

    /// Angle of the horizontal mirror image of `theta`.
    pub fn mirror_theta(theta: f64) -> f64 {
        wrap_angle(PI - theta)
    }
}

/// One planar push.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub x: f64,
    pub y: f64,
    pub dir_index: usize,
    pub z_index: usize,
    pub length: f64,
}

/// Builds a push from `(x, y)` clipped to the reachable region.
pub fn clip_action(space: &ActionSpace, x: f64, y: f64, dir_index: usize, z_index: usize) -> Result<ActionSpec> {
    if dir_index >= space.directions.len() || z_index >= space.z_levels.len() {
        return Err(Error::InfeasibleAction(format!(
            "direction {dir_index} / z {z_index} out of range"
        )));
    }
    if !space.reachable.contains(x, y) {
        return Err(Error::InfeasibleAction(format!("start ({x}, {y}) outside reachable region")));
    }
    let theta = space.directions[dir_index];
    let length = space.feasible_length(x, y, theta, space.push_length);
    if length <= 1e-9 {
        return Err(Error::InfeasibleAction(format!(
            "no positive push length from ({x}, {y}) at {theta:.3} rad"
        )));
    }
    Ok(ActionSpec {
        x,
        y,
        dir_index,
        z_index,
        length,
    })
}

/// Reflects an action about the vertical line `x = axis_x`.
pub fn mirror_action(space: &ActionSpace, a: &ActionSpec, axis_x: f64) -> Result<ActionSpec> {
    let x = 2.0 * axis_x - a.x;
    if !space.is_start_center(x, a.y) {
        return Err(Error::InfeasibleAction(format!("mirrored start ({x}, {}) is not legal", a.y)));
    }
    let theta = ActionSpace::mirror_theta(space.directions[a.dir_index]);
    let dir_index = space
        .direction_index(theta)
        .ok_or_else(|| Error::InfeasibleAction(format!("mirrored angle {theta:.4} not in direction set")))?;
    Ok(ActionSpec {
        x,
        dir_index,
        ..*a
    })
}

/// Cells in `candidate` that are not yet covered.
pub fn mask_new_space(candidate: &Grid2D<bool>, coverage: &CoverageMap) -> Result<Grid2D<bool>> {
    candidate.zip_map(&coverage.revealed, |&c, &done| c && !done)
}

/// Cumulative revealed space `C_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageMap {
    pub revealed: Grid2D<bool>,
}

impl CoverageMap {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            revealed: Grid2D::filled(height, width, false),
        }
    }

    pub fn from_mask(revealed: Grid2D<bool>) -> Self {
        Self { revealed }
    }

    pub fn area(&self) -> usize {
        self.revealed.count_true()
    }

    /// `C <- C | mask`; returns the number of newly covered cells.
    pub fn union(&mut self, mask: &Grid2D<bool>) -> Result<usize> {
        self.revealed.check_shape(mask.shape())?;
        let mut added = 0;
        for (c, &m) in self.revealed.data_mut().iter_mut().zip(mask.iter()) {
            if m && !*c {
                *c = true;
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn is_subset_of(&self, other: &CoverageMap) -> bool {
        self.revealed.shape() == other.revealed.shape()
            && self
                .revealed
                .iter()
                .zip(other.revealed.iter())
                .all(|(&a, &b)| !a || b)
    }
}
