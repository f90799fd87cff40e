//! Dense row-major grids over the workspace.
//!
//! Rows grow downward (y), columns grow rightward (x). One cell is one
//! centimetre, so cell `(r, c)` covers `[c, c + 1) x [r, r + 1)` in workspace
//! coordinates and its center sits at `(c + 0.5, r + 0.5)`.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D<V> {
    height: usize,
    width: usize,
    data: Vec<V>,
}

impl<V: Clone> Grid2D<V> {
    pub fn filled(height: usize, width: usize, value: V) -> Self {
        assert!(height >= 1 && width >= 1, "grid must be at least 1x1");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Horizontal mirror: column `c` maps to `width - 1 - c`.
    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.width) {
            data.extend(row.iter().rev().cloned());
        }
        Self {
            height: self.height,
            width: self.width,
            data,
        }
    }
}

impl<V> Grid2D<V> {
    pub fn from_vec(height: usize, width: usize, data: Vec<V>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::Dimension {
                expected: format!("{height}x{width} (non-empty)"),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> V) -> Self {
        assert!(height >= 1 && width >= 1, "grid must be at least 1x1");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[V] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [V] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<V> {
        self.data
    }

    pub fn get(&self, r: isize, c: isize) -> Option<&V> {
        if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
            None
        } else {
            Some(&self.data[r as usize * self.width + c as usize])
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, V> {
        self.data.iter()
    }

    pub fn map<U>(&self, f: impl FnMut(&V) -> U) -> Grid2D<U> {
        Grid2D {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U, W>(&self, other: &Grid2D<U>, mut f: impl FnMut(&V, &U) -> W) -> Result<Grid2D<W>> {
        self.check_shape(other.shape())?;
        Ok(Grid2D {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_shape(&self, other: (usize, usize)) -> Result<()> {
        if self.shape() != other {
            return Err(Error::dims(self.shape(), other));
        }
        Ok(())
    }
}

impl Grid2D<bool> {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }
}

impl<V> Index<(usize, usize)> for Grid2D<V> {
    type Output = V;

    fn index(&self, (r, c): (usize, usize)) -> &V {
        debug_assert!(r < self.height && c < self.width);
        &self.data[r * self.width + c]
    }
}

impl<V> IndexMut<(usize, usize)> for Grid2D<V> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut V {
        debug_assert!(r < self.height && c < self.width);
        &mut self.data[r * self.width + c]
    }
}

/// Run-length encoding of a boolean grid, alternating runs starting with
/// `false`. Used for compact trace serialization.
pub fn encode_runs(mask: &Grid2D<bool>) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &v in mask.iter() {
        if v == current {
            len += 1;
        } else {
            runs.push(len);
            current = v;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode_runs(height: usize, width: usize, runs: &[u32]) -> Result<Grid2D<bool>> {
    let mut data = Vec::with_capacity(height * width);
    let mut value = false;
    for &len in runs {
        data.extend(std::iter::repeat_n(value, len as usize));
        value = !value;
    }
    Grid2D::from_vec(height, width, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Grid2D::from_vec(2, 2, vec![1, 2, 3]).is_err());
        assert!(Grid2D::<u8>::from_vec(0, 2, vec![]).is_err());
    }

    #[test]
    fn flip_maps_columns() {
        let g = Grid2D::from_fn(2, 3, |r, c| r * 10 + c);
        let f = g.flip_horizontal();
        assert_eq!(f[(0, 0)], 2);
        assert_eq!(f[(1, 2)], 10);
        assert_eq!(f.flip_horizontal(), g);
    }

    #[test]
    fn runs_roundtrip() {
        let g = Grid2D::from_fn(4, 5, |r, c| (r + c) % 3 == 0);
        let runs = encode_runs(&g);
        assert_eq!(decode_runs(4, 5, &runs).unwrap(), g);
        let t = Grid2D::filled(2, 2, true);
        assert_eq!(encode_runs(&t), vec![0, 4]);
    }
}
