//! Target masks as plain-text `P1` bitmaps: the magic `P1`, width and
//! height, then one `0`/`1` per cell in row-major order. Whitespace between
//! cells is optional and `#` starts a comment.

use std::fs;
use std::path::Path;

use reveal_core::grid::Grid2D;

use crate::error::{input, Result};

pub fn parse_mask(text: &str) -> Result<Grid2D<bool>> {
    let body: String = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");
    let mut rest = body.as_str();
    let mut header = Vec::with_capacity(3);
    while header.len() < 3 {
        rest = rest.trim_start();
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        if end == 0 {
            return Err(input("mask header is incomplete"));
        }
        header.push(&rest[..end]);
        rest = &rest[end..];
    }
    if header[0] != "P1" {
        return Err(input(format!("mask magic '{}', expected P1", header[0])));
    }
    let dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| input(format!("bad mask dimension '{s}'")))
    };
    let (w, h) = (dim(header[1])?, dim(header[2])?);
    let mut cells = Vec::with_capacity(w * h);
    for ch in rest.chars().filter(|c| !c.is_whitespace()) {
        match ch {
            '0' => cells.push(false),
            '1' => cells.push(true),
            _ => return Err(input(format!("unexpected character '{ch}' in mask"))),
        }
    }
    if cells.len() != w * h {
        return Err(input(format!("mask has {} cells, expected {}x{}", cells.len(), w, h)));
    }
    Ok(Grid2D::from_vec(h, w, cells)?)
}

pub fn format_mask(mask: &Grid2D<bool>) -> String {
    let (h, w) = mask.shape();
    let mut s = format!("P1\n{w} {h}\n");
    for r in 0..h {
        let row: Vec<&str> = (0..w).map(|c| if mask[(r, c)] { "1" } else { "0" }).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn read_mask(path: &Path) -> Result<Grid2D<bool>> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("cannot read mask {}: {e}", path.display())))?;
    parse_mask(&text)
}
