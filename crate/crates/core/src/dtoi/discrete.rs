use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{DataImagePlan, Norm, PartPlan, Placement, Plane, MAX_CHANNELS};
use crate::error::{Error, Result};

/// A slice of a discrete set together with its grid and image placements.
#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    pub points: Vec<(f64, f64)>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub x_at: Placement,
    pub y_at: Placement,
}

fn by_x(a: &(f64, f64), b: &(f64, f64)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal)
}

fn by_y(a: &(f64, f64), b: &(f64, f64)) -> Ordering {
    a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal)
}

/// Inserts `k` interpolated values between horizontal neighbours. The `k`
/// positions after the last original pixel repeat that pixel so the width
/// becomes `(k + 1) * width`.
fn insert_along_rows(img: &Plane, k: usize) -> Plane {
    let step = k + 1;
    let mut out = Plane::zeros(img.height, img.width * step);
    let denom = step as f64;
    for r in 0..img.height {
        for c in 0..img.width {
            let a = img.get(r, c);
            out.set(r, c * step, a);
            for i in 1..=k {
                let v = if c + 1 < img.width {
                    let b = img.get(r, c + 1);
                    ((k - i + 1) as f64 / denom) * a + (i as f64 / denom) * b
                } else {
                    a
                };
                out.set(r, c * step + i, v);
            }
        }
    }
    out
}

fn transpose(img: &Plane) -> Plane {
    let mut out = Plane::zeros(img.width, img.height);
    for r in 0..img.height {
        for c in 0..img.width {
            out.set(c, r, img.get(r, c));
        }
    }
    out
}

/// Rows first, then columns of the row-expanded image.
pub(crate) fn interpolate(img: &Plane, k: usize) -> Plane {
    transpose(&insert_along_rows(&transpose(&insert_along_rows(img, k)), k))
}

/// Sort, pad, group, sort groups, normalize, reshape and interpolate one
/// point set into its x-image and y-image. Placements in the returned plan
/// put both images at the origin of channels 0 and 1.
pub fn discrete_images(points: &[(f64, f64)], rows: usize, cols: usize, k: usize) -> Result<(Plane, Plane, PartPlan)> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Parse("discrete data needs at least one point".into()));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Parse("discrete data contains non-finite coordinates".into()));
    }
    if rows == 0 || cols == 0 || rows * cols < n {
        return Err(Error::Capacity {
            what: format!("{rows}x{cols} grid"),
            required: n,
            available: rows * cols,
        });
    }
    let mut sorted: Vec<((f64, f64), bool)> = points.iter().map(|&p| (p, false)).collect();
    sorted.sort_by(|a, b| by_x(&a.0, &b.0));
    let last = sorted[n - 1].0;
    sorted.resize(rows * cols, (last, true));
    for group in sorted.chunks_mut(cols) {
        group.sort_by(|a, b| by_y(&a.0, &b.0));
    }
    let pad_count = rows * cols - n;
    let last_group = &sorted[(rows - 1) * cols..];
    let pad_start = last_group.iter().position(|e| e.1).unwrap_or(0);
    let x_norm = Norm::of(points.iter().map(|p| p.0));
    let y_norm = Norm::of(points.iter().map(|p| p.1));
    let x_img = Plane::from_vec(rows, cols, sorted.iter().map(|e| x_norm.apply(e.0 .0)).collect())?;
    let y_img = Plane::from_vec(rows, cols, sorted.iter().map(|e| y_norm.apply(e.0 .1)).collect())?;
    let (x_img, y_img) = (interpolate(&x_img, k), interpolate(&y_img, k));
    let at = |channel| Placement {
        channel,
        row: 0,
        col: 0,
        height: x_img.height,
        width: x_img.width,
    };
    let plan = PartPlan {
        n_points: n,
        grid_rows: rows,
        grid_cols: cols,
        pad_count,
        pad_start,
        x_norm,
        y_norm,
        x_at: at(0),
        y_at: at(1),
    };
    Ok((x_img, y_img, plan))
}

/// Single-part transform with an explicit grid: returns the x-image and the
/// y-image as two channels.
pub fn dtoi_discrete(points: &[(f64, f64)], rows: usize, cols: usize, k: usize) -> Result<(Vec<Plane>, DataImagePlan)> {
    let (x, y, part) = discrete_images(points, rows, cols, k)?;
    Ok((alloc::vec![x, y], DataImagePlan::Discrete { k, parts: alloc::vec![part] }))
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

fn ceil_sqrt(n: usize) -> usize {
    let mut r = libm::sqrt(n as f64) as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// Near-square grid for `n` points within `max_rows x max_cols`.
fn grid_for(n: usize, max_rows: usize, max_cols: usize) -> Option<(usize, usize)> {
    if n == 0 || n > max_rows * max_cols {
        return None;
    }
    let mut cols = ceil_sqrt(n).min(max_cols);
    if ceil_div(n, cols) > max_rows {
        cols = ceil_div(n, max_rows);
    }
    Some((ceil_div(n, cols), cols))
}

/// Slot layout: each channel cut into `tile_rows x tile_cols` equal slots.
#[derive(Clone, Copy, Debug)]
struct Tiling {
    tile_rows: usize,
    tile_cols: usize,
    slot_h: usize,
    slot_w: usize,
    /// Grid bound per slot.
    max_rows: usize,
    max_cols: usize,
}

impl Tiling {
    fn new(h: usize, w: usize, tile_rows: usize, tile_cols: usize, k: usize) -> Self {
        let (slot_h, slot_w) = (h / tile_rows, w / tile_cols);
        Self {
            tile_rows,
            tile_cols,
            slot_h,
            slot_w,
            max_rows: slot_h / (k + 1),
            max_cols: slot_w / (k + 1),
        }
    }

    fn pairs(&self) -> usize {
        MAX_CHANNELS * self.tile_rows * self.tile_cols / 2
    }

    fn per_part(&self) -> usize {
        self.max_rows * self.max_cols
    }

    fn capacity(&self) -> usize {
        self.pairs() * self.per_part()
    }

    fn slot(&self, s: usize, h: usize, w: usize) -> Placement {
        let per_channel = self.tile_rows * self.tile_cols;
        let within = s % per_channel;
        Placement {
            channel: s / per_channel,
            row: (within / self.tile_cols) * self.slot_h,
            col: (within % self.tile_cols) * self.slot_w,
            height: h,
            width: w,
        }
    }
}

const MAX_TILES: usize = 8;

fn tilings(carrier: (usize, usize), k: usize) -> impl Iterator<Item = Tiling> {
    let (h, w) = carrier;
    (1..=MAX_TILES)
        .flat_map(move |a| (1..=MAX_TILES).map(move |b| Tiling::new(h, w, a, b, k)))
        .filter(|t| t.per_part() > 0)
}

/// Largest point count that [`split_discrete`] can place in three channels
/// of the carrier size.
pub fn max_points(carrier: (usize, usize), k: usize) -> usize {
    tilings(carrier, k).map(|t| t.capacity()).max().unwrap_or(0)
}

/// Splits a set into the fewest equal parts (consecutive in x order) whose
/// interpolated images fit side by side in three carrier-sized channels.
pub fn split_discrete(points: &[(f64, f64)], carrier: (usize, usize), k: usize) -> Result<Vec<Part>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Parse("discrete data needs at least one point".into()));
    }
    let best = tilings(carrier, k)
        .filter_map(|t| {
            let parts = ceil_div(n, t.per_part());
            (parts <= t.pairs()).then_some((parts, t))
        })
        .min_by_key(|(parts, t)| (*parts, t.tile_rows * t.tile_cols, t.tile_rows));
    let Some((parts, tiling)) = best else {
        return Err(Error::Capacity {
            what: format!("points for a {}x{} carrier with K={k}", carrier.0, carrier.1),
            required: n,
            available: max_points(carrier, k),
        });
    };
    let mut sorted = points.to_vec();
    sorted.sort_by(by_x);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = n / parts + usize::from(i < n % parts);
        let chunk = sorted[start..start + len].to_vec();
        start += len;
        let (rows, cols) = grid_for(len, tiling.max_rows, tiling.max_cols).expect("part sized to fit its slot");
        let (ih, iw) = ((k + 1) * rows, (k + 1) * cols);
        out.push(Part {
            points: chunk,
            grid_rows: rows,
            grid_cols: cols,
            x_at: tiling.slot(2 * i, ih, iw),
            y_at: tiling.slot(2 * i + 1, ih, iw),
        });
    }
    Ok(out)
}

/// Splits, transforms and stitches a set into carrier-sized channels.
pub fn dtoi_discrete_fitted(
    points: &[(f64, f64)],
    carrier: (usize, usize),
    k: usize,
) -> Result<(Vec<Plane>, DataImagePlan)> {
    let parts = split_discrete(points, carrier, k)?;
    let mut plans = Vec::with_capacity(parts.len());
    let mut images = Vec::with_capacity(parts.len());
    for part in &parts {
        let (x, y, mut plan) = discrete_images(&part.points, part.grid_rows, part.grid_cols, k)?;
        plan.x_at = part.x_at;
        plan.y_at = part.y_at;
        images.push((x, y));
        plans.push(plan);
    }
    let plan = DataImagePlan::Discrete { k, parts: plans };
    let mut channels: Vec<Plane> = (0..plan.channel_count()).map(|_| Plane::zeros(carrier.0, carrier.1)).collect();
    for ((x, y), p) in images.iter().zip(match &plan {
        DataImagePlan::Discrete { parts, .. } => parts,
        DataImagePlan::Continuous { .. } => unreachable!(),
    }) {
        channels[p.x_at.channel].blit(x, p.x_at.row, p.x_at.col);
        channels[p.y_at.channel].blit(y, p.y_at.row, p.y_at.col);
    }
    Ok((channels, plan))
}

/// Reads the non-inserted pixels back, de-normalizes them and drops the
/// padding replicas. Returns the points of every part concatenated; the
/// multiset equals the input set, the order does not.
pub fn inverse_dtoi_discrete(channels: &[Plane], plan: &DataImagePlan) -> Result<Vec<(f64, f64)>> {
    let DataImagePlan::Discrete { k, parts } = plan else {
        return Err(Error::CorruptPlan("expected a discrete-data plan".into()));
    };
    let k = *k;
    let (h, w) = channels.first().map_or((0, 0), |c| (c.height, c.width));
    if channels.iter().any(|c| (c.height, c.width) != (h, w)) {
        return Err(crate::error::shape_err("data-image channels differ in size"));
    }
    plan.validate(channels.len(), h, w)?;
    let mut out = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        let (rows, cols) = (part.grid_rows, part.grid_cols);
        let want = ((k + 1) * rows, (k + 1) * cols);
        for at in [part.x_at, part.y_at] {
            if (at.height, at.width) != want {
                return Err(Error::CorruptPlan(format!(
                    "part {i}: image is {}x{} but the grid needs {}x{}",
                    at.height, at.width, want.0, want.1
                )));
            }
        }
        if rows * cols != part.n_points + part.pad_count || part.pad_start + part.pad_count > cols || part.n_points == 0 {
            return Err(Error::CorruptPlan(format!("part {i}: inconsistent point and padding counts")));
        }
        let step = k + 1;
        let pad = (rows - 1, part.pad_start..part.pad_start + part.pad_count);
        for r in 0..rows {
            for c in 0..cols {
                if r == pad.0 && pad.1.contains(&c) {
                    continue;
                }
                let xv = channels[part.x_at.channel].get(part.x_at.row + r * step, part.x_at.col + c * step);
                let yv = channels[part.y_at.channel].get(part.y_at.row + r * step, part.y_at.col + c * step);
                out.push((part.x_norm.invert(xv), part.y_norm.invert(yv)));
            }
        }
    }
    Ok(out)
}
