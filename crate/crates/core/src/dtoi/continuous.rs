use alloc::format;
use alloc::vec::Vec;

use super::pack::{pack_shelves, Rect};
use super::{DataImagePlan, Norm, Placement, Plane, PlanePlan, MAX_CHANNELS};
use crate::error::{shape_err, Error, Result};

/// Maps each plane onto `[0, 1]` with its own min/max.
pub fn normalize_planes(planes: &[Plane]) -> Result<(Vec<Plane>, Vec<Norm>)> {
    if planes.is_empty() {
        return Err(shape_err("continuous data needs at least one plane"));
    }
    let mut out = Vec::with_capacity(planes.len());
    let mut norms = Vec::with_capacity(planes.len());
    for (i, p) in planes.iter().enumerate() {
        if p.height == 0 || p.width == 0 {
            return Err(shape_err(format!("plane {i} is empty")));
        }
        if p.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("plane {i} contains non-finite values")));
        }
        let norm = Norm::of(p.data.iter().copied());
        out.push(Plane {
            height: p.height,
            width: p.width,
            data: p.data.iter().map(|&v| norm.apply(v)).collect(),
        });
        norms.push(norm);
    }
    Ok((out, norms))
}

/// Normalizes and stitches planes into the fewest `height x width` channels.
pub fn dtoi_continuous(planes: &[Plane], carrier: (usize, usize)) -> Result<(Vec<Plane>, DataImagePlan)> {
    let (h, w) = carrier;
    let (normalized, norms) = normalize_planes(planes)?;
    for (i, p) in normalized.iter().enumerate() {
        if p.height > h || p.width > w {
            return Err(Error::Capacity {
                what: format!("plane {i} ({}x{}) against a {h}x{w} carrier", p.height, p.width),
                required: p.height.max(p.width),
                available: if p.height > h { h } else { w },
            });
        }
    }
    let rects: Vec<Rect> = normalized
        .iter()
        .map(|p| Rect {
            height: p.height,
            width: p.width,
        })
        .collect();
    let spots = pack_shelves(&rects, h, w, MAX_CHANNELS).ok_or_else(|| {
        let needed = (MAX_CHANNELS + 1..=rects.len())
            .find(|&n| pack_shelves(&rects, h, w, n).is_some())
            .unwrap_or(rects.len());
        Error::Capacity {
            what: format!("data-image channels for {} planes", rects.len()),
            required: needed,
            available: MAX_CHANNELS,
        }
    })?;
    let n_channels = spots.iter().map(|s| s.0 + 1).max().unwrap_or(1);
    let mut channels: Vec<Plane> = (0..n_channels).map(|_| Plane::zeros(h, w)).collect();
    let mut plan = Vec::with_capacity(planes.len());
    for ((p, norm), (ch, row, col)) in normalized.iter().zip(norms).zip(spots) {
        channels[ch].blit(p, row, col);
        plan.push(PlanePlan {
            norm,
            placement: Placement {
                channel: ch,
                row,
                col,
                height: p.height,
                width: p.width,
            },
        });
    }
    Ok((channels, DataImagePlan::Continuous { planes: plan }))
}

/// Cuts every plane back out of the channels and de-normalizes it.
pub fn inverse_dtoi_continuous(channels: &[Plane], plan: &DataImagePlan) -> Result<Vec<Plane>> {
    let DataImagePlan::Continuous { planes } = plan else {
        return Err(Error::CorruptPlan("expected a continuous-data plan".into()));
    };
    let (h, w) = channels.first().map_or((0, 0), |c| (c.height, c.width));
    if channels.iter().any(|c| (c.height, c.width) != (h, w)) {
        return Err(shape_err("data-image channels differ in size"));
    }
    plan.validate(channels.len(), h, w)?;
    Ok(planes
        .iter()
        .map(|pp| {
            let at = pp.placement;
            let mut p = channels[at.channel].window(at.row, at.col, at.height, at.width);
            p.data.iter_mut().for_each(|v| *v = pp.norm.invert(*v));
            p
        })
        .collect())
}
