//! First-fit shelf packing of rectangles into a few fixed-size bins.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub height: usize,
    pub width: usize,
}

struct Shelf {
    top: usize,
    height: usize,
    used: usize,
}

/// Packs `rects` into at most `max_bins` bins of `bin_h x bin_w`.
/// Returns `(bin, row, col)` per rectangle in input order, or `None` when
/// they do not fit.
pub fn pack_shelves(rects: &[Rect], bin_h: usize, bin_w: usize, max_bins: usize) -> Option<Vec<(usize, usize, usize)>> {
    let mut order: Vec<usize> = (0..rects.len()).collect();
    order.sort_by(|&a, &b| rects[b].height.cmp(&rects[a].height).then(rects[b].width.cmp(&rects[a].width)));
    let mut bins: Vec<Vec<Shelf>> = Vec::new();
    let mut out = vec![(0, 0, 0); rects.len()];
    for i in order {
        let r = rects[i];
        if r.height > bin_h || r.width > bin_w {
            return None;
        }
        let mut placed = false;
        'bins: for (b, shelves) in bins.iter_mut().enumerate() {
            for s in shelves.iter_mut() {
                if r.height <= s.height && s.used + r.width <= bin_w {
                    out[i] = (b, s.top, s.used);
                    s.used += r.width;
                    placed = true;
                    break 'bins;
                }
            }
            let top = shelves.last().map_or(0, |s| s.top + s.height);
            if top + r.height <= bin_h {
                out[i] = (b, top, 0);
                shelves.push(Shelf {
                    top,
                    height: r.height,
                    used: r.width,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            if bins.len() == max_bins {
                return None;
            }
            out[i] = (bins.len(), 0, 0);
            bins.push(vec![Shelf {
                top: 0,
                height: r.height,
                used: r.width,
            }]);
        }
    }
    Some(out)
}
