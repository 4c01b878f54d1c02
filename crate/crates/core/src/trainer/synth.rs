//! Deterministic generators for the synthetic training corpus: gradient-noise
//! fields, scatter sets, chart-like carrier renderings and random strings.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::stegnet::tensor::{Real, Tensor};

/// Rescales values to exactly `[0, 1]`; constant input becomes all zeros.
pub fn normalize_unit(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    for v in values.iter_mut() {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// One octave of gradient noise with `cells` lattice cells along the longer side.
fn perlin_octave<R: Rng>(h: usize, w: usize, cells: usize, rng: &mut R, out: &mut [f64], amp: f64) {
    let step = h.max(w) as f64 / cells as f64;
    let gh = (h as f64 / step).ceil() as usize + 1;
    let gw = (w as f64 / step).ceil() as usize + 1;
    let grads: Vec<(f64, f64)> = (0..gh * gw)
        .map(|_| {
            let a = rng.gen_range(0.0..2.0 * PI);
            (libm::cos(a), libm::sin(a))
        })
        .collect();
    for y in 0..h {
        let fy = y as f64 / step;
        let iy = fy as usize;
        let ty = fy - iy as f64;
        for x in 0..w {
            let fx = x as f64 / step;
            let ix = fx as usize;
            let tx = fx - ix as f64;
            let dot = |gy: usize, gx: usize, dy: f64, dx: f64| {
                let (a, b) = grads[gy * gw + gx];
                a * dx + b * dy
            };
            let n00 = dot(iy, ix, ty, tx);
            let n01 = dot(iy, ix + 1, ty, tx - 1.0);
            let n10 = dot(iy + 1, ix, ty - 1.0, tx);
            let n11 = dot(iy + 1, ix + 1, ty - 1.0, tx - 1.0);
            let (u, v) = (fade(tx), fade(ty));
            let top = n00 + u * (n01 - n00);
            let bottom = n10 + u * (n11 - n10);
            out[y * w + x] += amp * (top + v * (bottom - top));
        }
    }
}

/// Multi-octave gradient noise normalized to `[0, 1]`, row-major.
pub fn perlin<R: Rng>(h: usize, w: usize, octaves: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    let base = rng.gen_range(2..=4);
    for o in 0..octaves.max(1) {
        perlin_octave(h, w, base << o, rng, &mut out, libm::pow(0.5, o as f64));
    }
    normalize_unit(&mut out);
    out
}

/// `count` noise images from one seed.
pub fn synth_perlin(count: usize, h: usize, w: usize, octaves: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| perlin(h, w, octaves, &mut rng)).collect()
}

/// Two correlated noise planes standing in for a 2-D vector field.
pub fn vector_field<R: Rng>(h: usize, w: usize, octaves: usize, rng: &mut R) -> [Vec<f64>; 2] {
    let u = perlin(h, w, octaves, rng);
    let other = perlin(h, w, octaves, rng);
    let mix = rng.gen_range(0.2..0.8);
    let mut v: Vec<f64> = u.iter().zip(&other).map(|(a, b)| mix * a + (1.0 - mix) * b).collect();
    normalize_unit(&mut v);
    [u, v]
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

/// Mixture of Gaussian clusters and uniform background points, placed in a
/// randomly scaled and shifted coordinate frame.
pub fn scatter<R: Rng>(n: usize, rng: &mut R) -> Vec<(f64, f64)> {
    let clusters: Vec<(f64, f64, f64, f64)> = (0..rng.gen_range(1..=4))
        .map(|_| {
            (
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.02..0.15),
                rng.gen_range(0.02..0.15),
            )
        })
        .collect();
    let uniform = rng.gen_range(0.0..0.3);
    let (sx, sy) = (libm::pow(10.0, rng.gen_range(-1.0..3.0)), libm::pow(10.0, rng.gen_range(-1.0..3.0)));
    let (ox, oy) = (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
    (0..n)
        .map(|_| {
            let (x, y) = if rng.gen_bool(uniform) {
                (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))
            } else {
                let (cx, cy, sdx, sdy) = clusters[rng.gen_range(0..clusters.len())];
                (cx + sdx * gaussian(rng), cy + sdy * gaussian(rng))
            };
            (ox + sx * x, oy + sy * y)
        })
        .collect()
}

pub fn synth_scatter(count: usize, n_points: usize, seed: u64) -> Vec<Vec<(f64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| scatter(n_points, &mut rng)).collect()
}

const ALNUM: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

/// Random alphanumeric string with length drawn uniformly from `min..=max`.
pub fn random_text<R: Rng>(min: usize, max: usize, rng: &mut R) -> String {
    let len = rng.gen_range(min..=max);
    (0..len).map(|_| ALNUM[rng.gen_range(0..ALNUM.len())] as char).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartKind {
    Bar,
    Line,
    Scatter,
}

struct Canvas {
    h: usize,
    w: usize,
    rgb: Vec<[f64; 3]>,
}

impl Canvas {
    fn fill_rect(&mut self, y0: isize, x0: isize, y1: isize, x1: isize, c: [f64; 3]) {
        let (y0, y1) = (y0.max(0) as usize, (y1.max(0) as usize).min(self.h));
        let (x0, x1) = (x0.max(0) as usize, (x1.max(0) as usize).min(self.w));
        for y in y0..y1 {
            for x in x0..x1 {
                self.rgb[y * self.w + x] = c;
            }
        }
    }

    fn dot(&mut self, cy: f64, cx: f64, r: f64, c: [f64; 3]) {
        let (y0, y1) = ((cy - r).floor() as isize, (cy + r).ceil() as isize + 1);
        let (x0, x1) = ((cx - r).floor() as isize, (cx + r).ceil() as isize + 1);
        for y in y0.max(0)..y1.min(self.h as isize) {
            for x in x0.max(0)..x1.min(self.w as isize) {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                if dy * dy + dx * dx <= r * r {
                    self.rgb[y as usize * self.w + x as usize] = c;
                }
            }
        }
    }

    fn line(&mut self, (ya, xa): (f64, f64), (yb, xb): (f64, f64), r: f64, c: [f64; 3]) {
        let n = (libm::fabs(yb - ya).max(libm::fabs(xb - xa)) * 2.0).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            self.dot(ya + t * (yb - ya), xa + t * (xb - xa), r, c);
        }
    }
}

fn color<R: Rng>(rng: &mut R) -> [f64; 3] {
    let base = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
    let k = rng.gen_range(0..3);
    let mut c = base;
    c[k] *= 0.4;
    c
}

/// Renders a simple bar, line or scatter chart as an RGB tensor in `[0, 1]`.
pub fn chart<T: Real, R: Rng>(kind: ChartKind, h: usize, w: usize, rng: &mut R) -> Tensor<T> {
    let bg = {
        let g = rng.gen_range(0.9..1.0);
        [g, g - rng.gen_range(0.0..0.05), g - rng.gen_range(0.0..0.05)]
    };
    let mut cv = Canvas { h, w, rgb: vec![bg; h * w] };
    let (top, left) = ((h as f64 * 0.1) as isize, (w as f64 * 0.12) as isize);
    let (bottom, right) = ((h as f64 * 0.88) as isize, (w as f64 * 0.95) as isize);
    let axis = [0.2, 0.2, 0.2];
    let grid = [bg[0] * 0.9, bg[1] * 0.9, bg[2] * 0.9];
    let n_grid = rng.gen_range(2..6);
    for i in 0..n_grid {
        let y = top + (bottom - top) * i as isize / n_grid as isize;
        cv.fill_rect(y, left, y + 1, right, grid);
    }
    // title block and tick labels as dark dashes
    let title_w = rng.gen_range(0.2..0.6) * w as f64;
    let tx = (w as f64 - title_w) / 2.0;
    cv.fill_rect(top / 3, tx as isize, top / 3 + (top / 3).max(1), (tx + title_w) as isize, axis);
    for i in 0..=n_grid {
        let y = top + (bottom - top) * i as isize / n_grid as isize;
        cv.fill_rect(y - 1, left / 4, y + 1, left * 3 / 4, [0.35, 0.35, 0.35]);
    }
    let (ph, pw) = ((bottom - top) as f64, (right - left) as f64);
    match kind {
        ChartKind::Bar => {
            let n = rng.gen_range(3..12);
            let c = color(rng);
            let slot = pw / n as f64;
            for i in 0..n {
                let v = rng.gen_range(0.1..1.0) * ph;
                let x0 = left as f64 + slot * (i as f64 + 0.15);
                let x1 = left as f64 + slot * (i as f64 + 0.85);
                cv.fill_rect((bottom as f64 - v) as isize, x0 as isize, bottom, x1 as isize, c);
            }
        }
        ChartKind::Line => {
            for _ in 0..rng.gen_range(1..4) {
                let c = color(rng);
                let n = rng.gen_range(5..30);
                let mut v = rng.gen_range(0.2..0.8);
                let mut prev = None;
                for i in 0..n {
                    v = (v + rng.gen_range(-0.15f64..0.15)).clamp(0.0, 1.0);
                    let p = (bottom as f64 - v * ph, left as f64 + pw * i as f64 / (n - 1) as f64);
                    if let Some(q) = prev {
                        cv.line(q, p, 0.8, c);
                    }
                    prev = Some(p);
                }
            }
        }
        ChartKind::Scatter => {
            let pts = scatter(rng.gen_range(20..300), rng);
            let c = color(rng);
            let r = rng.gen_range(0.8..2.5);
            let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
            for &(x, y) in &pts {
                lo = (lo.0.min(x), lo.1.min(y));
                hi = (hi.0.max(x), hi.1.max(y));
            }
            for &(x, y) in &pts {
                let fx = (x - lo.0) / (hi.0 - lo.0).max(1e-12);
                let fy = (y - lo.1) / (hi.1 - lo.1).max(1e-12);
                cv.dot(bottom as f64 - fy * ph, left as f64 + fx * pw, r, c);
            }
        }
    }
    cv.fill_rect(top, left - 1, bottom, left + 1, axis);
    cv.fill_rect(bottom - 1, left, bottom + 1, right, axis);
    Tensor::from_fn(3, h, w, |c, y, x| T::lit(cv.rgb[y * w + x][c].clamp(0.0, 1.0)))
}

/// Chart of a random kind.
pub fn random_chart<T: Real, R: Rng>(h: usize, w: usize, rng: &mut R) -> Tensor<T> {
    let kind = match rng.gen_range(0..3) {
        0 => ChartKind::Bar,
        1 => ChartKind::Line,
        _ => ChartKind::Scatter,
    };
    chart(kind, h, w, rng)
}
