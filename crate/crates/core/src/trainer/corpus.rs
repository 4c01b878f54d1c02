//! Training samples: a chart carrier plus a randomly laid out secret stack.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::synth::{perlin, random_chart, random_text, scatter, vector_field};
use crate::dtoi::{discrete_images, Plane};
use crate::error::Result;
use crate::stegnet::{SecretStack, Tensor};

/// Renders text as a binary QR image (1 = dark module).
pub type QrRenderer<'a> = dyn Fn(&str) -> Result<Plane> + 'a;

/// Kind of data hidden in a sample's data channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    /// 1-3 noise planes.
    Continuous,
    /// x-image and y-image of a scatter set.
    Discrete,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub size: usize,
    /// Square sample side, even.
    pub crop: usize,
    /// Probability that a sample carries discrete rather than continuous data.
    pub p_discrete: f64,
    /// Probability that a sample carries a QR channel.
    pub p_qr: f64,
    /// Interpolation factor for discrete data images.
    pub k: usize,
    pub m_qr: f64,
    pub octaves: usize,
    /// Upper bound on QR text length.
    pub max_text: usize,
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub carrier: Tensor<f32>,
    pub secrets: SecretStack<f32>,
    pub kind: DataKind,
    pub text: Option<String>,
}

fn to_tensor(p: &Plane, quantize: bool) -> Tensor<f32> {
    Tensor::from_fn(1, p.height, p.width, |_, y, x| {
        let v = p.get(y, x);
        (if quantize { crate::dtoi::dequantize(crate::dtoi::quantize(v)) } else { v }) as f32
    })
}

/// Scatter set sized to fill between half and all of the crop's grid.
fn discrete_planes<R: Rng>(crop: usize, k: usize, rng: &mut R) -> Result<Vec<Plane>> {
    let side = crop / (k + 1);
    let cells = side * side;
    let n = rng.gen_range(cells / 2..=cells).max(1);
    let pts = scatter(n, rng);
    let cols = side.min((n as f64).sqrt().ceil() as usize).max(1);
    let rows = n.div_ceil(cols);
    let (x, y, _) = discrete_images(&pts, rows, cols, k)?;
    Ok(alloc::vec![x, y])
}

fn continuous_planes<R: Rng>(crop: usize, octaves: usize, rng: &mut R) -> Result<Vec<Plane>> {
    let n = rng.gen_range(1..=3);
    let mut planes = Vec::with_capacity(n);
    if n >= 2 {
        let [u, v] = vector_field(crop, crop, octaves, rng);
        planes.push(Plane::from_vec(crop, crop, u)?);
        planes.push(Plane::from_vec(crop, crop, v)?);
    }
    while planes.len() < n {
        planes.push(Plane::from_vec(crop, crop, perlin(crop, crop, octaves, rng))?);
    }
    Ok(planes)
}

/// Random `crop x crop` window of a QR rendering, scaled by `m_qr`.
fn qr_window<R: Rng>(qr: &Plane, crop: usize, m_qr: f64, rng: &mut R) -> Tensor<f32> {
    let r0 = rng.gen_range(0..=qr.height.saturating_sub(crop));
    let c0 = rng.gen_range(0..=qr.width.saturating_sub(crop));
    Tensor::from_fn(1, crop.min(qr.height), crop.min(qr.width), |_, y, x| {
        (qr.get(r0 + y, c0 + x) * m_qr) as f32
    })
}

pub fn sample<R: Rng>(spec: &CorpusSpec, render_qr: Option<&QrRenderer<'_>>, rng: &mut R) -> Result<Sample> {
    let crop = spec.crop;
    let carrier = random_chart::<f32, _>(crop, crop, rng);
    let kind = if rng.gen_bool(spec.p_discrete) {
        DataKind::Discrete
    } else {
        DataKind::Continuous
    };
    let planes = match kind {
        DataKind::Discrete => discrete_planes(crop, spec.k, rng)?,
        DataKind::Continuous => continuous_planes(crop, spec.octaves, rng)?,
    };
    let data: Vec<Tensor<f32>> = planes.iter().map(|p| to_tensor(p, true)).collect();
    let (qr, text) = match render_qr {
        Some(render) if rng.gen_bool(spec.p_qr) => {
            let text = random_text(1, spec.max_text, rng);
            let img = render(&text)?;
            (Some(qr_window(&img, crop, spec.m_qr, rng)), Some(text))
        }
        _ => (None, None),
    };
    let secrets = SecretStack::new(crop, crop, &data, qr.as_ref())?;
    Ok(Sample {
        carrier,
        secrets,
        kind,
        text,
    })
}

/// `spec.size` samples drawn from one seed.
pub fn build(spec: &CorpusSpec, render_qr: Option<&QrRenderer<'_>>, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.size).map(|_| sample(spec, render_qr, &mut rng)).collect()
}
