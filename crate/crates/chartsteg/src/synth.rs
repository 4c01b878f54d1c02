//! Synthetic chart carriers and example bundles on disk.

use std::fs;
use std::path::{Path, PathBuf};

use chartsteg_core::stegnet::EncodedImage;
use chartsteg_core::trainer::synth::{perlin, random_chart, scatter, ChartKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::{write_json, ChartData, Field, InfoFile};
use crate::error::{AppError, Result};
use crate::image_io::write_rgb;

/// Paths of one example bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct BundlePaths {
    pub carrier: PathBuf,
    pub data: PathBuf,
    pub info: PathBuf,
}

fn spec_text(kind: &str, title: &str, n: usize) -> String {
    format!(
        "{{\"mark\": \"{kind}\", \"title\": \"{title}\", \"encoding\": {{\"x\": {{\"field\": \"x\", \"type\": \"quantitative\"}}, \
         \"y\": {{\"field\": \"y\", \"type\": \"quantitative\"}}}}, \"n\": {n}}}"
    )
}

/// Example bundle contents for index `i`: even indices carry a scatter set,
/// odd ones a gradient-noise field.
pub fn bundle<R: Rng>(i: usize, size: usize, rng: &mut R) -> (EncodedImage, ChartData, InfoFile) {
    let kind = [ChartKind::Scatter, ChartKind::Line, ChartKind::Bar][i % 3];
    let carrier = EncodedImage::from_tensor(&chartsteg_core::trainer::synth::chart::<f32, _>(kind, size, size, rng));
    let (data, mark, n) = if i.is_multiple_of(2) {
        let n = rng.gen_range(200..2000);
        (ChartData::from_pairs(&scatter(n, rng)), "point", n)
    } else {
        let side = size / 2;
        let (scale, shift) = (rng.gen_range(1.0..100.0), rng.gen_range(-50.0..50.0));
        let values = perlin(side, side, 4, rng).into_iter().map(|v| v * scale + shift).collect();
        let field = Field {
            height: side,
            width: side,
            values,
        };
        (ChartData::Continuous { fields: vec![field] }, "rect", side * side)
    };
    let title = format!("Sample chart {i}");
    let mut info = InfoFile {
        spec_text: spec_text(mark, &title, n),
        ..Default::default()
    };
    info.aux.insert("title".into(), title);
    info.aux.insert("chart_type".into(), mark.into());
    (carrier, data, info)
}

/// Writes `count` bundles as `chart_<i>.png`, `data_<i>.json`, `info_<i>.json`.
pub fn write_samples(dir: &Path, count: usize, size: usize, seed: u64) -> Result<Vec<BundlePaths>> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let (carrier, data, info) = bundle(i, size, &mut rng);
            let paths = BundlePaths {
                carrier: dir.join(format!("chart_{i}.png")),
                data: dir.join(format!("data_{i}.json")),
                info: dir.join(format!("info_{i}.json")),
            };
            write_rgb(&paths.carrier, &carrier)?;
            write_json(&paths.data, &data)?;
            write_json(&paths.info, &info)?;
            Ok(paths)
        })
        .collect()
}

/// A carrier-only chart, for corpora.
pub fn chart_image<R: Rng>(size: usize, rng: &mut R) -> EncodedImage {
    EncodedImage::from_tensor(&random_chart::<f32, _>(size, size, rng))
}
