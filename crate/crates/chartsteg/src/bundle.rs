//! JSON files for chart data and chart information.
//!
//! Data:
//! ```json
//! {"kind": "continuous", "fields": [{"height": 2, "width": 2, "values": [0, 1, 2, 3]}]}
//! {"kind": "discrete", "points": [[0.5, 1.0], [2.0, -3.0]]}
//! ```
//! Field values are row-major. Info:
//! ```json
//! {"spec_text": "...", "aux": {"title": "..."}}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chartsteg_core::dtoi::Plane;
use chartsteg_core::payload::ChartInfo;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Field {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChartData {
    Continuous { fields: Vec<Field> },
    Discrete { points: Vec<[f64; 2]> },
}

impl ChartData {
    pub fn planes(fields: &[Field]) -> Result<Vec<Plane>> {
        Ok(fields
            .iter()
            .map(|f| Plane::from_vec(f.height, f.width, f.values.clone()))
            .collect::<chartsteg_core::Result<_>>()?)
    }

    pub fn from_planes(planes: &[Plane]) -> Self {
        Self::Continuous {
            fields: planes
                .iter()
                .map(|p| Field {
                    height: p.height,
                    width: p.width,
                    values: p.data.clone(),
                })
                .collect(),
        }
    }

    pub fn pairs(points: &[[f64; 2]]) -> Vec<(f64, f64)> {
        points.iter().map(|p| (p[0], p[1])).collect()
    }

    pub fn from_pairs(points: &[(f64, f64)]) -> Self {
        Self::Discrete {
            points: points.iter().map(|&(x, y)| [x, y]).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoFile {
    #[serde(default)]
    pub spec_text: String,
    #[serde(default)]
    pub aux: BTreeMap<String, String>,
}

impl From<InfoFile> for ChartInfo {
    fn from(f: InfoFile) -> Self {
        ChartInfo {
            spec_text: f.spec_text,
            aux: f.aux,
        }
    }
}

impl From<&ChartInfo> for InfoFile {
    fn from(i: &ChartInfo) -> Self {
        InfoFile {
            spec_text: i.spec_text.clone(),
            aux: i.aux.clone(),
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::format(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_schema_parses_both_kinds() {
        let c: ChartData =
            serde_json::from_str(r#"{"kind":"continuous","fields":[{"height":1,"width":2,"values":[1,2.5]}]}"#).unwrap();
        let ChartData::Continuous { fields } = &c else { panic!() };
        assert_eq!(ChartData::planes(fields).unwrap()[0].data, vec![1.0, 2.5]);
        let d: ChartData = serde_json::from_str(r#"{"kind":"discrete","points":[[1,2],[3,4]]}"#).unwrap();
        assert_eq!(d, ChartData::from_pairs(&[(1.0, 2.0), (3.0, 4.0)]));
    }

    #[test]
    fn bad_field_shape_is_an_error() {
        let c: ChartData =
            serde_json::from_str(r#"{"kind":"continuous","fields":[{"height":2,"width":2,"values":[1]}]}"#).unwrap();
        let ChartData::Continuous { fields } = &c else { panic!() };
        assert!(ChartData::planes(fields).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<InfoFile>(r#"{"spec":"x"}"#).is_err());
        let i: InfoFile = serde_json::from_str(r#"{"spec_text":"x"}"#).unwrap();
        assert!(i.aux.is_empty());
    }
}
