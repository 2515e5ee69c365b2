//! CSV layouts for datasets and augmentation sets.
//!
//! * Dataset: `x_0..x_{d-1},label`.
//! * Augmentation set: `x_0..x_{d-1},p_class_0..p_class_{c-1},path_id,step_index`.

use crate::attack::{AugmentationSet, OmadaSample};
use crate::csvfmt::{join_f64, parse_f64, parse_usize, read_table};
use crate::error::{Error, Result};

use super::dataset::Dataset;

fn feature_header(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x_{i}")).collect()
}

pub fn dataset_csv(data: &Dataset) -> String {
    let mut header = feature_header(data.dim());
    header.push("label".into());
    let mut out = header.join(",") + "\n";
    for (r, &y) in data.labels.iter().enumerate() {
        out.push_str(&format!("{},{y}\n", join_f64(data.x.row(r))));
    }
    out
}

pub fn set_csv(set: &AugmentationSet) -> String {
    let d = set.samples.first().map_or(0, |s| s.input.len());
    let c = set.samples.first().map_or(0, |s| s.label.len());
    let mut header = feature_header(d);
    header.extend((0..c).map(|k| format!("p_class_{k}")));
    header.extend(["path_id".to_string(), "step_index".to_string()]);
    let mut out = header.join(",") + "\n";
    for s in &set.samples {
        out.push_str(&format!(
            "{},{},{},{}\n",
            join_f64(&s.input),
            join_f64(&s.label),
            s.path_id,
            s.step_index
        ));
    }
    out
}

pub fn parse_set_csv(reader: impl std::io::BufRead) -> Result<AugmentationSet> {
    let (header, rows) = read_table(reader)?;
    let d = header.iter().filter(|h| h.starts_with("x_")).count();
    let c = header.iter().filter(|h| h.starts_with("p_class_")).count();
    if d == 0 || c == 0 || header.len() != d + c + 2 || header[d + c] != "path_id" {
        return Err(Error::Parse("augmentation set CSV has an unexpected header".into()));
    }
    let samples = rows
        .iter()
        .map(|row| {
            Ok(OmadaSample {
                input: row[..d].iter().map(|f| parse_f64(f)).collect::<Result<_>>()?,
                label: row[d..d + c].iter().map(|f| parse_f64(f)).collect::<Result<_>>()?,
                path_id: parse_usize(&row[d + c])?,
                step_index: parse_usize(&row[d + c + 1])?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AugmentationSet { samples })
}
