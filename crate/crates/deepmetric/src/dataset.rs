//! Dataset construction: synthetic generators and CSV manifests.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use deepmetric_core::data::{gen_blobs, gen_glyphs, Dataset, SampleShape};
use deepmetric_core::rng;
use image::ImageReader;

use crate::config::{stream, DatasetSpec};
use crate::error::{CliError, Result};

/// Builds the dataset named by `spec`; generator seeds derive from `seed`.
pub fn load_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    let data_seed = rng::derive(seed, &[stream::DATA]);
    Ok(match spec {
        DatasetSpec::Blobs { classes, per_class, dim, separation } => {
            gen_blobs(*classes, *per_class, *dim, *separation, data_seed)?
        }
        DatasetSpec::Glyphs { classes, per_class, size } => gen_glyphs(*classes, *per_class, *size, data_seed)?,
        DatasetSpec::Manifest { path } => load_manifest(path)?,
    })
}

enum Entry {
    Vector(Vec<f64>),
    Image { width: usize, height: usize, pixels: Vec<f64> },
}

/// Reads a `path_or_vector,label` manifest. The first column is either a
/// vector literal (numbers separated by `;` or spaces) or a PGM image path
/// relative to the manifest. Pixels are scaled to [0, 1]. Class ids follow
/// the sorted label names (numerically when every label is an integer).
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let err = |row: usize, detail: String| CliError::Manifest { path: path.to_path_buf(), row, detail };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));

    let mut rows: Vec<(Entry, String)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| err(row, e.to_string()))?;
        if record.len() != 2 {
            return Err(err(row, format!("expected 2 columns, found {}", record.len())));
        }
        let (item, label) = (&record[0], &record[1]);
        if row == 1 && item == "path_or_vector" && label == "label" {
            continue;
        }
        if label.is_empty() {
            return Err(err(row, "empty label".into()));
        }
        let entry = match parse_vector(item) {
            Some(v) => Entry::Vector(v),
            None => read_pgm(&base.join(item)).map_err(|d| err(row, d))?,
        };
        rows.push((entry, label.to_string()));
    }
    if rows.is_empty() {
        return Err(err(0, "manifest has no samples".into()));
    }

    let shape = match &rows[0].0 {
        Entry::Vector(v) => SampleShape::Vector { len: v.len() },
        Entry::Image { width, height, .. } => SampleShape::Grid { height: *height, width: *width },
    };
    let mut samples = Vec::with_capacity(rows.len() * shape.len());
    for (i, (entry, _)) in rows.iter().enumerate() {
        let (this, data) = match entry {
            Entry::Vector(v) => (SampleShape::Vector { len: v.len() }, v),
            Entry::Image { width, height, pixels } => (SampleShape::Grid { height: *height, width: *width }, pixels),
        };
        if this != shape {
            return Err(err(i + 1, format!("sample is {this:?} but earlier samples are {shape:?}")));
        }
        samples.extend_from_slice(data);
    }

    let names = sorted_names(rows.iter().map(|(_, l)| l.as_str()));
    let labels = rows
        .iter()
        .map(|(_, l)| names.iter().position(|n| n == l).expect("label collected above"))
        .collect();
    Ok(Dataset::new(shape, samples, labels, names, format!("manifest:{}", path.display()))?)
}

fn sorted_names<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let unique: BTreeSet<&str> = labels.collect();
    let mut names: Vec<String> = unique.into_iter().map(str::to_string).collect();
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().expect("checked"));
    }
    names
}

fn parse_vector(text: &str) -> Option<Vec<f64>> {
    let values: Option<Vec<f64>> = text
        .split(|c: char| c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().ok())
        .collect();
    values.filter(|v| !v.is_empty())
}

fn read_pgm(path: &PathBuf) -> std::result::Result<Entry, String> {
    let reader = ImageReader::open(path)
        .map_err(|e| format!("{}: {e}", path.display()))?
        .with_guessed_format()
        .map_err(|e| format!("{}: {e}", path.display()))?;
    if reader.format() != Some(image::ImageFormat::Pnm) {
        return Err(format!("{}: not a PGM image", path.display()));
    }
    let img = reader.decode().map_err(|e| format!("{}: {e}", path.display()))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        image::DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|p| f64::from(p) / 255.0).collect(),
        image::DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(|p| f64::from(p) / 65535.0).collect(),
        other => return Err(format!("{}: expected a greyscale PGM, got {:?}", path.display(), other.color())),
    };
    Ok(Entry::Image { width, height, pixels })
}
