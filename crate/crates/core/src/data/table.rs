//! Feature-table files and synthetic dataset manifests.
//!
//! A feature table is comma-separated text with header
//! `id,split,label,modality,f0,...,f{d-1}` and one row per
//! (sample, modality). Leading `# key=value` lines carry metadata.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::{zipf_class_sizes, GeneratorConfig};
use super::{Dataset, Modality, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::loss::Label;
use crate::scalar::Scalar;
use crate::textfile;

pub fn write_feature_table<T: Scalar>(path: &Path, dataset: &Dataset<T>, fingerprint: Option<&str>) -> Result<()> {
    let d = dataset.feature_dim();
    let mut out = String::with_capacity(dataset.len() * 2 * (d * 20 + 32));
    textfile::write_metadata(&mut out, fingerprint);
    out.push_str("id,split,label,modality");
    for j in 0..d {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for r in dataset.records() {
        textfile::check_id(&r.id)?;
        for m in Modality::ALL {
            out.push_str(&format!("{},{},{},{}", r.id, r.split.as_str(), r.label.index(), m.as_str()));
            for v in r.features(m) {
                out.push(',');
                out.push_str(&format!("{v:?}"));
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

struct Partial<T> {
    line: usize,
    split: Split,
    label: usize,
    rgb: Option<Vec<T>>,
    depth: Option<Vec<T>>,
}

/// Reads a feature table; the class count is one past the largest label.
pub fn load_feature_table<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let (_, mut lines) = textfile::split_metadata(&text);
    let Some((header_line, header)) = lines.next() else {
        return Err(err(1, "missing header".into()));
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[..4] != ["id", "split", "label", "modality"] {
        return Err(err(header_line, "header must be `id,split,label,modality,f0,...`".into()));
    }
    let d = cols.len() - 4;
    for (j, c) in cols[4..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(err(header_line, format!("expected column f{j}, found `{c}`")));
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut partial: HashMap<String, Partial<T>> = HashMap::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 4 {
            return Err(err(
                line_no,
                format!("expected {} features, found {}", d, fields.len().saturating_sub(4)),
            ));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(err(line_no, "empty sample id".into()));
        }
        let split = Split::parse(fields[1]).ok_or_else(|| err(line_no, format!("unknown split `{}`", fields[1])))?;
        let label: usize = fields[2]
            .parse()
            .map_err(|_| err(line_no, format!("bad label `{}`", fields[2])))?;
        let modality =
            Modality::parse(fields[3]).ok_or_else(|| err(line_no, format!("unknown modality `{}`", fields[3])))?;
        let features = fields[4..]
            .iter()
            .map(|f| match f.parse::<T>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(err(line_no, format!("bad feature value `{f}`"))),
            })
            .collect::<Result<Vec<T>>>()?;

        let entry = partial.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            Partial {
                line: line_no,
                split,
                label,
                rgb: None,
                depth: None,
            }
        });
        if entry.split != split || entry.label != label {
            return Err(err(
                line_no,
                format!("sample {id} disagrees with line {} on split or label", entry.line),
            ));
        }
        let slot = match modality {
            Modality::Rgb => &mut entry.rgb,
            Modality::Depth => &mut entry.depth,
        };
        if slot.is_some() {
            return Err(err(line_no, format!("duplicate {modality} row for sample {id}")));
        }
        *slot = Some(features);
    }

    let num_classes = partial.values().map(|p| p.label + 1).max().unwrap_or(0);
    let mut records = Vec::with_capacity(order.len());
    for id in order {
        let p = partial.remove(&id).expect("recorded id");
        let (Some(rgb), Some(depth)) = (p.rgb, p.depth) else {
            return Err(Error::Alignment(format!(
                "sample {id} (line {}) is missing one modality in {}",
                p.line,
                path.display()
            )));
        };
        records.push(SampleRecord {
            id,
            label: Label(p.label),
            split: p.split,
            rgb,
            depth,
        });
    }
    Dataset::new(num_classes, d, records)
}

const MANIFEST_FORMAT: &str = "focal-anneal-dataset";

/// Everything needed to regenerate a synthetic dataset bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub feature_dim: usize,
    pub class_sizes: Vec<usize>,
    pub generator: GeneratorConfig,
}

impl DatasetManifest {
    pub fn new(generator: &GeneratorConfig) -> Result<Self> {
        generator.validate()?;
        Ok(Self {
            format: MANIFEST_FORMAT.into(),
            version: 1,
            feature_dim: generator.feature_dim(),
            class_sizes: zipf_class_sizes(generator.num_classes, generator.num_samples, generator.zipf_exponent)?,
            generator: generator.clone(),
        })
    }
}

pub fn write_manifest(path: &Path, generator: &GeneratorConfig) -> Result<()> {
    let text = serde_json::to_string_pretty(&DatasetManifest::new(generator)?)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.format != MANIFEST_FORMAT || manifest.version != 1 {
        return Err(Error::Data(format!("{} is not a dataset manifest", path.display())));
    }
    Ok(manifest)
}
