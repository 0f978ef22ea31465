//! Shape functions as plain tables.

use std::path::{Path, PathBuf};

use super::{AdditiveModel, Binning};
use crate::data::{format_number, Scaler};
use crate::error::{RamError, Result};

/// One CSV-ready table: a shape function or pair surface.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTable {
    pub file_stem: String,
    /// e.g. `hr | workingday = 1`
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ShapeTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| RamError::io("<memory>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

struct Axis<'a> {
    model: &'a AdditiveModel,
    scaler: Option<&'a Scaler>,
    source: usize,
    binning: &'a Binning,
}

impl Axis<'_> {
    fn header(&self) -> Vec<String> {
        let name = &self.model.features[self.source].name;
        match self.binning {
            Binning::Numeric { .. } => vec![format!("{name}_lower"), format!("{name}_upper")],
            Binning::Categorical { .. } => vec![name.clone()],
        }
    }

    fn cells(&self, b: usize) -> Vec<String> {
        match self.binning.bounds(b) {
            Some((lo, hi)) => [lo, hi]
                .iter()
                .map(|&v| {
                    let v = self.scaler.map_or(v, |s| s.feature_to_original(self.source, v));
                    format!("{v}")
                })
                .collect(),
            None => vec![self.model.features[self.source].render_value(b as f64)],
        }
    }
}

/// Tables in original units when a scaler is given: feature bounds are
/// un-standardized and contributions are multiplied by the target sd.
/// The intercept is reported in each title.
pub fn shape_tables(model: &AdditiveModel, scaler: Option<&Scaler>) -> Vec<ShapeTable> {
    let value_scale = scaler.map_or(1.0, |s| s.target.sd);
    let intercept = scaler.map_or(model.intercept, |s| s.target_to_original(model.intercept));
    let region_text = |s: usize, t: usize| {
        let rs = &model.regionsets[s];
        if rs.n_regions() == 1 {
            String::new()
        } else {
            rs.describe_region(t, &model.features, scaler)
        }
    };
    let mut out = Vec::new();
    for sh in &model.shapes {
        let name = &model.features[sh.source].name;
        let cond = region_text(sh.source, sh.region);
        let axis = Axis {
            model,
            scaler,
            source: sh.source,
            binning: &sh.binning,
        };
        let mut header = axis.header();
        header.push("value".into());
        let rows = (0..sh.values.len())
            .map(|b| {
                let mut r = axis.cells(b);
                r.push(format!("{}", (sh.values[b] + sh.offset) * value_scale));
                r
            })
            .collect();
        let title = if cond.is_empty() { name.clone() } else { format!("{name} | {cond}") };
        out.push(ShapeTable {
            file_stem: format!("shape_{:02}_{}_r{}", sh.source, slug(name), sh.region),
            title: format!("{title} (intercept {})", format_number(intercept)),
            header,
            rows,
        });
    }
    for (k, p) in model.pairs.iter().enumerate() {
        let (na, nb) = (&model.features[p.a.0].name, &model.features[p.b.0].name);
        let conds: Vec<String> = [region_text(p.a.0, p.a.1), region_text(p.b.0, p.b.1)]
            .into_iter()
            .filter(|c| !c.is_empty())
            .collect();
        let axis_a = Axis {
            model,
            scaler,
            source: p.a.0,
            binning: &p.binning_a,
        };
        let axis_b = Axis {
            model,
            scaler,
            source: p.b.0,
            binning: &p.binning_b,
        };
        let mut header = axis_a.header();
        header.extend(axis_b.header());
        header.push("value".into());
        let nbins_b = p.binning_b.n_bins();
        let rows = (0..p.values.len())
            .map(|cell| {
                let mut r = axis_a.cells(cell / nbins_b);
                r.extend(axis_b.cells(cell % nbins_b));
                r.push(format!("{}", p.values[cell] * value_scale));
                r
            })
            .collect();
        let mut title = format!("{na} x {nb}");
        if !conds.is_empty() {
            title = format!("{title} | {}", conds.join(" & "));
        }
        out.push(ShapeTable {
            file_stem: format!("pair_{k:02}_{}_{}", slug(na), slug(nb)),
            title,
            header,
            rows,
        });
    }
    out
}

/// Writes one CSV per table plus `index.csv` mapping files to titles.
pub fn write_shape_tables(model: &AdditiveModel, scaler: Option<&Scaler>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| RamError::io(dir, e))?;
    let tables = shape_tables(model, scaler);
    let mut written = Vec::new();
    let mut index = csv::Writer::from_writer(Vec::new());
    index.write_record(["file", "title"])?;
    for t in &tables {
        let path = dir.join(format!("{}.csv", t.file_stem));
        std::fs::write(&path, t.to_csv()?).map_err(|e| RamError::io(&path, e))?;
        index.write_record([format!("{}.csv", t.file_stem), t.title.clone()])?;
        written.push(path);
    }
    let path = dir.join("index.csv");
    let bytes = index.into_inner().map_err(|e| RamError::io(&path, e.into_error()))?;
    std::fs::write(&path, bytes).map_err(|e| RamError::io(&path, e))?;
    written.push(path);
    Ok(written)
}
