//! Template libraries and their on-disk layout.
//!
//! A library directory holds one subdirectory per class with one silhouette
//! image per template, plus `index.csv` with columns
//! `class_index,class_name,file`. Class indices are 0-based and contiguous;
//! `file` is relative to the library directory. Rows keep template order
//! within a class.

use std::fs;
use std::path::{Path, PathBuf};

use super::{extract_points, shape_context, ClassifyError, PointSet, ShapeContext};
use crate::image::BinaryMask;
use crate::scene::{load_mask, save_mask};

pub const INDEX_FILE: &str = "index.csv";

/// Boundary sampling and histogram binning shared by a library and its
/// queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptorConfig {
    pub n_points: usize,
    pub r_bins: usize,
    pub theta_bins: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            n_points: 64,
            r_bins: 5,
            theta_bins: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub id: String,
    pub mask: BinaryMask,
    pub points: PointSet,
    pub descriptor: ShapeContext,
}

impl Template {
    pub fn from_mask(
        id: impl Into<String>,
        mask: BinaryMask,
        config: DescriptorConfig,
    ) -> Result<Self, ClassifyError> {
        let points = extract_points(&mask, config.n_points)?;
        let descriptor = shape_context(&points, config.r_bins, config.theta_bins);
        Ok(Self {
            id: id.into(),
            mask,
            points,
            descriptor,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateClass {
    pub name: String,
    pub templates: Vec<Template>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateLibrary {
    classes: Vec<TemplateClass>,
    config: DescriptorConfig,
}

fn lib_err(m: impl Into<String>) -> ClassifyError {
    ClassifyError::Library(m.into())
}

impl TemplateLibrary {
    /// Every class needs a unique, non-empty name and at least one template.
    pub fn new(
        classes: Vec<TemplateClass>,
        config: DescriptorConfig,
    ) -> Result<Self, ClassifyError> {
        if classes.is_empty() {
            return Err(lib_err("no classes"));
        }
        for (j, c) in classes.iter().enumerate() {
            if c.templates.is_empty() {
                return Err(lib_err(format!("class `{}` has no templates", c.name)));
            }
            if c.name.is_empty() || c.name.contains(['/', '\\', ',']) {
                return Err(lib_err(format!("invalid class name `{}`", c.name)));
            }
            if classes[..j].iter().any(|o| o.name == c.name) {
                return Err(lib_err(format!("duplicate class `{}`", c.name)));
            }
        }
        Ok(Self { classes, config })
    }

    /// Builds descriptors for named masks, class by class.
    pub fn from_masks(
        classes: Vec<(String, Vec<(String, BinaryMask)>)>,
        config: DescriptorConfig,
    ) -> Result<Self, ClassifyError> {
        let classes = classes
            .into_iter()
            .map(|(name, masks)| {
                let templates = masks
                    .into_iter()
                    .map(|(id, m)| Template::from_mask(id, m, config))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(TemplateClass { name, templates })
            })
            .collect::<Result<Vec<_>, ClassifyError>>()?;
        Self::new(classes, config)
    }

    pub fn classes(&self) -> &[TemplateClass] {
        &self.classes
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn descriptor_config(&self) -> DescriptorConfig {
        self.config
    }

    /// Library restricted to `selection[j]` template indices of class `j`.
    pub fn select(&self, selection: &[Vec<usize>]) -> Result<Self, ClassifyError> {
        if selection.len() != self.classes.len() {
            return Err(lib_err(format!(
                "selection covers {} of {} classes",
                selection.len(),
                self.classes.len()
            )));
        }
        let classes = self
            .classes
            .iter()
            .zip(selection)
            .map(|(c, idx)| {
                let templates = idx
                    .iter()
                    .map(|&i| {
                        c.templates.get(i).cloned().ok_or_else(|| {
                            lib_err(format!("class `{}` has no template {i}", c.name))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(TemplateClass {
                    name: c.name.clone(),
                    templates,
                })
            })
            .collect::<Result<Vec<_>, ClassifyError>>()?;
        Self::new(classes, self.config)
    }

    /// Reads `index.csv` in `dir` and every referenced silhouette.
    pub fn load(dir: &Path, config: DescriptorConfig) -> Result<Self, ClassifyError> {
        Self::load_index(&dir.join(INDEX_FILE), config)
    }

    /// Reads an index file anywhere; relative paths resolve against the
    /// index's directory.
    pub fn load_index(index: &Path, config: DescriptorConfig) -> Result<Self, ClassifyError> {
        let mut classes: Vec<(String, Vec<(String, BinaryMask)>)> = Vec::new();
        for e in read_index(index)? {
            if e.class_index == classes.len() {
                classes.push((e.class_name.clone(), Vec::new()));
            }
            classes[e.class_index].1.push((e.id, load_mask(&e.path)?));
        }
        Self::from_masks(classes, config)
    }

    /// Writes every template as `<class>/<id>.png` plus the index.
    pub fn save(&self, dir: &Path) -> Result<(), ClassifyError> {
        let io = |e: std::io::Error| lib_err(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        let mut w =
            csv::Writer::from_path(dir.join(INDEX_FILE)).map_err(|e| lib_err(e.to_string()))?;
        w.write_record(["class_index", "class_name", "file"])
            .map_err(|e| lib_err(e.to_string()))?;
        for (j, c) in self.classes.iter().enumerate() {
            fs::create_dir_all(dir.join(&c.name)).map_err(io)?;
            for t in &c.templates {
                let rel = format!("{}/{}.png", c.name, t.id);
                save_mask(&t.mask, dir.join(&rel))?;
                w.write_record([j.to_string(), c.name.clone(), rel])
                    .map_err(|e| lib_err(e.to_string()))?;
            }
        }
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub class_index: usize,
    pub class_name: String,
    /// File stem of the silhouette.
    pub id: String,
    /// Resolved against the index's directory.
    pub path: PathBuf,
}

/// Parses an index file. The first three columns must be
/// `class_index,class_name,file`; further columns are ignored.
pub fn read_index(index: &Path) -> Result<Vec<IndexEntry>, ClassifyError> {
    let base = index.parent().unwrap_or(Path::new("."));
    let mut reader =
        csv::Reader::from_path(index).map_err(|e| lib_err(format!("{}: {e}", index.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| lib_err(e.to_string()))?
        .clone();
    if headers.iter().take(3).collect::<Vec<_>>() != ["class_index", "class_name", "file"] {
        return Err(lib_err(format!(
            "{}: expected header class_index,class_name,file",
            index.display()
        )));
    }
    let mut names: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| lib_err(format!("{}: {e}", index.display())))?;
        let line = row + 2;
        let j: usize = record[0]
            .parse()
            .map_err(|_| lib_err(format!("line {line}: bad class index")))?;
        let name = record[1].to_string();
        if j == names.len() {
            names.push(name.clone());
        } else if j > names.len() {
            return Err(lib_err(format!(
                "line {line}: class indices must be contiguous from 0"
            )));
        }
        if names[j] != name {
            return Err(lib_err(format!(
                "line {line}: class {j} is named both `{}` and `{name}`",
                names[j]
            )));
        }
        let file = &record[2];
        let id = Path::new(file)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(file)
            .to_string();
        out.push(IndexEntry {
            class_index: j,
            class_name: name,
            id,
            path: base.join(file),
        });
    }
    if out.is_empty() {
        return Err(lib_err(format!("{}: no entries", index.display())));
    }
    Ok(out)
}
