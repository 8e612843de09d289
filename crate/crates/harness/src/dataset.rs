//! Attribute datasets on disk.
//!
//! A dataset directory holds
//!
//! - `labels.txt`: attribute names on the first line, then one line per
//!   image `id v1 ... vK` with values in `{-1, 1}` or `{0, 1}`. An optional
//!   leading line holding only the image count is skipped, as in CelebA's
//!   attribute list.
//! - `split.txt`: one line per image `id tag`, the tag being `train`,
//!   `val` or `test`, or CelebA's `0`, `1`, `2`.
//! - `images/<id>`: one `(H, W, C)` tensor file per image.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tenscorr_core::io::{read_tensor, write_tensor};
use tenscorr_core::{DenseTensor, Mat, Matrix};
use tenscorr_mtcn::{Batch, Images};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(tag: &str) -> Option<Split> {
        match tag {
            "train" | "0" => Some(Split::Train),
            "val" | "1" => Some(Split::Val),
            "test" | "2" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeDataset {
    pub ids: Vec<String>,
    pub images: Images,
    /// `N × K`, entries 0 or 1.
    pub labels: Mat,
    pub names: Vec<String>,
    pub splits: Vec<Split>,
}

impl AttributeDataset {
    pub fn new(
        ids: Vec<String>,
        images: Images,
        labels: Mat,
        names: Vec<String>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        let n = images.count();
        if ids.len() != n || labels.rows() != n || splits.len() != n {
            return Err(Error::Invalid(format!(
                "{n} images but {} ids, {} label rows and {} split tags",
                ids.len(),
                labels.rows(),
                splits.len()
            )));
        }
        if names.len() != labels.cols() {
            return Err(Error::Invalid(format!(
                "{} attribute names for {} label columns",
                names.len(),
                labels.cols()
            )));
        }
        if labels.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Invalid("labels must be 0 or 1".into()));
        }
        Ok(AttributeDataset {
            ids,
            images,
            labels,
            names,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn attributes(&self) -> usize {
        self.names.len()
    }

    /// Positions tagged `split`, ascending.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    pub fn batch(&self, idx: &[usize]) -> Result<Batch> {
        let k = self.attributes();
        let mut lab = Vec::with_capacity(idx.len() * k);
        for &i in idx {
            lab.extend_from_slice(self.labels.row(i));
        }
        Ok(Batch::new(
            self.images.select(idx)?,
            Matrix::from_vec(idx.len(), k, lab)?,
        )?)
    }
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))
}

/// Parses a label file into ids, names and a 0/1 label matrix.
pub fn parse_labels(text: &str, path: &Path) -> Result<(Vec<String>, Vec<String>, Mat)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (mut no, mut header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty label file"))?;
    if header.parse::<usize>().is_ok() {
        (no, header) = lines
            .next()
            .ok_or_else(|| parse_err(path, no + 1, "missing attribute-name header"))?;
    }
    let names: Vec<String> = header.split_whitespace().map(str::to_string).collect();
    let k = names.len();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (no, line) in lines {
        let mut fields = line.split_whitespace();
        let id = fields.next().unwrap_or_default();
        let values: Vec<&str> = fields.collect();
        if values.len() != k {
            return Err(parse_err(
                path,
                no,
                format!(
                    "expected {k} label values after `{id}`, found {}",
                    values.len()
                ),
            ));
        }
        for v in values {
            data.push(match v {
                "1" => 1.0,
                "0" | "-1" => 0.0,
                _ => return Err(parse_err(path, no, format!("unknown label value `{v}`"))),
            });
        }
        ids.push(id.to_string());
    }
    if ids.is_empty() {
        return Err(parse_err(path, no, "no label rows"));
    }
    let n = ids.len();
    Ok((ids, names, Matrix::from_vec(n, k, data)?))
}

fn parse_splits(text: &str, path: &Path) -> Result<HashMap<String, Split>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let split = match f.as_slice() {
            [_, tag] => Split::parse(tag)
                .ok_or_else(|| parse_err(path, i + 1, format!("unknown split tag `{tag}`")))?,
            _ => return Err(parse_err(path, i + 1, "expected `id tag`")),
        };
        out.insert(f[0].to_string(), split);
    }
    Ok(out)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<AttributeDataset> {
    let dir = dir.as_ref();
    let label_path = dir.join("labels.txt");
    let (ids, names, labels) = parse_labels(&read_text(&label_path)?, &label_path)?;
    let split_path = dir.join("split.txt");
    let tags = parse_splits(&read_text(&split_path)?, &split_path)?;
    let splits = ids
        .iter()
        .map(|id| {
            tags.get(id).copied().ok_or_else(|| {
                Error::Invalid(format!("{}: no split tag for `{id}`", split_path.display()))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dims: Option<Vec<usize>> = None;
    let mut data = Vec::new();
    for id in &ids {
        let p = dir.join("images").join(id);
        if !p.exists() {
            return Err(Error::Invalid(format!(
                "missing image payload {}",
                p.display()
            )));
        }
        let t = read_tensor::<f64>(&p)?;
        match &dims {
            None if t.order() == 3 => dims = Some(t.shape().to_vec()),
            Some(d) if d.as_slice() == t.shape() => {}
            _ => {
                return Err(Error::Invalid(format!(
                    "image {} has shape {:?}; expected (H, W, C) matching the first image",
                    p.display(),
                    t.shape()
                )))
            }
        }
        data.extend_from_slice(t.data());
    }
    let d = dims.unwrap_or_default();
    let images = Images::new(ids.len(), d[0], d[1], d[2], data)?;
    AttributeDataset::new(ids, images, labels, names, splits)
}

/// Writes `ds` in the layout read by [`load_dataset`], labels as 0/1.
pub fn save_dataset(dir: impl AsRef<Path>, ds: &AttributeDataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("images"))?;
    let mut labels = ds.names.join(" ");
    labels.push('\n');
    let mut split = String::new();
    for (i, id) in ds.ids.iter().enumerate() {
        labels.push_str(id);
        for v in ds.labels.row(i) {
            let _ = write!(labels, " {}", *v as u8);
        }
        labels.push('\n');
        let _ = writeln!(split, "{id} {}", ds.splits[i].tag());
    }
    fs::write(dir.join("labels.txt"), labels)?;
    fs::write(dir.join("split.txt"), split)?;
    let [h, w, c] = ds.images.dims();
    for (i, id) in ds.ids.iter().enumerate() {
        let t = DenseTensor::new(vec![h, w, c], ds.images.image(i).to_vec())?;
        write_tensor(dir.join("images").join(id), &t)?;
    }
    Ok(())
}
