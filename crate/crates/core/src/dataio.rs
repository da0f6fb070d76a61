//! Dataset loading, splitting, model files, code tables and binary PNM images.
//!
//! Text formats:
//!
//! * feature CSV: no header, comma separated, optional integer label column
//!   where `-1` marks an unlabeled row;
//! * code CSV: `±1` entries, optionally followed by an integer label column;
//! * model file: JSON, described in `docs/model-format.md`.
//!
//! Reals are written in shortest round-trip decimal form, so every save/load
//! pair reproduces values bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::trainer::{BitFunction, HashModel, Standardizer, TrainConfig};
use crate::{Error, Result};

/// Features with optional class labels; `None` rows form the unlabeled set.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<Option<usize>>,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<Option<usize>>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::input(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(LabeledDataset { features, labels })
    }

    pub fn unlabeled(features: Array2<f64>) -> Self {
        let n = features.nrows();
        LabeledDataset {
            features,
            labels: vec![None; n],
        }
    }

    /// Builds from integer labels where `-1` means unlabeled.
    pub fn from_raw_labels(features: Array2<f64>, raw: &[i64]) -> Result<Self> {
        let labels = raw.iter().map(|&l| decode_label(l)).collect::<Result<_>>()?;
        LabeledDataset::new(features, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i].is_some()).collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i].is_none()).collect()
    }

    /// Labels with `-1` for unlabeled rows.
    pub fn raw_labels(&self) -> Vec<i64> {
        self.labels.iter().map(|l| l.map_or(-1, |c| c as i64)).collect()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        LabeledDataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Appends unlabeled rows after the existing ones.
    pub fn with_unlabeled(&self, extra: ArrayView2<'_, f64>) -> Result<Self> {
        if extra.nrows() > 0 && extra.ncols() != self.dim() {
            return Err(Error::input(format!(
                "unlabeled rows have {} features, dataset has {}",
                extra.ncols(),
                self.dim()
            )));
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), extra])
            .map_err(|e| Error::input(e.to_string()))?;
        let mut labels = self.labels.clone();
        labels.extend(std::iter::repeat_n(None, extra.nrows()));
        LabeledDataset::new(features, labels)
    }
}

fn decode_label(l: i64) -> Result<Option<usize>> {
    match l {
        -1 => Ok(None),
        l if l >= 0 => Ok(Some(l as usize)),
        l => Err(Error::input(format!("label {l} is neither -1 nor a class index"))),
    }
}

/// Position of the label column in a feature CSV.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Last,
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "last" {
            return Ok(LabelColumn::Last);
        }
        s.parse()
            .map(LabelColumn::Index)
            .map_err(|_| Error::config(format!("label column must be 'last' or an index, got '{s}'")))
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads a feature CSV. Without a label column every row is unlabeled.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<LabelColumn>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let cols = record.len();
        match width {
            None => width = Some(cols),
            Some(w) if w != cols => {
                return Err(parse_err(path, line, format!("expected {w} columns, found {cols}")));
            }
            _ => {}
        }
        let label_at = match label_column {
            None => None,
            Some(LabelColumn::Last) => Some(cols - 1),
            Some(LabelColumn::Index(i)) if i < cols => Some(i),
            Some(LabelColumn::Index(i)) => {
                return Err(parse_err(path, line, format!("label column {i} out of range for {cols} columns")));
            }
        };
        let mut label = None;
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_at {
                let raw: i64 = cell
                    .parse()
                    .map_err(|_| parse_err(path, line, format!("label '{cell}' is not an integer")))?;
                label = decode_label(raw).map_err(|e| parse_err(path, line, e.to_string()))?;
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(path, line, format!("cell '{cell}' in column {j} is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_err(path, line, format!("non-finite value in column {j}")));
                }
                values.push(v);
            }
        }
        labels.push(label);
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::input(format!("{}: no data rows", path.display())));
    }
    let d = values.len() / n;
    if d == 0 {
        return Err(Error::input(format!("{}: rows have no feature columns", path.display())));
    }
    let features = Array2::from_shape_vec((n, d), values).expect("rectangular rows");
    LabeledDataset::new(features, labels)
}

/// Writes a feature CSV with the label (or `-1`) as the last column.
pub fn save_csv(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for (row, label) in data.features.axis_iter(Axis(0)).zip(data.raw_labels()) {
        let mut line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        line.push(label.to_string());
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Reads idx image (and optional label) files; pixels are scaled to `[0, 1]`.
pub fn load_idx(images: impl AsRef<Path>, labels: Option<&Path>) -> Result<LabeledDataset> {
    let ipath = images.as_ref();
    let bytes = read_all(ipath)?;
    let magic = be_u32(&bytes, 0).ok_or_else(|| Error::format(ipath, "truncated header"))?;
    if magic != IDX_IMAGES {
        return Err(Error::format(ipath, format!("bad image magic {magic:#010x}")));
    }
    let dims: Vec<usize> = (0..3)
        .map(|k| be_u32(&bytes, 4 + 4 * k).map(|v| v as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::format(ipath, "truncated header"))?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let d = rows * cols;
    let body = &bytes[16..];
    if body.len() != n * d {
        return Err(Error::format(
            ipath,
            format!("expected {} pixel bytes, found {}", n * d, body.len()),
        ));
    }
    let features = Array2::from_shape_fn((n, d), |(i, j)| f64::from(body[i * d + j]) / 255.0);
    let labels = match labels {
        None => vec![None; n],
        Some(lpath) => {
            let lb = read_all(lpath)?;
            let magic = be_u32(&lb, 0).ok_or_else(|| Error::format(lpath, "truncated header"))?;
            if magic != IDX_LABELS {
                return Err(Error::format(lpath, format!("bad label magic {magic:#010x}")));
            }
            let count = be_u32(&lb, 4).ok_or_else(|| Error::format(lpath, "truncated header"))? as usize;
            if count != n || lb.len() != 8 + count {
                return Err(Error::format(
                    lpath,
                    format!("{} labels for {n} images", lb.len().saturating_sub(8)),
                ));
            }
            lb[8..].iter().map(|&l| Some(usize::from(l))).collect()
        }
    };
    LabeledDataset::new(features, labels)
}

/// Seeded random split into `train_n` training rows and the rest.
pub fn split(data: &LabeledDataset, train_n: usize, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if train_n == 0 || train_n >= data.len() {
        return Err(Error::input(format!(
            "train size {train_n} must lie in 1..{}",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((data.select(&order[..train_n]), data.select(&order[train_n..])))
}

/// Writes codes as `±1` CSV rows, with an optional trailing label column.
pub fn save_codes(path: impl AsRef<Path>, codes: &[Vec<i8>], labels: Option<&[i64]>) -> Result<()> {
    let path = path.as_ref();
    if let Some(l) = labels {
        if l.len() != codes.len() {
            return Err(Error::input("label count differs from code count"));
        }
    }
    let mut w = create(path)?;
    for (i, code) in codes.iter().enumerate() {
        let mut cells: Vec<String> = code.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            cells.push(l[i].to_string());
        }
        writeln!(w, "{}", cells.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Codes and, when present, their integer labels.
pub type CodeTable = (Vec<Vec<i8>>, Option<Vec<i64>>);

/// Reads a code CSV; with `labeled` the last column holds integer labels.
pub fn load_codes(path: impl AsRef<Path>, labeled: bool) -> Result<CodeTable> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let mut codes = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(parse_err(path, line, "ragged row"));
        }
        let bits = record.len() - usize::from(labeled);
        if bits == 0 {
            return Err(parse_err(path, line, "row has no code bits"));
        }
        let code = record
            .iter()
            .take(bits)
            .map(|c| match c {
                "1" | "+1" => Ok(1),
                "-1" => Ok(-1),
                other => Err(parse_err(path, line, format!("code entry '{other}' is not ±1"))),
            })
            .collect::<Result<Vec<i8>>>()?;
        codes.push(code);
        if labeled {
            let cell = &record[bits];
            labels.push(
                cell.parse::<i64>()
                    .map_err(|_| parse_err(path, line, format!("label '{cell}' is not an integer")))?,
            );
        }
    }
    if codes.is_empty() {
        return Err(Error::input(format!("{}: no code rows", path.display())));
    }
    Ok((codes, labeled.then_some(labels)))
}

/// Identifier stored in every model file.
pub const MODEL_FORMAT: &str = "shl-hash-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    config: TrainConfig,
    standardizer: Option<Standardizer>,
    support_features: Vec<Vec<f64>>,
    bits: Vec<BitFunction>,
    /// `[class][slot][bit]`
    codebook: Vec<Vec<Vec<f64>>>,
    loss_trace: Vec<f64>,
}

/// Serializes a model to the JSON model format.
pub fn model_to_string(model: &HashModel) -> Result<String> {
    let mu = &model.codebook.mu;
    let (c, s, _) = mu.dim();
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        config: model.config.clone(),
        standardizer: model.standardizer.clone(),
        support_features: model.support_features.outer_iter().map(|r| r.to_vec()).collect(),
        bits: model.bits.clone(),
        codebook: (0..c)
            .map(|ci| (0..s).map(|si| model.codebook.codeword(ci, si).to_vec()).collect())
            .collect(),
        loss_trace: model.loss_trace.clone(),
    };
    let mut out = serde_json::to_string_pretty(&file).map_err(|e| Error::Numerical(e.to_string()))?;
    out.push('\n');
    Ok(out)
}

/// Parses and validates a model; `origin` names the source in errors.
pub fn model_from_str(text: &str, origin: &Path) -> Result<HashModel> {
    let bad = |msg: String| Error::format(origin, msg);
    let file: ModelFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(bad(format!("unknown format '{}'", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(bad(format!("unsupported version {} (expected {MODEL_VERSION})", file.version)));
    }
    file.config.validate().map_err(|e| bad(e.to_string()))?;
    let cfg = &file.config;

    let nsv = file.support_features.len();
    let dim = file.support_features.first().map_or(0, Vec::len);
    if file.support_features.iter().any(|r| r.len() != dim) {
        return Err(bad("ragged support feature rows".into()));
    }
    let support_features = Array2::from_shape_vec((nsv, dim), file.support_features.concat())
        .map_err(|e| bad(e.to_string()))?;
    if let Some(s) = &file.standardizer {
        if s.mean.len() != s.scale.len() || (nsv > 0 && s.mean.len() != dim) {
            return Err(bad("standardizer dimension mismatch".into()));
        }
        if s.scale.contains(&0.0) {
            return Err(bad("standardizer has a zero scale".into()));
        }
    }
    if file.bits.len() != cfg.bits {
        return Err(bad(format!("{} bit functions for {} bits", file.bits.len(), cfg.bits)));
    }
    for (b, bit) in file.bits.iter().enumerate() {
        let k = bit.support.len();
        if bit.alpha.len() != k || bit.labels.len() != k {
            return Err(bad(format!("bit {b}: support, alpha and label lengths differ")));
        }
        if bit.support.iter().any(|&j| j >= nsv) {
            return Err(bad(format!("bit {b}: support index out of range")));
        }
        if bit.theta.len() != cfg.kernels.len() {
            return Err(bad(format!("bit {b}: theta length differs from kernel count")));
        }
        if bit.labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(bad(format!("bit {b}: labels must be ±1")));
        }
    }
    let (c, s) = (cfg.classes, cfg.codewords);
    let shape_ok = file.codebook.len() == c
        && file
            .codebook
            .iter()
            .all(|cls| cls.len() == s && cls.iter().all(|cw| cw.len() == cfg.bits));
    if !shape_ok {
        return Err(bad("codebook shape differs from configuration".into()));
    }
    let flat: Vec<f64> = file.codebook.into_iter().flatten().flatten().collect();
    let mu = Array3::from_shape_vec((c, s, cfg.bits), flat).map_err(|e| bad(e.to_string()))?;
    let codebook = Codebook::new(mu).map_err(|e| bad(e.to_string()))?;
    Ok(HashModel {
        config: file.config,
        standardizer: file.standardizer,
        support_features,
        bits: file.bits,
        codebook,
        loss_trace: file.loss_trace,
    })
}

pub fn save_model(model: &HashModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = model_to_string(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<HashModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text, path)
}

/// An 8-bit RGB image, pixels in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    /// One row of `(r, g, b) / 255` per pixel, row-major.
    pub fn features(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.pixels.len(), 3), |(i, k)| f64::from(self.pixels[i][k]) / 255.0)
    }
}

/// An 8-bit grayscale image, pixels in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

struct PnmHeader {
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_pnm_header(bytes: &[u8], magic: &[u8; 2], path: &Path) -> Result<PnmHeader> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format(
            path,
            format!("expected a binary {} file", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "malformed header"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(path, "malformed header"));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::format(path, format!("max value {maxval} unsupported, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(path, "empty image"));
    }
    Ok(PnmHeader {
        width,
        height,
        data_start: pos + 1,
    })
}

/// Reads a binary PPM (P6) image with max value 255.
pub fn load_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let h = parse_pnm_header(&bytes, b"P6", path)?;
    let n = h.width * h.height;
    let data = bytes
        .get(h.data_start..h.data_start + 3 * n)
        .ok_or_else(|| Error::format(path, "truncated pixel data"))?;
    Ok(RgbImage {
        width: h.width,
        height: h.height,
        pixels: data.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect(),
    })
}

pub fn save_ppm(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut body = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    body.extend(image.pixels.iter().flatten());
    w.write_all(&body).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Reads a binary PGM (P5) image with max value 255.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let h = parse_pnm_header(&bytes, b"P5", path)?;
    let n = h.width * h.height;
    let data = bytes
        .get(h.data_start..h.data_start + n)
        .ok_or_else(|| Error::format(path, "truncated pixel data"))?;
    Ok(GrayImage {
        width: h.width,
        height: h.height,
        pixels: data.to_vec(),
    })
}

pub fn save_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut body = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    body.extend(&image.pixels);
    w.write_all(&body).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Class index of the segmentation background.
pub const BACKGROUND: usize = 0;
/// Class index of the segmentation foreground.
pub const FOREGROUND: usize = 1;

/// Writes a foreground/background mask as P5 with 255 = foreground, 0 = background.
pub fn save_mask_pgm(mask: &[usize], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    if mask.len() != width * height {
        return Err(Error::input("mask size differs from image dimensions"));
    }
    let pixels = mask
        .iter()
        .map(|&c| if c == FOREGROUND { 255 } else { 0 })
        .collect();
    save_pgm(&GrayImage { width, height, pixels }, path)
}

/// Reads a mask written by [`save_mask_pgm`] (any nonzero value is foreground).
pub fn load_mask_pgm(path: impl AsRef<Path>) -> Result<(Vec<usize>, usize, usize)> {
    let img = load_pgm(path)?;
    let mask = img
        .pixels
        .iter()
        .map(|&v| if v == 0 { BACKGROUND } else { FOREGROUND })
        .collect();
    Ok((mask, img.width, img.height))
}

/// Scribble labels from a grayscale image: 254 or 255 marks foreground,
/// 127 or 128 background, 0 unlabeled. Other values are rejected.
pub fn scribble_labels(scribbles: &GrayImage, path: &Path) -> Result<Vec<Option<usize>>> {
    scribbles
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            254 | 255 => Ok(Some(FOREGROUND)),
            127 | 128 => Ok(Some(BACKGROUND)),
            0 => Ok(None),
            other => Err(Error::format(
                path,
                format!(
                    "scribble value {other} at pixel ({}, {}) is not 0, 127/128 or 254/255",
                    i % scribbles.width,
                    i / scribbles.width
                ),
            )),
        })
        .collect()
}
