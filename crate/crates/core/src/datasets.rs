//! MNIST IDX loading and domain-incremental task streams.
//!
//! Pixels are stored once as `f32` and shared between tasks. Permuted tasks
//! keep only their permutation and gather pixels on demand; rotated tasks
//! hold their own rotated copy; binary-split tasks index a subset of the
//! source rows with remapped labels.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{stream, stream_rng};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Images (`n × dim`, row-major, values in `[0, 1]`) with labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Arc<Vec<f32>>,
    labels: Arc<Vec<u8>>,
    dim: usize,
}

impl Dataset {
    pub fn new(images: Vec<f32>, labels: Vec<u8>, dim: usize) -> Result<Self> {
        if dim == 0 || images.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} pixel values for {} labels of dimension {dim}",
                images.len(),
                labels.len()
            )));
        }
        if images.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("pixel values must lie in [0, 1]"));
        }
        Ok(Self {
            images: Arc::new(images),
            labels: Arc::new(labels),
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_error(path, offset, "truncated header"))
}

fn format_error(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

/// Parses an IDX image file and its label file.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lab = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;

    let magic = read_u32(&img, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(format_error(images_path, 0, format!("bad image magic {magic:#010x}")));
    }
    let count = read_u32(&img, 4, images_path)? as usize;
    let rows = read_u32(&img, 8, images_path)? as usize;
    let cols = read_u32(&img, 12, images_path)? as usize;
    let dim = rows * cols;
    let expected = 16 + count * dim;
    if img.len() < expected {
        return Err(format_error(
            images_path,
            img.len(),
            format!("truncated: {count} images of {rows}x{cols} need {expected} bytes"),
        ));
    }

    let magic = read_u32(&lab, 0, labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(format_error(labels_path, 0, format!("bad label magic {magic:#010x}")));
    }
    let label_count = read_u32(&lab, 4, labels_path)? as usize;
    if label_count != count {
        return Err(format_error(
            labels_path,
            4,
            format!("{label_count} labels for {count} images"),
        ));
    }
    if lab.len() < 8 + count {
        return Err(format_error(labels_path, lab.len(), "truncated label data"));
    }

    let images = img[16..expected].iter().map(|&b| b as f32 / 255.0).collect();
    let labels = lab[8..8 + count].to_vec();
    Dataset::new(images, labels, dim)
}

/// The four canonical MNIST files in `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let p = |name: &str| -> PathBuf { dir.join(name) };
    let train = load_idx(&p("train-images-idx3-ubyte"), &p("train-labels-idx1-ubyte"))?;
    let test = load_idx(&p("t10k-images-idx3-ubyte"), &p("t10k-labels-idx1-ubyte"))?;
    Ok((train, test))
}

/// Benchmark families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Permuted,
    Rotated,
    BinarySplit,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Permuted => "permuted",
            Benchmark::Rotated => "rotated",
            Benchmark::BinarySplit => "binary_split",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Benchmark::BinarySplit => 2,
            _ => 10,
        }
    }

    pub fn default_tasks(self) -> usize {
        match self {
            Benchmark::Permuted => 10,
            _ => 5,
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permuted" => Ok(Benchmark::Permuted),
            "rotated" => Ok(Benchmark::Rotated),
            "binary_split" => Ok(Benchmark::BinarySplit),
            other => Err(Error::config("benchmark", format!("unknown benchmark `{other}`"))),
        }
    }
}

/// The input transform defining a task.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// `out[j] = src[perm[j]]`.
    Permutation { perm: Arc<Vec<usize>>, inverse: Arc<Vec<usize>> },
    Rotation { degrees: f64 },
    DigitPair { digits: [u8; 2] },
}

/// One split of one task: a view over a source dataset.
#[derive(Debug, Clone)]
pub struct TaskData {
    source: Dataset,
    perm: Option<Arc<Vec<usize>>>,
    rows: Option<Arc<Vec<usize>>>,
    labels: Vec<usize>,
}

/// A column-batched mini-batch: `x` is `dim × n`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl TaskData {
    fn full(source: Dataset, perm: Option<Arc<Vec<usize>>>) -> Self {
        let labels = source.labels().iter().map(|&l| l as usize).collect();
        Self {
            source,
            perm,
            rows: None,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Pixels of sample `i` after the task transform.
    pub fn sample(&self, i: usize) -> Vec<f32> {
        let src = self.source.image(self.source_row(i));
        match &self.perm {
            Some(p) => p.iter().map(|&j| src[j]).collect(),
            None => src.to_vec(),
        }
    }

    fn source_row(&self, i: usize) -> usize {
        match &self.rows {
            Some(r) => r[i],
            None => i,
        }
    }

    /// Gathers the given samples into a batch.
    pub fn gather(&self, idx: &[usize]) -> Batch {
        let dim = self.dim();
        let n = idx.len();
        let mut x = Matrix::zeros(dim, n);
        let data = x.as_mut_slice();
        for (c, &i) in idx.iter().enumerate() {
            let src = self.source.image(self.source_row(i));
            match &self.perm {
                Some(p) => {
                    for (r, &j) in p.iter().enumerate() {
                        data[r * n + c] = src[j] as f64;
                    }
                }
                None => {
                    for (r, &v) in src.iter().enumerate() {
                        data[r * n + c] = v as f64;
                    }
                }
            }
        }
        Batch {
            x,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Shuffled sample order for one epoch.
    pub fn epoch_order(&self, seed: u64, task: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = stream_rng(seed, &[stream::SHUFFLE, task as u64, epoch as u64]);
        order.shuffle(&mut rng);
        order
    }

    /// Lazily gathered mini-batches of one epoch; the last batch may be
    /// partial.
    pub fn epoch_batches(&self, batch_size: usize, seed: u64, task: usize, epoch: usize) -> EpochBatches<'_> {
        EpochBatches {
            data: self,
            order: self.epoch_order(seed, task, epoch),
            batch_size: batch_size.max(1),
            next: 0,
        }
    }

    /// Contiguous batches in storage order, for evaluation.
    pub fn sequential_batches(&self, batch_size: usize) -> EpochBatches<'_> {
        EpochBatches {
            data: self,
            order: (0..self.len()).collect(),
            batch_size: batch_size.max(1),
            next: 0,
        }
    }
}

pub struct EpochBatches<'a> {
    data: &'a TaskData,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl EpochBatches<'_> {
    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl Iterator for EpochBatches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let batch = self.data.gather(&self.order[self.next..end]);
        self.next = end;
        Some(batch)
    }
}

#[derive(Debug, Clone)]
pub struct Task {
    pub index: usize,
    pub transform: Transform,
    pub train: TaskData,
    pub test: TaskData,
}

/// Ordered tasks sharing one label space.
#[derive(Debug, Clone)]
pub struct TaskStream {
    pub benchmark: Benchmark,
    pub tasks: Vec<Task>,
    pub num_classes: usize,
    pub seed: u64,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.train.dim())
    }
}

/// Builds a `num_tasks`-task stream over the given source splits.
pub fn build_stream(
    benchmark: Benchmark,
    num_tasks: usize,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
) -> Result<TaskStream> {
    if num_tasks == 0 {
        return Err(Error::config("tasks", "at least one task required"));
    }
    if train.dim() != test.dim() {
        return Err(Error::Shape("train and test dimensions differ".into()));
    }
    let dim = train.dim();
    let mut tasks = Vec::with_capacity(num_tasks);
    match benchmark {
        Benchmark::Permuted => {
            for t in 0..num_tasks {
                let mut perm: Vec<usize> = (0..dim).collect();
                if t > 0 {
                    let mut rng = stream_rng(seed, &[stream::TASKS, t as u64]);
                    perm.shuffle(&mut rng);
                }
                let mut inverse = vec![0; dim];
                for (j, &p) in perm.iter().enumerate() {
                    inverse[p] = j;
                }
                let (perm, inverse) = (Arc::new(perm), Arc::new(inverse));
                let lazy = if t == 0 { None } else { Some(perm.clone()) };
                tasks.push(Task {
                    index: t,
                    transform: Transform::Permutation { perm, inverse },
                    train: TaskData::full(train.clone(), lazy.clone()),
                    test: TaskData::full(test.clone(), lazy),
                });
            }
        }
        Benchmark::Rotated => {
            let side = (dim as f64).sqrt().round() as usize;
            if side * side != dim {
                return Err(Error::Shape(format!("rotation needs square images, got dimension {dim}")));
            }
            for t in 0..num_tasks {
                let degrees = 20.0 * t as f64;
                tasks.push(Task {
                    index: t,
                    transform: Transform::Rotation { degrees },
                    train: TaskData::full(rotate_dataset(train, side, degrees)?, None),
                    test: TaskData::full(rotate_dataset(test, side, degrees)?, None),
                });
            }
        }
        Benchmark::BinarySplit => {
            if num_tasks > 5 {
                return Err(Error::config("tasks", "binary_split has at most 5 tasks"));
            }
            for t in 0..num_tasks {
                let digits = [2 * t as u8, 2 * t as u8 + 1];
                tasks.push(Task {
                    index: t,
                    transform: Transform::DigitPair { digits },
                    train: digit_pair(train, digits),
                    test: digit_pair(test, digits),
                });
            }
        }
    }
    Ok(TaskStream {
        benchmark,
        tasks,
        num_classes: benchmark.num_classes(),
        seed,
    })
}

fn digit_pair(source: &Dataset, digits: [u8; 2]) -> TaskData {
    let rows: Vec<usize> = (0..source.len())
        .filter(|&i| digits.contains(&source.label(i)))
        .collect();
    let labels = rows
        .iter()
        .map(|&i| usize::from(source.label(i) == digits[1]))
        .collect();
    TaskData {
        source: source.clone(),
        perm: None,
        rows: Some(Arc::new(rows)),
        labels,
    }
}

fn rotate_dataset(source: &Dataset, side: usize, degrees: f64) -> Result<Dataset> {
    if degrees == 0.0 {
        return Ok(source.clone());
    }
    let mut images = Vec::with_capacity(source.len() * source.dim());
    for i in 0..source.len() {
        images.extend(rotate_square(source.image(i), side, degrees));
    }
    Dataset::new(images, source.labels().to_vec(), source.dim())
}

/// Rotates a 28×28 image counterclockwise by `degrees` about its centre.
pub fn rotate_image(img: &[f32], degrees: f64) -> Result<Vec<f32>> {
    if img.len() != 28 * 28 {
        return Err(Error::Shape(format!("expected 784 pixels, got {}", img.len())));
    }
    if !degrees.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    Ok(rotate_square(img, 28, degrees))
}

/// Bilinear rotation of a `side × side` image with zero padding. With rows
/// pointing down, a 90° turn maps `out[i][j] = in[j][side−1−i]`.
fn rotate_square(img: &[f32], side: usize, degrees: f64) -> Vec<f32> {
    let (s, c) = degrees.to_radians().sin_cos();
    let centre = (side as f64 - 1.0) / 2.0;
    let at = |r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r >= side as isize || col >= side as isize {
            0.0
        } else {
            img[r as usize * side + col as usize] as f64
        }
    };
    let mut out = vec![0.0f32; side * side];
    for i in 0..side {
        for j in 0..side {
            let y = i as f64 - centre;
            let x = j as f64 - centre;
            // Inverse map of the output pixel into the source image.
            let sx = c * x - s * y + centre;
            let sy = s * x + c * y + centre;
            let (sx, sy) = (snap(sx), snap(sy));
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
                + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
            out[i * side + j] = v.clamp(0.0, 1.0) as f32;
        }
    }
    out
}

/// Removes trigonometric roundoff near grid points.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Row index of the largest entry of each column.
pub fn argmax_columns(logits: &Matrix) -> Vec<usize> {
    (0..logits.cols())
        .map(|j| {
            let mut best = 0;
            for r in 1..logits.rows() {
                if logits[(r, j)] > logits[(best, j)] {
                    best = r;
                }
            }
            best
        })
        .collect()
}
