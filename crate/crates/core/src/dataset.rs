//! Directory-per-class dataset ingestion, deterministic train/validation
//! splits, seeded batch iteration, and a synthetic desk-scale corpus.
//!
//! All randomness flows from explicit seeds; scanning and label assignment
//! are lexicographic so indices are reproducible across file systems.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imageio::load_image;
use crate::pipeline::{resize_bilinear, ImageSample};
use crate::rng::{derive_seed, shuffle_in_place, SplitMix64};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    /// Sorted lexicographically; position is the class label.
    pub classes: Vec<String>,
    /// (path relative to root, class index), sorted by path within class scan.
    pub entries: Vec<(String, usize)>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts_per_class(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes.len()];
        for &(_, c) in &self.entries {
            counts[c] += 1;
        }
        counts
    }

    /// Line-oriented text: "relative_path<TAB>class_index", LF endings.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (path, class) in &self.entries {
            let _ = writeln!(out, "{path}\t{class}");
        }
        out
    }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Scan root/<class_name>/*.{png,jpg,jpeg} into a deterministic index.
pub fn scan_dataset(root: &Path) -> Result<DatasetIndex> {
    let mut classes: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(root)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", root.display())))?
    {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            classes.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    classes.sort();
    if classes.is_empty() {
        return Err(Error::Dataset(format!(
            "no class directories under {}",
            root.display()
        )));
    }
    let mut entries = Vec::new();
    for (label, class) in classes.iter().enumerate() {
        let dir = root.join(class);
        let mut files: Vec<String> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file() && is_image_file(p))
            .map(|p| format!("{class}/{}", p.file_name().unwrap().to_string_lossy()))
            .collect();
        files.sort();
        if files.is_empty() {
            eprintln!("warning: class directory '{class}' contains no images");
        }
        entries.extend(files.into_iter().map(|f| (f, label)));
    }
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        classes,
        entries,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SplitSpec {
    pub val_fraction: f32,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> SplitSpec {
        SplitSpec {
            val_fraction: 0.1,
            seed: 0,
            stratified: true,
        }
    }
}

/// Disjoint, exhaustive train/validation split; seeded shuffle before the cut.
pub fn split(index: &DatasetIndex, spec: &SplitSpec) -> Result<(DatasetIndex, DatasetIndex)> {
    if !(spec.val_fraction > 0.0 && spec.val_fraction < 1.0) {
        return Err(Error::Config(format!(
            "val_fraction must be in (0,1), got {}",
            spec.val_fraction
        )));
    }
    let mut val_positions: Vec<usize> = Vec::new();
    if spec.stratified {
        for class in 0..index.classes.len() {
            let mut positions: Vec<usize> = index
                .entries
                .iter()
                .enumerate()
                .filter(|(_, (_, c))| *c == class)
                .map(|(i, _)| i)
                .collect();
            if positions.is_empty() {
                continue;
            }
            if positions.len() < 2 {
                return Err(Error::Dataset(format!(
                    "class '{}' has fewer than 2 entries; cannot stratify",
                    index.classes[class]
                )));
            }
            let mut rng = SplitMix64::new(derive_seed(spec.seed, &index.classes[class], 0));
            shuffle_in_place(&mut positions, &mut rng);
            let n_val = ((positions.len() as f32 * spec.val_fraction).round() as usize)
                .clamp(1, positions.len() - 1);
            val_positions.extend(&positions[..n_val]);
        }
    } else {
        let mut positions: Vec<usize> = (0..index.entries.len()).collect();
        if positions.len() < 2 {
            return Err(Error::Dataset("dataset too small to split".into()));
        }
        let mut rng = SplitMix64::new(spec.seed);
        shuffle_in_place(&mut positions, &mut rng);
        let n_val = ((positions.len() as f32 * spec.val_fraction).round() as usize)
            .clamp(1, positions.len() - 1);
        val_positions.extend(&positions[..n_val]);
    }
    let in_val: std::collections::HashSet<usize> = val_positions.iter().cloned().collect();
    let mut train = DatasetIndex {
        root: index.root.clone(),
        classes: index.classes.clone(),
        entries: Vec::new(),
    };
    let mut val = train.clone();
    for (i, e) in index.entries.iter().enumerate() {
        if in_val.contains(&i) {
            val.entries.push(e.clone());
        } else {
            train.entries.push(e.clone());
        }
    }
    Ok((train, val))
}

/// Per-image transform applied after resize; second argument is the derived
/// per-image seed.
pub type Transform<'a> = Box<dyn Fn(&ImageSample, u64) -> Result<ImageSample> + 'a>;

pub struct BatchIter<'a> {
    index: &'a DatasetIndex,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    hw: usize,
    epoch: u64,
    seed: u64,
    transform: Option<Transform<'a>>,
}

/// Iterate an epoch in a seeded order keyed by (seed, epoch). Images are
/// decoded, resized to hw x hw, scaled to [0,1]; the final short batch is
/// emitted. Decode failures skip the image with a warning.
pub fn batch_iter<'a>(
    index: &'a DatasetIndex,
    batch_size: usize,
    epoch: u64,
    seed: u64,
    hw: usize,
    shuffle: bool,
    transform: Option<Transform<'a>>,
) -> BatchIter<'a> {
    let mut order: Vec<usize> = (0..index.entries.len()).collect();
    if shuffle {
        let mut rng = SplitMix64::new(derive_seed(seed, "epoch-order", epoch));
        shuffle_in_place(&mut order, &mut rng);
    }
    BatchIter {
        index,
        order,
        pos: 0,
        batch_size: batch_size.max(1),
        hw,
        epoch,
        seed,
        transform,
    }
}

impl BatchIter<'_> {
    fn load_one(&self, entry_pos: usize) -> Result<ImageSample> {
        let (rel, label) = &self.index.entries[entry_pos];
        let img = load_image(&self.index.root.join(rel), *label, rel)?;
        let img = resize_bilinear(&img, self.hw, self.hw)?;
        match &self.transform {
            Some(t) => t(&img, derive_seed(self.seed, rel, self.epoch)),
            None => Ok(img),
        }
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<(Tensor, Vec<usize>)>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut images: Vec<ImageSample> = Vec::with_capacity(self.batch_size);
        while images.len() < self.batch_size && self.pos < self.order.len() {
            let entry_pos = self.order[self.pos];
            self.pos += 1;
            match self.load_one(entry_pos) {
                Ok(img) => images.push(img),
                Err(e) => {
                    eprintln!(
                        "warning: skipping '{}': {e}",
                        self.index.entries[entry_pos].0
                    );
                }
            }
        }
        if images.is_empty() {
            return None;
        }
        let n = images.len();
        let c = images[0].channels();
        let mut data = Vec::with_capacity(n * self.hw * self.hw * c);
        let mut labels = Vec::with_capacity(n);
        for img in &images {
            data.extend_from_slice(img.pixels.data());
            labels.push(img.label);
        }
        Some(
            Tensor::from_vec(&[n, self.hw, self.hw, c], data).map(|batch| (batch, labels)),
        )
    }
}

// Visually distinct anchor colors for synthetic classes.
const PALETTE: [[f32; 3]; 10] = [
    [0.9, 0.1, 0.1],
    [0.1, 0.8, 0.2],
    [0.15, 0.25, 0.9],
    [0.9, 0.8, 0.1],
    [0.7, 0.15, 0.8],
    [0.1, 0.8, 0.8],
    [0.95, 0.5, 0.1],
    [0.5, 0.3, 0.1],
    [0.8, 0.8, 0.8],
    [0.2, 0.2, 0.2],
];

/// Generate a deterministic, class-separable PNG corpus: per-class anchor
/// color plus seeded texture noise. A nearest-centroid classifier in mean-RGB
/// space separates it perfectly, so a toy network can overfit it.
pub fn synth_dataset(
    seed: u64,
    per_class: usize,
    hw: usize,
    classes: usize,
    out_dir: &Path,
) -> Result<()> {
    if classes == 0 || classes > PALETTE.len() {
        return Err(Error::Config(format!(
            "classes must be 1..={}, got {classes}",
            PALETTE.len()
        )));
    }
    for class in 0..classes {
        let class_name = format!("class_{class:02}");
        for i in 0..per_class {
            let rel = format!("{class_name}/img_{i:03}.png");
            let mut rng = SplitMix64::new(derive_seed(seed, &rel, 0));
            let base = PALETTE[class];
            let mut data = Vec::with_capacity(hw * hw * 3);
            for _ in 0..hw * hw {
                for &b in &base {
                    let v = b + rng.next_range(-0.15, 0.15);
                    data.push(v.clamp(0.0, 1.0));
                }
            }
            let img = ImageSample::new(Tensor::from_vec(&[hw, hw, 3], data)?, class, &rel)?;
            crate::imageio::save_png(&img, &out_dir.join(&rel))?;
        }
    }
    Ok(())
}

/// SHA-256 over the serialized index plus every entry's file bytes, hex.
pub fn fingerprint(index: &DatasetIndex) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(index.serialize().as_bytes());
    for (rel, _) in &index.entries {
        hasher.update(std::fs::read(index.root.join(rel))?);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    Ok(out)
}
