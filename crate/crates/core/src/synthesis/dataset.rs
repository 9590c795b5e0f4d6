use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::GenConfig;
use super::contract::contract_to_symh;
use super::fit::fit_obb;
use super::generator::{generate_aircraft, PartLabel};
use super::project::keypoints_from_obbs;
use super::relations::{detect_adjacency, detect_symmetry, SymmetryRelations};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::symh::{
    flatten_tree, parse_tree, serialize_tree, validate_tree, KeypointRecord, Obb, SymhTree, SymmetryParam, Vec3,
};

/// Adjacency threshold as a fraction of the model diagonal.
pub const ADJACENCY_FRACTION: f64 = 0.02;
/// Symmetry matching tolerance as a fraction of the model diagonal.
pub const SYMMETRY_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// `(train, val, test)` sizes. 1563 samples split 1243/160/160; other counts
/// keep the same validation and test fractions.
pub fn split_counts(count: usize) -> (usize, usize, usize) {
    let held = ((count as f64) * 160.0 / 1563.0).round() as usize;
    let held = held.min(count / 3);
    (count - 2 * held, held, held)
}

/// One paired sample in normalized coordinates: the keypoints fill
/// `[-1, 1]²` and the tree shares that frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub seed: u64,
    pub tree: SymhTree,
    pub keypoints: KeypointRecord,
}

/// Diagonal of the axis-aligned box around every corner.
pub fn model_diagonal(obbs: &[Obb]) -> f64 {
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for c in obbs.iter().flat_map(|o| o.corners()) {
        lo = lo.inf(&c);
        hi = hi.sup(&c);
    }
    (hi - lo).norm()
}

pub fn sample_id(index: usize) -> String {
    format!("{index:06}")
}

/// Full pipeline for one sample: generate parts, fit boxes, project
/// keypoints, normalize, detect relations and contract into a tree.
pub fn synthesize_sample(cfg: &GenConfig, index: usize) -> Result<Sample> {
    let seed = derive_seed(cfg.seed, &format!("sample/{index}"));
    let parts = generate_aircraft(cfg, seed)?;
    let labels: Vec<PartLabel> = parts.parts.iter().map(|p| p.label).collect();
    let raw = parts.parts.iter().map(|p| fit_obb(&p.points)).collect::<Result<Vec<_>>>()?;
    let record = keypoints_from_obbs(&labels, &raw)?;
    let norm = record.normalization();
    let (scale, shift) = norm.forward3();
    let obbs: Vec<Obb> = raw.iter().map(|o| o.scaled(scale, &shift)).collect();
    let keypoints = record.map_points(|p| norm.apply(p));
    let plane = parts.plane.scaled(scale, &shift);

    let diag = model_diagonal(&obbs);
    let adjacency = detect_adjacency(&obbs, ADJACENCY_FRACTION * diag);
    let symmetry = detect_symmetry(&obbs, &plane, SYMMETRY_FRACTION * diag);
    let tree = contract_to_symh(&obbs, &adjacency, &symmetry)?;
    let violations = validate_tree(&tree);
    if !violations.is_empty() {
        return Err(Error::InvalidTree(violations));
    }
    keypoints.validate()?;
    Ok(Sample { id: sample_id(index), seed, tree, keypoints })
}

/// The same shape without symmetry nodes: the flattened boxes re-contracted
/// with adjacency alone.
pub fn symmetry_free(tree: &SymhTree) -> Result<SymhTree> {
    let obbs = flatten_tree(tree)?;
    let diag = model_diagonal(&obbs);
    let adjacency = detect_adjacency(&obbs, ADJACENCY_FRACTION * diag);
    let none = SymmetryRelations { plane: SymmetryParam::bilateral(), pairs: Vec::new(), self_symmetric: Vec::new() };
    contract_to_symh(&obbs, &adjacency, &none)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub seed: u64,
    pub config: GenConfig,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    /// Assigns the first samples to train, then validation, then test.
    pub fn new(cfg: &GenConfig, samples: &[Sample]) -> Self {
        let (train, val, _) = split_counts(samples.len());
        let entries = samples
            .iter()
            .enumerate()
            .map(|(i, s)| ManifestEntry {
                id: s.id.clone(),
                split: if i < train {
                    Split::Train
                } else if i < train + val {
                    Split::Val
                } else {
                    Split::Test
                },
                seed: s.seed,
            })
            .collect();
        Self { count: samples.len(), seed: cfg.seed, config: cfg.clone(), samples: entries }
    }

    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.samples.iter().filter(|e| e.split == split).map(|e| e.id.as_str()).collect()
    }
}

pub fn sample_dir(root: &Path, id: &str) -> PathBuf {
    root.join("samples").join(id)
}

pub fn write_sample(root: &Path, sample: &Sample) -> Result<()> {
    let dir = sample_dir(root, &sample.id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let tree_path = dir.join("tree.symh");
    fs::write(&tree_path, serialize_tree(&sample.tree)).map_err(|e| Error::io(&tree_path, e))?;
    sample.keypoints.write(&dir.join("keypoints.json"))
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let path = root.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

pub fn read_tree(path: &Path) -> Result<SymhTree> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tree(&text)
}

pub fn read_sample(root: &Path, entry: &ManifestEntry) -> Result<Sample> {
    let dir = sample_dir(root, &entry.id);
    let tree = read_tree(&dir.join("tree.symh"))?;
    let violations = validate_tree(&tree);
    if !violations.is_empty() {
        return Err(Error::InvalidTree(violations));
    }
    let keypoints = KeypointRecord::read(&dir.join("keypoints.json"))?;
    Ok(Sample { id: entry.id.clone(), seed: entry.seed, tree, keypoints })
}

/// A dataset loaded from disk, grouped by split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn from_samples(cfg: &GenConfig, samples: Vec<Sample>) -> Self {
        let manifest = Manifest::new(cfg, &samples);
        let mut out = Self { manifest, train: Vec::new(), val: Vec::new(), test: Vec::new() };
        for (s, e) in samples.into_iter().zip(out.manifest.samples.clone()) {
            out.split_mut(e.split).push(s);
        }
        out
    }

    /// Sequential generation of `count` samples.
    pub fn synthesize(cfg: &GenConfig, count: usize) -> Result<Self> {
        let samples = (0..count).map(|i| synthesize_sample(cfg, i)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_samples(cfg, samples))
    }

    pub fn load(root: &Path) -> Result<Self> {
        let manifest = read_manifest(root)?;
        let mut out =
            Self { manifest: manifest.clone(), train: Vec::new(), val: Vec::new(), test: Vec::new() };
        for e in &manifest.samples {
            let s = read_sample(root, e)?;
            out.split_mut(e.split).push(s);
        }
        Ok(out)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        write_manifest(root, &self.manifest)?;
        for s in self.train.iter().chain(&self.val).chain(&self.test) {
            write_sample(root, s)?;
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<Sample> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symh::NodeKind;

    #[test]
    fn split_counts_match_reference() {
        assert_eq!(split_counts(1563), (1243, 160, 160));
        assert_eq!(split_counts(10), (8, 1, 1));
        assert_eq!(split_counts(0), (0, 0, 0));
    }

    #[test]
    fn census_by_engine_count() {
        for (engines, parts, sym) in [(0usize, 6usize, 2usize), (2, 8, 3), (4, 10, 4)] {
            let cfg = GenConfig::default().with_engines(engines);
            for i in 0..10 {
                let s = synthesize_sample(&cfg, i).unwrap();
                let c = s.tree.census();
                assert_eq!(c.symmetry, sym, "engines {engines} sample {i}: {:?}", s.tree.kinds());
                assert_eq!(flatten_tree(&s.tree).unwrap().len(), parts);
                assert_eq!(s.keypoints.engines.len(), engines);
                assert_eq!(s.tree.kinds()[0], NodeKind::Adjacency);
            }
        }
    }

    #[test]
    fn symmetry_free_stores_more_leaves() {
        let s = synthesize_sample(&GenConfig::default().with_engines(2), 0).unwrap();
        let free = symmetry_free(&s.tree).unwrap();
        assert_eq!(free.census().symmetry, 0);
        assert_eq!(free.census().leaves, 8);
        assert_eq!(s.tree.census().leaves, 5);
    }

    #[test]
    fn keypoints_are_normalized() {
        let s = synthesize_sample(&GenConfig::default(), 3).unwrap();
        let pts = s.keypoints.points();
        let max = pts.iter().map(|(p, _)| p.x.abs().max(p.y.abs())).fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig { seed: 1, ..GenConfig::default() };
        let ds = Dataset::synthesize(&cfg, 10).unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.manifest, ds.manifest);
        assert_eq!(back.train, ds.train);
        assert_eq!(back.test, ds.test);
        assert_eq!(ds.manifest.samples.len(), 10);
    }
}
