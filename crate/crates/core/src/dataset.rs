//! Dataset containers, clip extraction and leave-one-person-out splits.
//!
//! Two on-disk layouts share the same shape: a JSON manifest next to a set of
//! `RVT1` tensor files.
//!
//! * IQ container (`simulate` output): per clip an `iq` tensor
//!   `[T, chirps, adc, antennas, 2]` (real, imaginary) and a `joints` tensor
//!   `[T, 13, 2]` in metres.
//! * Clip container (`process` output): per clip one frames tensor
//!   `[T, H, W]` per modality and one labels tensor `[5, 13, 2]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex32;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use maepose_tensor::io::{read_raw, write_raw};

use crate::dsp::{rad_to_ra, rad_to_rd, to_clip, DspConfig, Map2, Modality, RadProcessor, JOINTS, TARGET_FRAMES};
use crate::error::{Error, Result};
use crate::radar::{IqCube, RadarConfig};
use crate::scene::{labels_from_joints, FigureScene, SceneConfig};
use crate::seed;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

/// Normalised frames of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    pub data: Vec<f32>,
    pub degenerate: bool,
}

/// One labelled clip with every extracted modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub person_id: usize,
    pub action_id: usize,
    pub interference: bool,
    /// `[T, H, W]`.
    pub dims: [usize; 3],
    pub metres_per_unit: [f64; 2],
    /// `[5, 13, 2]`.
    pub labels: Vec<f32>,
    pub frames: BTreeMap<Modality, Frames>,
}

impl Sample {
    pub fn key(&self) -> ClipKey {
        ClipKey { person_id: self.person_id, action_id: self.action_id }
    }

    pub fn modality(&self, m: Modality) -> Result<&Frames> {
        self.frames
            .get(&m)
            .ok_or_else(|| Error::Data(format!("clip {} has no {} frames", self.id, m.as_str())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClipKey {
    pub person_id: usize,
    pub action_id: usize,
}

/// Turns IQ frames into normalised clips for each requested modality.
pub struct Extractor {
    processor: RadProcessor,
    size: (usize, usize),
    modalities: Vec<Modality>,
}

impl Extractor {
    pub fn new(radar: &RadarConfig, dsp: &DspConfig, size: (usize, usize), modalities: &[Modality]) -> Result<Self> {
        if modalities.is_empty() {
            return Err(Error::Config("at least one modality is required".into()));
        }
        if size.0 == 0 || size.1 == 0 {
            return Err(Error::Config("clip size must be positive".into()));
        }
        let modalities: Vec<Modality> = modalities.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        Ok(Self {
            processor: RadProcessor::new(radar.n_chirps, radar.n_adc, radar.n_virtual_antennas, dsp)?,
            size,
            modalities,
        })
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    #[allow(clippy::too_many_arguments)]
    pub fn extract(
        &self,
        id: String,
        person_id: usize,
        action_id: usize,
        interference: bool,
        iq: &[IqCube],
        labels: Vec<f32>,
        metres_per_unit: [f64; 2],
    ) -> Result<Sample> {
        let mut rd = Vec::with_capacity(iq.len());
        let mut ra = Vec::with_capacity(iq.len());
        for cube in iq {
            let rad = self.processor.iq_to_rad(cube)?;
            rd.push(rad_to_rd(&rad));
            ra.push(rad_to_ra(&rad));
        }
        let mut frames = BTreeMap::new();
        let mut dims = [0; 3];
        for &m in &self.modalities {
            let maps: &[Map2] = match m {
                Modality::Rd => &rd,
                Modality::Ra => &ra,
            };
            let clip = to_clip(maps, m, labels.clone(), metres_per_unit, self.size)?;
            if clip.degenerate {
                log::warn!("clip {id} ({}) is constant; emitted as zeros", m.as_str());
            }
            dims = clip.dims;
            frames.insert(m, Frames { data: clip.frames, degenerate: clip.degenerate });
        }
        Ok(Sample { id, person_id, action_id, interference, dims, metres_per_unit, labels, frames })
    }

    /// Simulates and extracts one scene end to end.
    pub fn from_scene(&self, scene: &FigureScene, radar: &RadarConfig, cfg: &SceneConfig, root: u64) -> Result<Sample> {
        let iq = scene.synthesize(radar, root)?;
        self.extract(
            scene.id(),
            scene.person_id,
            scene.action_id,
            scene.has_bystander(),
            &iq,
            scene.labels(cfg),
            cfg.metres_per_unit(),
        )
    }
}

// ---------------------------------------------------------------- clip container

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameFile {
    pub file: String,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipRecord {
    pub id: String,
    pub person_id: usize,
    pub action_id: usize,
    /// `[T, H, W]`.
    pub dims: [usize; 3],
    pub metres_per_unit: [f64; 2],
    pub interference: bool,
    pub frames: BTreeMap<Modality, FrameFile>,
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub modalities: Vec<Modality>,
    pub seed: u64,
    pub clips: Vec<ClipRecord>,
}

impl DatasetManifest {
    pub fn keys(&self) -> Vec<ClipKey> {
        self.clips.iter().map(|c| ClipKey { person_id: c.person_id, action_id: c.action_id }).collect()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Corrupt(format!("unsupported format_version {}", m.format_version)));
        }
        check_dense(m.clips.iter().map(|c| c.person_id), "person")?;
        check_dense(m.clips.iter().map(|c| c.action_id), "action")?;
        Ok(m)
    }
}

fn check_dense(ids: impl Iterator<Item = usize>, what: &str) -> Result<()> {
    let set: BTreeSet<usize> = ids.collect();
    if let Some(&max) = set.last() {
        if set.len() != max + 1 {
            return Err(Error::Corrupt(format!("{what} ids are not dense: {set:?}")));
        }
    }
    Ok(())
}

fn write_tensor(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_raw(&mut w, shape, data)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_tensor(path: &Path, expect: &[usize]) -> Result<Vec<f32>> {
    let file = File::open(path).map_err(|_| Error::Corrupt(format!("missing file {}", path.display())))?;
    let (shape, data) =
        read_raw(BufReader::new(file)).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
    if shape != expect {
        return Err(Error::Corrupt(format!("{}: shape {shape:?}, manifest says {expect:?}", path.display())));
    }
    Ok(data)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn label_shape() -> [usize; 3] {
    [TARGET_FRAMES.len(), JOINTS, 2]
}

/// Writes `samples` under `dir` (created if needed).
pub fn write_dataset(dir: &Path, samples: &[Sample], seed: u64) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut modalities = BTreeSet::new();
    let mut clips = Vec::with_capacity(samples.len());
    for s in samples {
        let mut frames = BTreeMap::new();
        for (m, f) in &s.frames {
            modalities.insert(*m);
            let file = format!("{}.{}.rvt", s.id, m.as_str());
            write_tensor(&dir.join(&file), &s.dims, &f.data)?;
            frames.insert(*m, FrameFile { file, degenerate: f.degenerate });
        }
        let labels = format!("{}.labels.rvt", s.id);
        write_tensor(&dir.join(&labels), &label_shape(), &s.labels)?;
        clips.push(ClipRecord {
            id: s.id.clone(),
            person_id: s.person_id,
            action_id: s.action_id,
            dims: s.dims,
            metres_per_unit: s.metres_per_unit,
            interference: s.interference,
            frames,
            labels,
        });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        modalities: modalities.into_iter().collect(),
        seed,
        clips,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<Sample>)> {
    let manifest = DatasetManifest::load(dir)?;
    let mut samples = Vec::with_capacity(manifest.clips.len());
    for c in &manifest.clips {
        if c.metres_per_unit.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Corrupt(format!("clip {}: metres_per_unit must be positive", c.id)));
        }
        let mut frames = BTreeMap::new();
        for (m, f) in &c.frames {
            let data = read_tensor(&dir.join(&f.file), &c.dims)?;
            frames.insert(*m, Frames { data, degenerate: f.degenerate });
        }
        let labels = read_tensor(&dir.join(&c.labels), &label_shape())?;
        samples.push(Sample {
            id: c.id.clone(),
            person_id: c.person_id,
            action_id: c.action_id,
            interference: c.interference,
            dims: c.dims,
            metres_per_unit: c.metres_per_unit,
            labels,
            frames,
        });
    }
    Ok((manifest, samples))
}

// ---------------------------------------------------------------- IQ container

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IqRecord {
    pub id: String,
    pub person_id: usize,
    pub action_id: usize,
    pub interference: bool,
    pub iq: String,
    pub joints: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IqManifest {
    pub format_version: u32,
    pub seed: u64,
    pub frames: usize,
    pub radar: RadarConfig,
    pub scene: SceneConfig,
    pub clips: Vec<IqRecord>,
}

impl IqManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: IqManifest =
            serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Corrupt(format!("unsupported format_version {}", m.format_version)));
        }
        Ok(m)
    }

    fn iq_shape(&self) -> [usize; 5] {
        [self.frames, self.radar.n_chirps, self.radar.n_adc, self.radar.n_virtual_antennas, 2]
    }

    /// Loads one clip's cubes and joint track (metres).
    pub fn read_clip(&self, dir: &Path, rec: &IqRecord) -> Result<(Vec<IqCube>, Vec<[[f64; 2]; JOINTS]>)> {
        let shape = self.iq_shape();
        let raw = read_tensor(&dir.join(&rec.iq), &shape)?;
        let per = shape[1] * shape[2] * shape[3];
        let cubes = raw
            .chunks_exact(per * 2)
            .map(|frame| {
                let mut cube = IqCube::zeros(shape[1], shape[2], shape[3]);
                for (dst, pair) in cube.data.iter_mut().zip(frame.chunks_exact(2)) {
                    *dst = Complex32::new(pair[0], pair[1]);
                }
                cube
            })
            .collect();
        let j = read_tensor(&dir.join(&rec.joints), &[self.frames, JOINTS, 2])?;
        let joints = j
            .chunks_exact(JOINTS * 2)
            .map(|f| {
                let mut out = [[0.0; 2]; JOINTS];
                for (k, p) in out.iter_mut().enumerate() {
                    *p = [f[2 * k] as f64, f[2 * k + 1] as f64];
                }
                out
            })
            .collect();
        Ok((cubes, joints))
    }
}

/// Simulates every scene and writes the raw IQ container.
pub fn write_iq_dataset(
    dir: &Path,
    scenes: &[FigureScene],
    radar: &RadarConfig,
    cfg: &SceneConfig,
    root: u64,
) -> Result<IqManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let frames = scenes.first().map_or(0, |s| s.frames());
    let mut clips = Vec::with_capacity(scenes.len());
    for s in scenes {
        let cubes = s.synthesize(radar, root)?;
        let mut flat = Vec::with_capacity(cubes.len() * cubes[0].data.len() * 2);
        for c in &cubes {
            for v in &c.data {
                flat.push(v.re);
                flat.push(v.im);
            }
        }
        let id = s.id();
        let iq = format!("{id}.iq.rvt");
        write_tensor(
            &dir.join(&iq),
            &[frames, radar.n_chirps, radar.n_adc, radar.n_virtual_antennas, 2],
            &flat,
        )?;
        let joints = format!("{id}.joints.rvt");
        let jflat: Vec<f32> = s.joints().iter().flatten().flatten().map(|&v| v as f32).collect();
        write_tensor(&dir.join(&joints), &[frames, JOINTS, 2], &jflat)?;
        clips.push(IqRecord {
            id,
            person_id: s.person_id,
            action_id: s.action_id,
            interference: s.has_bystander(),
            iq,
            joints,
        });
    }
    let manifest = IqManifest {
        format_version: FORMAT_VERSION,
        seed: root,
        frames,
        radar: radar.clone(),
        scene: cfg.clone(),
        clips,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Reads an IQ container and extracts clips.
pub fn process_iq_dataset(dir: &Path, extractor: &Extractor) -> Result<(IqManifest, Vec<Sample>)> {
    let m = IqManifest::load(dir)?;
    let mut out = Vec::with_capacity(m.clips.len());
    for rec in &m.clips {
        let (cubes, joints) = m.read_clip(dir, rec)?;
        let labels = labels_from_joints(&joints, &m.scene);
        out.push(extractor.extract(
            rec.id.clone(),
            rec.person_id,
            rec.action_id,
            rec.interference,
            &cubes,
            labels,
            m.scene.metres_per_unit(),
        )?);
    }
    Ok((m, out))
}

// ---------------------------------------------------------------- LOPO splits

/// Indices refer to the clip order of the dataset the split was made from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LopoSplit {
    pub test_person: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub warnings: Vec<String>,
}

impl LopoSplit {
    /// Checks the split against the keys it was made from.
    pub fn validate(&self, keys: &[ClipKey]) -> Result<()> {
        let person = |i: &usize| keys[*i].person_id;
        if self.train.iter().chain(&self.val).any(|i| person(i) == self.test_person) {
            return Err(Error::Data(format!("test person {} leaked into train/val", self.test_person)));
        }
        if self.test.iter().any(|i| person(i) != self.test_person) {
            return Err(Error::Data("test set holds another person".into()));
        }
        let train: BTreeSet<_> = self.train.iter().collect();
        if self.val.iter().any(|i| train.contains(i)) {
            return Err(Error::Data("train and val overlap".into()));
        }
        let covered = self.train.len() + self.val.len() + self.test.len();
        if covered != keys.len() || train.len() != self.train.len() {
            return Err(Error::Data("split does not partition the dataset".into()));
        }
        Ok(())
    }
}

/// Splits `total` into integer quotas proportional to `ideal`, rounding by
/// largest remainder (ties to the earlier entry).
fn largest_remainder(ideal: &[f64], total: usize) -> Vec<usize> {
    let mut quota: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..ideal.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        quota[i] += 1;
    }
    quota
}

/// One split per person. Within the remaining clips a `val_fraction` holdout
/// is drawn per (person, action) stratum; strata with fewer than two clips
/// are pooled and drawn unstratified.
pub fn make_lopo_splits(keys: &[ClipKey], val_fraction: f64, seed: u64) -> Result<Vec<LopoSplit>> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config(format!("val_fraction must lie in (0, 1), got {val_fraction}")));
    }
    let persons: BTreeSet<usize> = keys.iter().map(|k| k.person_id).collect();
    if persons.len() < 2 {
        return Err(Error::Config("LOPO needs at least two persons".into()));
    }
    let mut splits = Vec::with_capacity(persons.len());
    for &test_person in &persons {
        let mut rng = seed::rng(seed, "lopo-split", test_person as u64);
        let mut strata: BTreeMap<ClipKey, Vec<usize>> = BTreeMap::new();
        let mut test = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            if k.person_id == test_person {
                test.push(i);
            } else {
                strata.entry(*k).or_default().push(i);
            }
        }
        let mut warnings = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut pool = Vec::new();
        for (k, idx) in strata {
            if idx.len() < 2 {
                warnings.push(format!(
                    "stratum (person {}, action {}) has {} clip; drawn unstratified",
                    k.person_id,
                    k.action_id,
                    idx.len()
                ));
                pool.extend(idx);
            } else {
                groups.push(idx);
            }
        }
        if !pool.is_empty() {
            groups.push(pool);
        }
        let n: usize = groups.iter().map(Vec::len).sum();
        let ideal: Vec<f64> = groups.iter().map(|g| g.len() as f64 * val_fraction).collect();
        let target = (n as f64 * val_fraction).round() as usize;
        let quota = largest_remainder(&ideal, target);

        let (mut train, mut val) = (Vec::new(), Vec::new());
        for (mut g, q) in groups.into_iter().zip(quota) {
            g.shuffle(&mut rng);
            val.extend_from_slice(&g[..q]);
            train.extend_from_slice(&g[q..]);
        }
        train.sort_unstable();
        val.sort_unstable();
        for w in &warnings {
            log::warn!("fold {test_person}: {w}");
        }
        let split = LopoSplit { test_person, train, val, test, warnings };
        split.validate(keys)?;
        splits.push(split);
    }
    Ok(splits)
}

/// Fails if any clip in `indices` belongs to `test_person`.
pub fn assert_no_leak(samples: &[Sample], indices: &[usize], test_person: usize) -> Result<()> {
    match indices.iter().find(|&&i| samples[i].person_id == test_person) {
        Some(&i) => Err(Error::Data(format!(
            "clip {} of test person {test_person} reached a training loader",
            samples[i].id
        ))),
        None => Ok(()),
    }
}

/// Shuffled mini-batches over `indices`; the last batch may be short.
pub fn batches<R: Rng>(indices: &[usize], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(persons: usize, actions: usize, clips: usize) -> Vec<ClipKey> {
        let mut out = Vec::new();
        for p in 0..persons {
            for a in 0..actions {
                for _ in 0..clips {
                    out.push(ClipKey { person_id: p, action_id: a });
                }
            }
        }
        out
    }

    #[test]
    fn nine_persons_nine_splits() {
        let k = keys(9, 10, 4);
        let splits = make_lopo_splits(&k, 0.1, 42).unwrap();
        assert_eq!(splits.len(), 9);
        for (p, s) in splits.iter().enumerate() {
            assert_eq!(s.test_person, p);
            assert_eq!(s.test.len(), 40);
            assert_eq!(s.val.len(), 32);
            assert_eq!(s.train.len(), 288);
            assert!(s.warnings.is_empty());
        }
        assert_eq!(splits, make_lopo_splits(&k, 0.1, 42).unwrap());
        assert_ne!(splits, make_lopo_splits(&k, 0.1, 43).unwrap());
    }

    #[test]
    fn singleton_strata_are_pooled_with_warning() {
        let k = keys(3, 4, 1);
        let splits = make_lopo_splits(&k, 0.25, 1).unwrap();
        for s in &splits {
            assert_eq!(s.warnings.len(), 8);
            assert_eq!(s.val.len(), 2);
        }
    }

    #[test]
    fn split_preconditions() {
        assert!(make_lopo_splits(&keys(1, 2, 2), 0.1, 0).is_err());
        assert!(make_lopo_splits(&keys(2, 2, 2), 0.0, 0).is_err());
        assert!(make_lopo_splits(&keys(2, 2, 2), 1.0, 0).is_err());
    }

    #[test]
    fn largest_remainder_hits_total() {
        assert_eq!(largest_remainder(&[0.4, 0.4, 0.4], 1), vec![1, 0, 0]);
        assert_eq!(largest_remainder(&[1.5, 0.7, 0.8], 3), vec![1, 1, 1]);
    }

    #[test]
    fn leak_check() {
        let s = Sample {
            id: "x".into(),
            person_id: 3,
            action_id: 0,
            interference: false,
            dims: [20, 1, 1],
            metres_per_unit: [1.0, 1.0],
            labels: vec![],
            frames: BTreeMap::new(),
        };
        assert!(assert_no_leak(std::slice::from_ref(&s), &[0], 3).is_err());
        assert!(assert_no_leak(std::slice::from_ref(&s), &[0], 2).is_ok());
    }
}
