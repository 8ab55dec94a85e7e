//! Dataset splitting and the binary sketch cache.
//!
//! Cache layout (all integers little-endian):
//!
//! ```text
//! "INKD" | version u16 | class_count u32 | record_count u32 | strategy u8
//! record* := byte_len u32 | payload
//! payload := label u32 (u32::MAX = none) | stroke_count u32
//!            | (point_count u32 | (x f64, y f64)*)*
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stroke::{Point, Sketch, Stroke};

pub const CACHE_MAGIC: &[u8; 4] = b"INKD";
pub const CACHE_VERSION: u16 = 1;

/// Which generator (if any) produced the sketches in a cache file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetTag {
    Clean,
    Distraction,
    Dotted,
    Rebus,
}

impl DatasetTag {
    fn to_byte(self) -> u8 {
        match self {
            DatasetTag::Clean => 0,
            DatasetTag::Distraction => 1,
            DatasetTag::Dotted => 2,
            DatasetTag::Rebus => 3,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            0 => DatasetTag::Clean,
            1 => DatasetTag::Distraction,
            2 => DatasetTag::Dotted,
            3 => DatasetTag::Rebus,
            other => return Err(Error::parse("strategy", format!("unknown tag {other}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetTag::Clean => "clean",
            DatasetTag::Distraction => "distraction",
            DatasetTag::Dotted => "dotted",
            DatasetTag::Rebus => "rebus",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub class_count: usize,
    pub tag: DatasetTag,
    pub sketches: Vec<Sketch>,
}

impl Dataset {
    pub fn new(class_count: usize, tag: DatasetTag, sketches: Vec<Sketch>) -> Result<Self> {
        for (i, s) in sketches.iter().enumerate() {
            if let Some(l) = s.label {
                if l >= class_count {
                    return Err(Error::Contract(format!(
                        "sketch {i} has label {l} but only {class_count} classes exist"
                    )));
                }
            }
        }
        Ok(Dataset {
            class_count,
            tag,
            sketches,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.class_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.sketches.len() as u32).to_le_bytes());
        out.push(self.tag.to_byte());
        let mut payload = Vec::new();
        for s in &self.sketches {
            payload.clear();
            payload.extend_from_slice(&s.label.map_or(u32::MAX, |l| l as u32).to_le_bytes());
            payload.extend_from_slice(&(s.strokes.len() as u32).to_le_bytes());
            for stroke in &s.strokes {
                payload.extend_from_slice(&(stroke.len() as u32).to_le_bytes());
                for p in stroke.points() {
                    payload.extend_from_slice(&p.x.to_le_bytes());
                    payload.extend_from_slice(&p.y.to_le_bytes());
                }
            }
            out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
            out.extend_from_slice(&payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != CACHE_MAGIC {
            return Err(Error::parse("magic", "not an INKD dataset cache"));
        }
        let version = r.u16()?;
        if version != CACHE_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CACHE_VERSION,
            });
        }
        let class_count = r.u32()? as usize;
        let record_count = r.u32()? as usize;
        let tag = DatasetTag::from_byte(r.u8()?)?;

        let mut sketches = Vec::with_capacity(record_count);
        for i in 0..record_count {
            let len = r.u32()? as usize;
            let mut rec = ByteReader::new(r.take(len)?);
            let label = match rec.u32()? {
                u32::MAX => None,
                l => Some(l as usize),
            };
            let stroke_count = rec.u32()? as usize;
            let mut strokes = Vec::with_capacity(stroke_count);
            for _ in 0..stroke_count {
                let n = rec.u32()? as usize;
                let mut pts = Vec::with_capacity(n);
                for _ in 0..n {
                    pts.push(Point::new(rec.f64()?, rec.f64()?));
                }
                strokes.push(Stroke::new(pts)?);
            }
            if !rec.is_empty() {
                return Err(Error::parse(&format!("record[{i}]"), "trailing bytes"));
            }
            sketches.push(Sketch::new(strokes, label)?);
        }
        if !r.is_empty() {
            return Err(Error::parse("records", "trailing bytes after last record"));
        }
        Dataset::new(class_count, tag, sketches)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Dataset::from_bytes(&bytes)
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::parse("bytes", "unexpected end of data"));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Sketch>,
    pub validation: Vec<Sketch>,
    pub test: Vec<Sketch>,
    pub seed: u64,
}

/// Partitions `sketches` into train/validation/test.
///
/// Sizes are `round(n * ratio)` for validation and test; train takes the
/// rest. When every sketch is labeled and every class has at least three
/// examples the split is stratified: each class is shuffled and its members
/// are spread evenly over one interleaved ordering, so every prefix carries
/// close to the global class proportions.
pub fn split_dataset(
    sketches: &[Sketch],
    val_ratio: f64,
    test_ratio: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if sketches.is_empty() {
        return Err(Error::arg("cannot split an empty dataset"));
    }
    if !(val_ratio >= 0.0 && test_ratio >= 0.0 && val_ratio + test_ratio < 1.0) {
        return Err(Error::arg(format!(
            "ratios must be >= 0 with sum < 1 (got {val_ratio}, {test_ratio})"
        )));
    }
    let n = sketches.len();
    let n_val = (n as f64 * val_ratio).round() as usize;
    let n_test = (n as f64 * test_ratio).round() as usize;
    let n_test = n_test.min(n);
    let n_val = n_val.min(n - n_test);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = match stratify_groups(sketches) {
        Some(groups) => {
            let mut keyed = Vec::with_capacity(n);
            for (class, mut members) in groups {
                members.shuffle(&mut rng);
                let m = members.len() as f64;
                for (i, idx) in members.into_iter().enumerate() {
                    keyed.push(((i as f64 + 0.5) / m, class, idx));
                }
            }
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keyed.into_iter().map(|(_, _, idx)| idx).collect::<Vec<_>>()
        }
        None => {
            log::info!("split_dataset: some class has fewer than 3 examples, splitting unstratified");
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx
        }
    };

    let pick = |range: &[usize]| range.iter().map(|&i| sketches[i].clone()).collect();
    Ok(DatasetSplit {
        test: pick(&order[..n_test]),
        validation: pick(&order[n_test..n_test + n_val]),
        train: pick(&order[n_test + n_val..]),
        seed,
    })
}

fn stratify_groups(sketches: &[Sketch]) -> Option<BTreeMap<usize, Vec<usize>>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in sketches.iter().enumerate() {
        groups.entry(s.label?).or_default().push(i);
    }
    groups.values().all(|g| g.len() >= 3).then_some(groups)
}
