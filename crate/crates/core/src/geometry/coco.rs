//! COCO instance-segmentation files: polygons and run-length encodings.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::raster::Bitmap;
use super::GeometryError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RleCounts {
    Raw(Vec<u64>),
    Compressed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`
    pub size: [u32; 2],
    pub counts: RleCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    Polygons(Vec<Vec<f64>>),
    Rle(Rle),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    #[serde(default)]
    pub id: Option<u64>,
    pub image_id: u64,
    #[serde(default = "default_category")]
    pub category_id: u64,
    pub segmentation: Segmentation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

fn default_category() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

/// The on-disk document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoFile {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    pub categories: Vec<CocoCategory>,
}

/// One decoded instance mask.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceMask {
    /// One or more simple polygons in pixel coordinates.
    Polygons(Vec<Vec<[f64; 2]>>),
    Raster(Bitmap),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub category_id: u64,
    pub score: Option<f64>,
    pub mask: InstanceMask,
}

/// A validated segmentation result: images and the instances on each.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationSet {
    pub images: Vec<CocoImage>,
    /// Keyed by image id.
    pub instances: BTreeMap<u64, Vec<Instance>>,
}

impl SegmentationSet {
    pub fn instances_of(&self, image_id: u64) -> &[Instance] {
        self.instances
            .get(&image_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn instance_count(&self) -> usize {
        self.instances.values().map(Vec::len).sum()
    }
}

/// Reads and validates a COCO file.
pub fn load_segmentation(path: impl AsRef<Path>) -> Result<SegmentationSet, GeometryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GeometryError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let file: CocoFile =
        serde_json::from_str(&text).map_err(|e| GeometryError::Schema(e.to_string()))?;
    from_coco(file)
}

pub fn from_coco(file: CocoFile) -> Result<SegmentationSet, GeometryError> {
    let mut by_id: HashMap<u64, &CocoImage> = HashMap::new();
    let mut names = HashSet::new();
    for img in &file.images {
        if by_id.insert(img.id, img).is_some() {
            return Err(GeometryError::Schema(format!(
                "duplicate image id {}",
                img.id
            )));
        }
        if !names.insert(img.file_name.as_str()) {
            return Err(GeometryError::Schema(format!(
                "duplicate file_name `{}`",
                img.file_name
            )));
        }
        if img.width == 0 || img.height == 0 {
            return Err(GeometryError::Schema(format!(
                "image {} has zero size",
                img.id
            )));
        }
    }
    let mut instances: BTreeMap<u64, Vec<Instance>> = BTreeMap::new();
    for (i, ann) in file.annotations.iter().enumerate() {
        let img = by_id.get(&ann.image_id).ok_or_else(|| {
            GeometryError::Schema(format!(
                "annotation {i} references missing image id {}",
                ann.image_id
            ))
        })?;
        let mask = decode_segmentation(&ann.segmentation, img)
            .map_err(|e| e.with_context(&format!("annotation {i}")))?;
        instances.entry(img.id).or_default().push(Instance {
            category_id: ann.category_id,
            score: ann.score,
            mask,
        });
    }
    Ok(SegmentationSet {
        images: file.images,
        instances,
    })
}

fn decode_segmentation(seg: &Segmentation, img: &CocoImage) -> Result<InstanceMask, GeometryError> {
    match seg {
        Segmentation::Polygons(polys) => {
            if polys.is_empty() {
                return Err(GeometryError::Schema("empty polygon list".into()));
            }
            let mut rings = Vec::with_capacity(polys.len());
            for flat in polys {
                if flat.len() < 6 || flat.len() % 2 != 0 {
                    return Err(GeometryError::Schema(format!(
                        "polygon needs at least 3 vertices, got {} coordinates",
                        flat.len()
                    )));
                }
                let ring: Vec<[f64; 2]> = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
                for p in &ring {
                    let inside = p[0].is_finite()
                        && p[1].is_finite()
                        && (0.0..=f64::from(img.width)).contains(&p[0])
                        && (0.0..=f64::from(img.height)).contains(&p[1]);
                    if !inside {
                        return Err(GeometryError::OutOfBounds(format!(
                            "vertex ({}, {}) outside {}x{} image `{}`",
                            p[0], p[1], img.width, img.height, img.file_name
                        )));
                    }
                }
                rings.push(ring);
            }
            Ok(InstanceMask::Polygons(rings))
        }
        Segmentation::Rle(rle) => {
            let [h, w] = rle.size;
            if h != img.height || w != img.width {
                return Err(GeometryError::OutOfBounds(format!(
                    "RLE size {h}x{w} does not match image `{}` ({}x{})",
                    img.file_name, img.height, img.width
                )));
            }
            Ok(InstanceMask::Raster(decode_rle(rle)?))
        }
    }
}

/// Decodes a column-major COCO RLE into a row-major bitmap.
pub fn decode_rle(rle: &Rle) -> Result<Bitmap, GeometryError> {
    let [h, w] = rle.size;
    let counts = match &rle.counts {
        RleCounts::Raw(c) => c.clone(),
        RleCounts::Compressed(s) => decompress_counts(s)?,
    };
    let total = u64::from(h) * u64::from(w);
    let sum: u64 = counts.iter().sum();
    if sum != total {
        return Err(GeometryError::OutOfBounds(format!(
            "RLE counts cover {sum} pixels, mask has {total}"
        )));
    }
    let mut bitmap = Bitmap::new(w, h);
    let mut pos: u64 = 0;
    for (i, &run) in counts.iter().enumerate() {
        if i % 2 == 1 {
            for k in pos..pos + run {
                let x = (k / u64::from(h)) as u32;
                let y = (k % u64::from(h)) as u32;
                bitmap.set(x, y, true);
            }
        }
        pos += run;
    }
    Ok(bitmap)
}

/// Encodes a bitmap as uncompressed column-major counts.
pub fn encode_rle(bitmap: &Bitmap) -> Rle {
    let (w, h) = (bitmap.width(), bitmap.height());
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for x in 0..w {
        for y in 0..h {
            let v = bitmap.get(x, y);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        size: [h, w],
        counts: RleCounts::Raw(counts),
    }
}

/// The LEB128-like string form used by COCO tooling.
pub fn decompress_counts(s: &str) -> Result<Vec<u64>, GeometryError> {
    let bytes = s.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0;
        loop {
            let Some(&byte) = bytes.get(p) else {
                return Err(GeometryError::Schema("truncated compressed RLE".into()));
            };
            let c = i64::from(byte) - 48;
            if !(0..64).contains(&c) {
                return Err(GeometryError::Schema(
                    "invalid compressed RLE character".into(),
                ));
            }
            x |= (c & 0x1f) << (5 * k);
            p += 1;
            k += 1;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        counts.push(x);
    }
    counts
        .into_iter()
        .map(|c| u64::try_from(c).map_err(|_| GeometryError::Schema("negative RLE run".into())))
        .collect()
}

pub fn compress_counts(counts: &[u64]) -> String {
    let mut out = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let mut x = c as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut c = x & 0x1f;
            x >>= 5;
            let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                c |= 0x20;
            }
            out.push(char::from((c + 48) as u8));
            if !more {
                break;
            }
        }
    }
    out
}
