//! On-disk formats.
//!
//! Fields and raw images share one layout: a single line of JSON describing
//! the arrays that follow, a `\n`, then the arrays back to back as
//! little-endian floats. Writers always emit `<f8` so a round trip is
//! bit-exact; readers also accept `<f4`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Camera, GaussianField, ImageBuffer, Intrinsics, SceneBounds, SceneDataset};
use crate::error::{Error, Result};

const FIELD_MAGIC: &str = "corgs-field";
const RAW_MAGIC: &str = "corgs-raw";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    magic: String,
    version: u32,
    count: usize,
    arrays: Vec<ArrayHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawHeader {
    magic: String,
    version: u32,
    width: usize,
    height: usize,
    channels: usize,
    dtype: String,
}

const FIELD_ARRAYS: [(&str, usize); 5] = [
    ("positions", 3),
    ("log_scales", 3),
    ("rotations", 4),
    ("opacity_logits", 1),
    ("color_logits", 3),
];

fn split_header(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    match bytes.iter().position(|&b| b == b'\n') {
        Some(n) => Ok((&bytes[..n], &bytes[n + 1..])),
        None => Err(Error::format(
            bytes.len() as u64,
            "missing header terminator",
        )),
    }
}

fn dtype_width(dtype: &str, offset: u64) -> Result<usize> {
    match dtype {
        "<f8" => Ok(8),
        "<f4" => Ok(4),
        other => Err(Error::format(offset, format!("unsupported dtype {other:?}"))),
    }
}

/// Sequential little-endian float reader that tracks absolute offsets.
struct Payload<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: u64,
}

impl Payload<'_> {
    fn take(&mut self, n: usize, width: usize, what: &str) -> Result<Vec<f64>> {
        let need = n * width;
        let avail = self.bytes.len() - self.pos;
        if avail < need {
            return Err(Error::format(
                self.base + self.bytes.len() as u64,
                format!(
                    "truncated payload in {what}: need {need} bytes, {avail} available ({} of {n} values)",
                    avail / width
                ),
            ));
        }
        let chunk = &self.bytes[self.pos..self.pos + need];
        self.pos += need;
        Ok(match width {
            8 => chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
            _ => chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect(),
        })
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.base + self.pos as u64,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn push_f64s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a field to bytes.
pub fn write_field(field: &GaussianField) -> Result<Vec<u8>> {
    let n = field.len();
    let header = FieldHeader {
        magic: FIELD_MAGIC.into(),
        version: FORMAT_VERSION,
        count: n,
        arrays: FIELD_ARRAYS
            .iter()
            .map(|&(name, w)| ArrayHeader {
                name: name.into(),
                dtype: "<f8".into(),
                shape: vec![n, w],
            })
            .collect(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    push_f64s(&mut out, field.positions.iter().flatten().copied());
    push_f64s(&mut out, field.log_scales.iter().flatten().copied());
    push_f64s(&mut out, field.rotations.iter().flatten().copied());
    push_f64s(&mut out, field.opacity_logits.iter().copied());
    push_f64s(&mut out, field.color_logits.iter().flatten().copied());
    Ok(out)
}

/// Parse a field from bytes.
pub fn read_field(bytes: &[u8]) -> Result<GaussianField> {
    let (head, body) = split_header(bytes)?;
    let header: FieldHeader = serde_json::from_slice(head)
        .map_err(|e| Error::format(e.column().saturating_sub(1) as u64, format!("malformed header: {e}")))?;
    if header.magic != FIELD_MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", header.magic)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::format(
            0,
            format!("version mismatch: file {}, expected {FORMAT_VERSION}", header.version),
        ));
    }
    if header.arrays.len() != FIELD_ARRAYS.len() {
        return Err(Error::format(0, "unexpected array list in header"));
    }
    let n = header.count;
    let mut payload = Payload {
        bytes: body,
        pos: 0,
        base: head.len() as u64 + 1,
    };
    let mut columns = Vec::with_capacity(FIELD_ARRAYS.len());
    for (array, &(name, w)) in header.arrays.iter().zip(&FIELD_ARRAYS) {
        if array.name != name || array.shape != [n, w] {
            return Err(Error::format(
                0,
                format!("array {:?} shape {:?} does not match expected {name} [{n}, {w}]", array.name, array.shape),
            ));
        }
        let width = dtype_width(&array.dtype, 0)?;
        columns.push(payload.take(n * w, width, name)?);
    }
    payload.finish()?;
    fn rows<const W: usize>(v: &[f64]) -> Vec<[f64; W]> {
        v.chunks_exact(W).map(|c| c.try_into().unwrap()).collect()
    }
    let field = GaussianField {
        positions: rows::<3>(&columns[0]),
        log_scales: rows::<3>(&columns[1]),
        rotations: rows::<4>(&columns[2]),
        opacity_logits: columns[3].clone(),
        color_logits: rows::<3>(&columns[4]),
    };
    Ok(field)
}

pub fn save_field(field: &GaussianField, path: impl AsRef<Path>) -> Result<()> {
    let bytes = write_field(field)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<GaussianField> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    read_field(&bytes)
}

pub fn write_raw_image(img: &ImageBuffer) -> Result<Vec<u8>> {
    img.validate()?;
    let header = RawHeader {
        magic: RAW_MAGIC.into(),
        version: FORMAT_VERSION,
        width: img.width,
        height: img.height,
        channels: img.channels,
        dtype: "<f8".into(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    push_f64s(&mut out, img.data.iter().copied());
    Ok(out)
}

pub fn read_raw_image(bytes: &[u8]) -> Result<ImageBuffer> {
    let (head, body) = split_header(bytes)?;
    let header: RawHeader = serde_json::from_slice(head)
        .map_err(|e| Error::format(e.column().saturating_sub(1) as u64, format!("malformed header: {e}")))?;
    if header.magic != RAW_MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", header.magic)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::format(
            0,
            format!("version mismatch: file {}, expected {FORMAT_VERSION}", header.version),
        ));
    }
    let width = dtype_width(&header.dtype, 0)?;
    let mut payload = Payload {
        bytes: body,
        pos: 0,
        base: head.len() as u64 + 1,
    };
    let n = header.width * header.height * header.channels;
    let data = payload.take(n, width, "pixels")?;
    payload.finish()?;
    ImageBuffer::from_vec(header.width, header.height, header.channels, data)
        .map_err(|e| Error::format(0, e.to_string()))
}

pub fn save_raw_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_raw_image(img)?)?;
    Ok(())
}

pub fn load_raw_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    read_raw_image(&fs::read(path)?)
}

/// 8-bit PNG for viewing. Single-channel images are written as grayscale,
/// scaled by `1 / max` so depth maps stay visible.
pub fn save_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    img.validate()?;
    let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    if img.channels == 3 {
        let buf: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
        image::RgbImage::from_raw(img.width as u32, img.height as u32, buf)
            .expect("buffer size matches")
            .save(path)?;
    } else {
        let max = img.data.iter().copied().fold(0.0f64, f64::max);
        let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
        let buf: Vec<u8> = img.data.iter().map(|&v| to_u8(v * scale)).collect();
        image::GrayImage::from_raw(img.width as u32, img.height as u32, buf)
            .expect("buffer size matches")
            .save(path)?;
    }
    Ok(())
}

/// One camera in `cameras.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: usize,
    pub h: usize,
    pub quat: [f64; 4],
    pub trans: [f64; 3],
}

impl From<&Camera> for CameraRecord {
    fn from(c: &Camera) -> Self {
        let k = &c.intrinsics;
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            w: k.width,
            h: k.height,
            quat: c.rotation,
            trans: c.translation,
        }
    }
}

impl CameraRecord {
    pub fn to_camera(&self) -> Result<Camera> {
        Camera::new(
            Intrinsics {
                fx: self.fx,
                fy: self.fy,
                cx: self.cx,
                cy: self.cy,
                width: self.w,
                height: self.h,
            },
            self.quat,
            self.trans,
        )
    }
}

/// Contents of `cameras.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSet {
    pub version: u32,
    pub scene_bounds: SceneBounds,
    pub background: [f64; 3],
    pub train: Vec<CameraRecord>,
    pub test: Vec<CameraRecord>,
}

fn view_stem(split: &str, i: usize) -> String {
    format!("{split}_{i:03}")
}

/// Write a dataset directory: `cameras.json`, `images/{train,test}_NNN.{png,raw}`,
/// `depths/test_NNN.raw`, `depths/test_NNN_alpha.raw` and `gt_field.bin`.
pub fn save_dataset(ds: &SceneDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("images"))?;
    let cams = CameraSet {
        version: FORMAT_VERSION,
        scene_bounds: ds.scene_bounds,
        background: ds.background,
        train: ds.train_cameras.iter().map(CameraRecord::from).collect(),
        test: ds.test_cameras.iter().map(CameraRecord::from).collect(),
    };
    let mut json = serde_json::to_vec_pretty(&cams)?;
    json.push(b'\n');
    fs::write(dir.join("cameras.json"), json)?;
    for (split, images) in [("train", &ds.train_images), ("test", &ds.test_images)] {
        for (i, img) in images.iter().enumerate() {
            let stem = view_stem(split, i);
            save_raw_image(img, dir.join("images").join(format!("{stem}.raw")))?;
            save_png(img, dir.join("images").join(format!("{stem}.png")))?;
        }
    }
    if ds.test_depths.is_some() || ds.test_alphas.is_some() {
        fs::create_dir_all(dir.join("depths"))?;
    }
    if let Some(depths) = &ds.test_depths {
        for (i, d) in depths.iter().enumerate() {
            save_raw_image(d, dir.join("depths").join(format!("{}.raw", view_stem("test", i))))?;
        }
    }
    if let Some(alphas) = &ds.test_alphas {
        for (i, a) in alphas.iter().enumerate() {
            save_raw_image(
                a,
                dir.join("depths").join(format!("{}_alpha.raw", view_stem("test", i))),
            )?;
        }
    }
    if let Some(gt) = &ds.ground_truth {
        save_field(gt, dir.join("gt_field.bin"))?;
    }
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<SceneDataset> {
    let dir = dir.as_ref();
    let cams: CameraSet = serde_json::from_slice(&fs::read(dir.join("cameras.json"))?)?;
    if cams.version != FORMAT_VERSION {
        return Err(Error::format(0, format!("cameras.json version {} unsupported", cams.version)));
    }
    let load_split = |split: &str, n: usize| -> Result<Vec<ImageBuffer>> {
        (0..n)
            .map(|i| load_raw_image(dir.join("images").join(format!("{}.raw", view_stem(split, i)))))
            .collect()
    };
    let train_cameras = cams.train.iter().map(|c| c.to_camera()).collect::<Result<Vec<_>>>()?;
    let test_cameras = cams.test.iter().map(|c| c.to_camera()).collect::<Result<Vec<_>>>()?;
    let train_images = load_split("train", train_cameras.len())?;
    let test_images = load_split("test", test_cameras.len())?;
    let optional = |suffix: &str| -> Result<Option<Vec<ImageBuffer>>> {
        let first = dir.join("depths").join(format!("{}{suffix}.raw", view_stem("test", 0)));
        if test_cameras.is_empty() || !first.exists() {
            return Ok(None);
        }
        (0..test_cameras.len())
            .map(|i| load_raw_image(dir.join("depths").join(format!("{}{suffix}.raw", view_stem("test", i)))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    };
    let test_depths = optional("")?;
    let test_alphas = optional("_alpha")?;
    let gt_path = dir.join("gt_field.bin");
    let ground_truth = if gt_path.exists() {
        Some(load_field(gt_path)?)
    } else {
        None
    };
    let ds = SceneDataset {
        train_cameras,
        test_cameras,
        train_images,
        test_images,
        test_depths,
        test_alphas,
        ground_truth,
        scene_bounds: cams.scene_bounds,
        background: cams.background,
    };
    ds.validate()?;
    Ok(ds)
}
