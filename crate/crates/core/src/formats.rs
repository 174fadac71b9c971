//! On-disk formats.
//!
//! Tactile frames and sample tensors go into the `TFRM` binary container;
//! everything else is JSON or line-delimited JSON. Every artifact carries an
//! [`ArtifactHeader`] with the configuration hash and seed.

use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::dataset::{GenerationStats, Split};
use crate::classifier::preprocess::{SampleTensor, SAMPLE_CHANNELS};
use crate::classifier::TactileFrame;
use crate::error::{Error, Result};
use crate::kinematics::Pose;

pub const FRAME_MAGIC: [u8; 4] = *b"TFRM";
pub const FRAME_VERSION: u16 = 1;
/// Schema version shared by the JSON artifacts.
pub const SCHEMA_VERSION: u32 = 1;

pub const FLAG_RGB: u16 = 1;
pub const FLAG_LABELS: u16 = 1 << 1;
/// Depth plane holds deformation over fingertip radius instead of mm.
pub const FLAG_DEPTH_NORMALISED: u16 = 1 << 2;

const HEADER_LEN: usize = 4 + 2 + 2 + 4 + 8 + 7 * 8 + 8;

/// A frame with where and when it was taken.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub frame: TactileFrame,
    /// Sensor pose in the gripper frame.
    pub pose: Pose,
    /// Simulated seconds since the start of the run.
    pub timestamp: f64,
    pub depth_normalised: bool,
}

impl FrameRecord {
    pub fn new(frame: TactileFrame) -> Self {
        Self {
            frame,
            pose: Pose::identity(),
            timestamp: 0.0,
            depth_normalised: false,
        }
    }
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serialise to the `TFRM` layout. RGB and label planes are written when
/// non-empty.
pub fn encode_frame(rec: &FrameRecord) -> Vec<u8> {
    let f = &rec.frame;
    let n = f.size;
    let has_rgb = !f.rgb.is_empty();
    let has_labels = !f.labels.is_empty();
    let mut flags = 0;
    if has_rgb {
        flags |= FLAG_RGB;
    }
    if has_labels {
        flags |= FLAG_LABELS;
    }
    if rec.depth_normalised {
        flags |= FLAG_DEPTH_NORMALISED;
    }
    let mut out = Vec::with_capacity(HEADER_LEN + n * n * 17);
    out.extend_from_slice(&FRAME_MAGIC);
    out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    put_f64(&mut out, f.fingertip_radius);
    let p = rec.pose.position;
    let q = UnitQuaternion::from_rotation_matrix(&rec.pose.orientation);
    for v in [p.x, p.y, p.z, q.w, q.i, q.j, q.k] {
        put_f64(&mut out, v);
    }
    put_f64(&mut out, rec.timestamp);
    for v in &f.depth {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if has_rgb {
        for v in &f.rgb {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if has_labels {
        out.extend_from_slice(&f.labels);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated")?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> std::result::Result<Vec<f32>, String> {
        Ok(self
            .take(n.checked_mul(4).ok_or("size overflow")?)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn decode_inner(buf: &[u8]) -> std::result::Result<FrameRecord, String> {
    let mut r = Reader { buf, at: 0 };
    if r.take(4)? != FRAME_MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u16()?;
    if version != FRAME_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let flags = r.u16()?;
    let n = r.u32()? as usize;
    let radius = r.f64()?;
    let mut v = [0.0; 7];
    for x in &mut v {
        *x = r.f64()?;
    }
    let timestamp = r.f64()?;
    let cells = n.checked_mul(n).ok_or("size overflow")?;
    let depth = r.f32s(cells)?;
    let rgb = if flags & FLAG_RGB != 0 { r.f32s(3 * cells)? } else { Vec::new() };
    let labels = if flags & FLAG_LABELS != 0 {
        r.take(cells)?.to_vec()
    } else {
        Vec::new()
    };
    if r.at != buf.len() {
        return Err(format!("{} trailing bytes", buf.len() - r.at));
    }
    let q = UnitQuaternion::from_quaternion(Quaternion::new(v[3], v[4], v[5], v[6]));
    Ok(FrameRecord {
        frame: TactileFrame {
            size: n,
            fingertip_radius: radius,
            rgb,
            depth,
            labels,
        },
        pose: Pose::new(Vector3::new(v[0], v[1], v[2]), q.to_rotation_matrix()),
        timestamp,
        depth_normalised: flags & FLAG_DEPTH_NORMALISED != 0,
    })
}

pub fn decode_frame(buf: &[u8]) -> Result<FrameRecord> {
    decode_inner(buf).map_err(|reason| Error::Format {
        path: "<memory>".into(),
        reason,
    })
}

pub fn write_frame(path: impl AsRef<Path>, rec: &FrameRecord) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_frame(rec)).map_err(|e| Error::io(path, e))
}

pub fn read_frame(path: impl AsRef<Path>) -> Result<FrameRecord> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_inner(&buf).map_err(|reason| Error::format(path, reason))
}

/// A sample tensor as a container record: channels 0..3 become the RGB
/// plane, channel 3 the normalised depth plane, channel 4 the label mask.
pub fn sample_to_record(t: &SampleTensor, fingertip_radius: f64) -> FrameRecord {
    let n = t.size;
    let (r, g, b) = (t.channel(0), t.channel(1), t.channel(2));
    let rgb = (0..n * n).flat_map(|i| [r[i], g[i], b[i]]).collect();
    FrameRecord {
        frame: TactileFrame {
            size: n,
            fingertip_radius,
            rgb,
            depth: t.channel(3).to_vec(),
            labels: t.channel(4).iter().map(|&m| u8::from(m > 0.5)).collect(),
        },
        pose: Pose::identity(),
        timestamp: 0.0,
        depth_normalised: true,
    }
}

pub fn record_to_sample(rec: &FrameRecord) -> Result<SampleTensor> {
    let f = &rec.frame;
    let n = f.size;
    if !rec.depth_normalised || f.rgb.len() != 3 * n * n || f.labels.len() != n * n || f.depth.len() != n * n {
        return Err(Error::InvalidParameter(
            "record is not a sample tensor (needs rgb, labels and normalised depth)".into(),
        ));
    }
    let mut data = Vec::with_capacity(SAMPLE_CHANNELS * n * n);
    for c in 0..3 {
        data.extend((0..n * n).map(|i| f.rgb[3 * i + c]));
    }
    data.extend_from_slice(&f.depth);
    data.extend(f.labels.iter().map(|&l| f32::from(l)));
    Ok(SampleTensor { size: n, data })
}

/// Provenance stamped on every artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub schema_version: u32,
    /// What the file holds, e.g. `episode-reports`.
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl ArtifactHeader {
    pub fn new(kind: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            config_hash: config_hash.into(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// SHA-256 over named configuration texts, hex encoded. Names and texts are
/// length-prefixed so that no two inputs collide by concatenation.
pub fn config_hash(parts: &[(&str, &str)]) -> String {
    let mut h = Sha256::new();
    for (name, text) in parts {
        for s in [name, text] {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Sidecar written next to each stored sample tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub header: ArtifactHeader,
    /// Container file, relative to the sidecar's directory.
    pub tensor_file: String,
    pub class_id: u8,
    pub split: Split,
    pub press: usize,
    pub frame: usize,
    pub pca_center: [f64; 2],
    pub pca_angle: f64,
    /// (height, width, channels).
    pub tensor_shape: [usize; 3],
    pub channel_order: Vec<String>,
}

impl SampleSidecar {
    pub fn channel_order() -> Vec<String> {
        ["r", "g", "b", "depth", "mask"].map(String::from).to_vec()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Container file, relative to the manifest.
    pub file: String,
    pub sidecar: String,
    pub class_id: u8,
    pub split: Split,
    pub press: usize,
    pub frame: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub header: ArtifactHeader,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub fingertip_radius: f64,
    /// Indexed by class id - 1.
    pub per_class_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    pub stats: GenerationStats,
    pub samples: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut counts = vec![0; self.per_class_counts.len()];
        let mut test = vec![0; self.test_counts.len()];
        for e in &self.samples {
            let i = e.class_id as usize;
            if i == 0 || i > counts.len() {
                return Err(Error::InvalidParameter(format!("class id {} out of range", e.class_id)));
            }
            counts[i - 1] += 1;
            if e.split == Split::Test {
                test[i - 1] += 1;
            }
        }
        if counts != self.per_class_counts || test != self.test_counts {
            return Err(Error::InvalidParameter("manifest counts disagree with its samples".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = read_json(path.as_ref())?;
        m.validate()?;
        Ok(m)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serialises");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
