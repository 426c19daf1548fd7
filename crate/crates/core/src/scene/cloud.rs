use std::io::{self, BufRead, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::kinematics::Pose;

pub const CLOUD_MAGIC: &[u8; 7] = b"ARCPCD1";
/// Bytes per point record: three f32 coordinates and three u8 colors.
pub const POINT_RECORD_LEN: usize = 15;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("bad cloud magic")]
    BadMagic,
    #[error("cloud truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("non-finite coordinate in point {index}")]
    NonFinite { index: usize },
    #[error("line {line}: {reason}")]
    Text { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Point cloud with per-point color. Coordinates are stored at the f32
/// precision they travel with on disk and on the wire.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColoredPointCloud {
    pub points: Vec<[f32; 3]>,
    pub colors: Vec<[u8; 3]>,
}

impl ColoredPointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        ColoredPointCloud {
            points: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: [f32; 3], rgb: [u8; 3]) {
        self.points.push(p);
        self.colors.push(rgb);
    }

    pub fn extend(&mut self, other: &ColoredPointCloud) {
        self.points.extend_from_slice(&other.points);
        self.colors.extend_from_slice(&other.colors);
    }

    pub fn point(&self, i: usize) -> Vector3<f64> {
        let [x, y, z] = self.points[i];
        Vector3::new(x as f64, y as f64, z as f64)
    }

    pub fn iter_f64(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().flatten().all(|c| c.is_finite())
    }

    /// Applies `pose` to every point, rounding the result to f32.
    pub fn transformed(&self, pose: &Pose) -> ColoredPointCloud {
        let points = self
            .iter_f64()
            .map(|p| {
                let q = pose.transform_point(&p);
                [q.x as f32, q.y as f32, q.z as f32]
            })
            .collect();
        ColoredPointCloud {
            points,
            colors: self.colors.clone(),
        }
    }

    /// Binary form: magic, u32 count, then `count` records of
    /// `f32 x, y, z; u8 r, g, b`, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(11 + self.len() * POINT_RECORD_LEN);
        out.extend_from_slice(CLOUD_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        self.write_records(&mut out);
        out
    }

    /// Appends the point records only (no magic, no count).
    pub fn write_records(&self, out: &mut Vec<u8>) {
        for (p, c) in self.points.iter().zip(&self.colors) {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(c);
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CloudError> {
        if bytes.len() < 7 {
            return Err(CloudError::Truncated { offset: bytes.len() });
        }
        if &bytes[..7] != CLOUD_MAGIC {
            return Err(CloudError::BadMagic);
        }
        if bytes.len() < 11 {
            return Err(CloudError::Truncated { offset: bytes.len() });
        }
        let n = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        let (cloud, used) = Self::read_records(&bytes[11..], n).map_err(|e| match e {
            CloudError::Truncated { offset } => CloudError::Truncated { offset: offset + 11 },
            e => e,
        })?;
        if 11 + used != bytes.len() {
            return Err(CloudError::Truncated { offset: 11 + used });
        }
        Ok(cloud)
    }

    /// Parses `n` point records from the front of `bytes`; returns the cloud
    /// and the bytes consumed.
    pub fn read_records(bytes: &[u8], n: usize) -> Result<(Self, usize), CloudError> {
        let need = n
            .checked_mul(POINT_RECORD_LEN)
            .filter(|&need| need <= bytes.len())
            .ok_or(CloudError::Truncated { offset: bytes.len() })?;
        let mut cloud = ColoredPointCloud::with_capacity(n);
        for (i, rec) in bytes[..need].chunks_exact(POINT_RECORD_LEN).enumerate() {
            let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
            let p = [f(0), f(1), f(2)];
            if !p.iter().all(|c| c.is_finite()) {
                return Err(CloudError::NonFinite { index: i });
            }
            cloud.push(p, [rec[12], rec[13], rec[14]]);
        }
        Ok((cloud, need))
    }

    /// Text form: one `x y z r g b` line per point; blank lines and `#`
    /// comments are skipped.
    pub fn from_text<R: BufRead>(reader: R) -> Result<Self, CloudError> {
        let mut cloud = ColoredPointCloud::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| CloudError::Text {
                line: i + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
            if fields.len() != 6 {
                return Err(err("expected 6 fields: x y z r g b"));
            }
            let mut p = [0f32; 3];
            for k in 0..3 {
                p[k] = fields[k].parse().map_err(|_| err("bad coordinate"))?;
                if !p[k].is_finite() {
                    return Err(err("non-finite coordinate"));
                }
            }
            let mut c = [0u8; 3];
            for k in 0..3 {
                c[k] = fields[3 + k].parse().map_err(|_| err("color must be 0-255"))?;
            }
            cloud.push(p, c);
        }
        Ok(cloud)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (p, c) in self.points.iter().zip(&self.colors) {
            writeln!(w, "{} {} {} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2])?;
        }
        Ok(())
    }

    /// Reads either format, detected by the magic bytes.
    pub fn load(path: &Path) -> Result<Self, CloudError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.starts_with(CLOUD_MAGIC) {
            Self::from_bytes(&bytes)
        } else {
            Self::from_text(io::Cursor::new(bytes))
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CloudError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}
