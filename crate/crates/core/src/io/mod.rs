//! Point-cloud file formats.

mod ply;
mod xyz;

use std::path::Path;

pub use ply::{read_ply, read_ply_from, write_ply, write_ply_to, PlyContents, PlyEncoding};
pub use xyz::{read_xyz, read_xyz_from, write_xyz};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinaryLe,
    Xyz,
}

impl CloudFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ply_ascii" => Some(Self::PlyAscii),
            "ply_binary" | "ply_binary_le" => Some(Self::PlyBinaryLe),
            "xyz" | "xyz_text" => Some(Self::Xyz),
            _ => None,
        }
    }

    /// Guesses from the extension and, for PLY, the `format` header line.
    pub fn detect(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if ext.eq_ignore_ascii_case("ply") {
            Ok(read_ply(path)?.encoding.into())
        } else {
            Ok(Self::Xyz)
        }
    }
}

impl From<PlyEncoding> for CloudFormat {
    fn from(e: PlyEncoding) -> Self {
        match e {
            PlyEncoding::Ascii => Self::PlyAscii,
            PlyEncoding::BinaryLittleEndian => Self::PlyBinaryLe,
        }
    }
}

/// Loads a cloud, checking that a PLY file uses the declared encoding.
pub fn load_point_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    match format {
        CloudFormat::Xyz => read_xyz(path),
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => {
            let contents = read_ply(path)?;
            if CloudFormat::from(contents.encoding) != format {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    record: 2,
                    msg: format!("declared {format:?} but file is {:?}", contents.encoding),
                });
            }
            Ok(contents.cloud)
        }
    }
}

pub fn save_point_cloud(path: &Path, cloud: &PointCloud, format: CloudFormat) -> Result<()> {
    match format {
        CloudFormat::Xyz => write_xyz(path, cloud),
        CloudFormat::PlyAscii => write_ply(path, cloud, PlyEncoding::Ascii, None),
        CloudFormat::PlyBinaryLe => write_ply(path, cloud, PlyEncoding::BinaryLittleEndian, None),
    }
}
