//! Transfers 2-D instance labels back onto the rendered 3-D points.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::io::{write_ply, PlyEncoding};
use crate::render::RenderBuffer;
use crate::tiling::GlobalInstance;

/// Label 0 means the point was not assigned to any instance.
pub const UNLABELED: u32 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    /// One instance id per point.
    pub labels: Vec<u32>,
    /// Free-form origin note, e.g. the source file and backend.
    pub provenance: String,
}

impl LabeledCloud {
    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != UNLABELED).count()
    }
}

/// Each instance labels the points whose index appears under its mask in
/// `buffer`. A point claimed by several instances keeps the most confident
/// one, ties going to the lower id.
pub fn label_points(
    cloud: &PointCloud,
    buffer: &RenderBuffer,
    instances: &[GlobalInstance],
    provenance: impl Into<String>,
) -> Result<LabeledCloud> {
    let mut labels = vec![UNLABELED; cloud.len()];
    let mut owner: Vec<Option<(f64, u32)>> = vec![None; cloud.len()];
    for inst in instances {
        if inst.mask.frame() != (buffer.width, buffer.height) {
            return Err(Error::Mask {
                id: inst.id,
                msg: format!(
                    "mask frame {:?} does not match the {}x{} render",
                    inst.mask.frame(),
                    buffer.width,
                    buffer.height
                ),
            });
        }
        for (x, y) in inst.mask.pixels() {
            let Some(idx) = buffer.index_at(x, y) else {
                continue;
            };
            let idx = idx as usize;
            if idx >= cloud.len() {
                return Err(Error::invalid(format!(
                    "render references point {idx} but the cloud has {} points",
                    cloud.len()
                )));
            }
            let better = match owner[idx] {
                None => true,
                Some((c, id)) => inst.confidence > c || (inst.confidence == c && inst.id < id),
            };
            if better {
                owner[idx] = Some((inst.confidence, inst.id));
                labels[idx] = inst.id;
            }
        }
    }
    Ok(LabeledCloud {
        cloud: cloud.clone(),
        labels,
        provenance: provenance.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegendEntry {
    pub id: u32,
    pub confidence: f64,
    pub area_px: u64,
    pub points: usize,
    pub member_tiles: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Legend {
    pub provenance: String,
    pub unlabeled_id: u32,
    pub points: usize,
    pub labeled_points: usize,
    pub instances: Vec<LegendEntry>,
}

pub fn legend(labeled: &LabeledCloud, instances: &[GlobalInstance]) -> Legend {
    Legend {
        provenance: labeled.provenance.clone(),
        unlabeled_id: UNLABELED,
        points: labeled.labels.len(),
        labeled_points: labeled.labeled_count(),
        instances: instances
            .iter()
            .map(|i| LegendEntry {
                id: i.id,
                confidence: i.confidence,
                area_px: i.area_px,
                points: labeled.labels.iter().filter(|&&l| l == i.id).count(),
                member_tiles: i.member_tiles.clone(),
            })
            .collect(),
    }
}

/// Writes the cloud with a per-vertex `label` property and a JSON legend next to it.
pub fn export_labeled(
    labeled: &LabeledCloud,
    instances: &[GlobalInstance],
    ply_path: &Path,
    legend_path: &Path,
    encoding: PlyEncoding,
) -> Result<()> {
    write_ply(ply_path, &labeled.cloud, encoding, Some(&labeled.labels))?;
    let text = serde_json::to_string_pretty(&legend(labeled, instances)).expect("legend serializes") + "\n";
    std::fs::write(legend_path, text).map_err(|e| Error::io(legend_path, e))
}
