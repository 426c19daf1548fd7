use std::collections::BTreeSet;

use nalgebra::Vector3;

use super::ColoredPointCloud;
use crate::kinematics::{link_poses, KinematicsError, Pose, RobotModel};

pub const DEFAULT_RESOLUTION: f64 = 0.02;
pub const DEFAULT_MARGIN: f64 = 0.01;

/// Dense occupancy index spans at most this many cells; sparser scenes fall
/// back to set lookups.
const MAX_DENSE_CELLS: usize = 1 << 27;

/// Occupancy grid. Voxel `i` covers `[origin + i·res, origin + (i+1)·res)`
/// on each axis.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    origin: Vector3<f64>,
    resolution: f64,
    occupied: BTreeSet<[i32; 3]>,
    dense: Option<Dense>,
}

#[derive(Debug, Clone)]
struct Dense {
    min: [i32; 3],
    dims: [usize; 3],
    bits: Vec<u64>,
}

impl Dense {
    fn build(occupied: &BTreeSet<[i32; 3]>) -> Option<Dense> {
        let first = occupied.iter().next()?;
        let (mut min, mut max) = (*first, *first);
        for v in occupied {
            for k in 0..3 {
                min[k] = min[k].min(v[k]);
                max[k] = max[k].max(v[k]);
            }
        }
        let dims = [0, 1, 2].map(|k| (max[k] as i64 - min[k] as i64 + 1) as usize);
        let cells = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c <= MAX_DENSE_CELLS)?;
        let mut d = Dense {
            min,
            dims,
            bits: vec![0; cells.div_ceil(64)],
        };
        for v in occupied {
            let i = d.flat(v).expect("inside bounds");
            d.bits[i / 64] |= 1 << (i % 64);
        }
        Some(d)
    }

    fn flat(&self, v: &[i32; 3]) -> Option<usize> {
        let mut idx = 0usize;
        for k in 0..3 {
            let o = v[k] as i64 - self.min[k] as i64;
            if o < 0 || o >= self.dims[k] as i64 {
                return None;
            }
            idx = idx * self.dims[k] + o as usize;
        }
        Some(idx)
    }

    fn contains(&self, v: &[i32; 3]) -> bool {
        self.flat(v).is_some_and(|i| self.bits[i / 64] & (1 << (i % 64)) != 0)
    }
}

impl VoxelGrid {
    pub fn empty(origin: Vector3<f64>, resolution: f64) -> Self {
        Self::from_indices(origin, resolution, BTreeSet::new())
    }

    pub fn from_indices(origin: Vector3<f64>, resolution: f64, occupied: BTreeSet<[i32; 3]>) -> Self {
        assert!(resolution > 0.0, "voxel resolution must be positive");
        let dense = Dense::build(&occupied);
        VoxelGrid {
            origin,
            resolution,
            occupied,
            dense,
        }
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn occupied(&self) -> &BTreeSet<[i32; 3]> {
        &self.occupied
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn index_of(&self, p: &Vector3<f64>) -> [i32; 3] {
        [0, 1, 2].map(|k| ((p[k] - self.origin[k]) / self.resolution).floor() as i32)
    }

    pub fn center(&self, v: &[i32; 3]) -> Vector3<f64> {
        Vector3::from([0, 1, 2].map(|k| self.origin[k] + (v[k] as f64 + 0.5) * self.resolution))
    }

    pub fn contains(&self, v: &[i32; 3]) -> bool {
        match &self.dense {
            Some(d) => d.contains(v),
            None => self.occupied.contains(v),
        }
    }

    /// Half the voxel's space diagonal.
    pub fn half_diagonal(&self) -> f64 {
        self.resolution * 3f64.sqrt() / 2.0
    }

    /// True when some occupied voxel center lies within `reach` of `c`.
    pub fn any_center_within(&self, c: &Vector3<f64>, reach: f64) -> bool {
        let lo = [0, 1, 2].map(|k| ((c[k] - reach - self.origin[k]) / self.resolution - 0.5).floor() as i64);
        let hi = [0, 1, 2].map(|k| ((c[k] + reach - self.origin[k]) / self.resolution - 0.5).ceil() as i64);
        let cells = (0..3).map(|k| (hi[k] - lo[k] + 1).max(0) as u128).product::<u128>();
        let r2 = reach * reach;
        if cells > self.occupied.len() as u128 {
            return self
                .occupied
                .iter()
                .any(|v| (self.center(v) - c).norm_squared() <= r2);
        }
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    let v = [x as i32, y as i32, z as i32];
                    if self.contains(&v) && (self.center(&v) - c).norm_squared() <= r2 {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Occupied set is `{ floor((p − origin) / resolution) }` over the cloud.
pub fn voxelize(cloud: &ColoredPointCloud, origin: Vector3<f64>, resolution: f64) -> VoxelGrid {
    let occupied = cloud
        .iter_f64()
        .map(|p| [0, 1, 2].map(|k| ((p[k] - origin[k]) / resolution).floor() as i32))
        .collect();
    VoxelGrid::from_indices(origin, resolution, occupied)
}

/// Links with a collision sphere whose center lies within
/// `radius + margin + half_diagonal` of an occupied voxel center, in model
/// order. `base` places the robot in the grid's (world) frame.
pub fn check_collision(
    model: &RobotModel,
    q: &[f64],
    base: &Pose,
    grid: &VoxelGrid,
    margin: f64,
) -> Result<Vec<String>, KinematicsError> {
    if q.len() != model.dof() {
        return Err(KinematicsError::DimensionMismatch {
            expected: model.dof(),
            got: q.len(),
        });
    }
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let lp = link_poses(model, q);
    let base = base.to_isometry();
    let inflate = margin + grid.half_diagonal();
    let mut hits = Vec::new();
    for (li, link) in model.links().iter().enumerate() {
        let pose = base * lp.links[li];
        let hit = link.spheres.iter().any(|s| {
            let c = pose * nalgebra::Point3::from(s.center);
            grid.any_center_within(&c.coords, s.radius + inflate)
        });
        if hit {
            hits.push(link.name.clone());
        }
    }
    Ok(hits)
}
