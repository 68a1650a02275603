use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::geometry::{RigidTransform, Vec3};
use crate::image::{check_shape, ColorImage, Grid, Mask, ScalarMap};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyframeKind {
    Real,
    Diffusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    id: usize,
    kind: KeyframeKind,
    /// Keyframe camera to object frame.
    pub pose: RigidTransform,
    /// Per-pixel 3D points in the keyframe's camera frame.
    pub pointmap: Grid<Vec3>,
    pub valid: Mask,
    pub confidence: ScalarMap,
    pub descriptor: Vec<f64>,
    /// Caller-defined label, e.g. the index of the source frame.
    pub tag: usize,
}

impl Keyframe {
    pub fn new(
        kind: KeyframeKind,
        pose: RigidTransform,
        pointmap: Grid<Vec3>,
        valid: Mask,
        confidence: ScalarMap,
        descriptor: Vec<f64>,
        tag: usize,
    ) -> Result<Self> {
        check_shape(&pointmap, &valid)?;
        check_shape(&pointmap, &confidence)?;
        for k in 0..pointmap.len() {
            if valid[k] && !pointmap[k].iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput("valid pointmap entries must be finite"));
            }
        }
        if confidence.as_slice().iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidInput("confidence must be non-negative"));
        }
        Ok(Self { id: usize::MAX, kind, pose, pointmap, valid, confidence, descriptor, tag })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn kind(&self) -> KeyframeKind {
        self.kind
    }

    pub fn is_fixed_kind(&self) -> bool {
        self.kind == KeyframeKind::Diffusion
    }

    pub fn width(&self) -> usize {
        self.pointmap.width()
    }
}

/// Pixel `i` of the first keyframe matched to pixel `j` of the second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub i: usize,
    pub j: usize,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub i: usize,
    pub j: usize,
    pub matches: Vec<Match>,
}

impl GraphEdge {
    pub fn new(i: usize, j: usize, matches: Vec<Match>) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidInput("edge endpoints must differ"));
        }
        if matches.is_empty() {
            return Err(Error::InvalidInput("edge needs at least one match"));
        }
        if matches.iter().any(|m| !(0.0..=1.0).contains(&m.q)) {
            return Err(Error::InvalidInput("match confidence must lie in [0, 1]"));
        }
        Ok(Self { i, j, matches })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseGraph {
    keyframes: Vec<Keyframe>,
    edges: Vec<GraphEdge>,
    anchors: Vec<usize>,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_keyframe(&mut self, mut kf: Keyframe) -> usize {
        kf.id = self.keyframes.len();
        self.keyframes.push(kf);
        self.keyframes.len() - 1
    }

    /// Holds a Real keyframe fixed during optimization.
    pub fn anchor(&mut self, id: usize) -> Result<()> {
        if id >= self.keyframes.len() {
            return Err(Error::InvalidInput("anchor id out of range"));
        }
        if !self.anchors.contains(&id) {
            self.anchors.push(id);
        }
        Ok(())
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn is_fixed(&self, id: usize) -> bool {
        self.keyframes[id].is_fixed_kind() || self.anchors.contains(&id)
    }

    pub fn add_edge(&mut self, edge: GraphEdge) -> Result<()> {
        let n = self.keyframes.len();
        if edge.i >= n || edge.j >= n || edge.i == edge.j {
            return Err(Error::InvalidInput("edge endpoints out of range"));
        }
        let (a, b) = (&self.keyframes[edge.i], &self.keyframes[edge.j]);
        for m in &edge.matches {
            if m.i >= a.valid.len() || m.j >= b.valid.len() || !a.valid[m.i] || !b.valid[m.j] {
                return Err(Error::InvalidInput("match pixel is not a valid pointmap entry"));
            }
        }
        self.edges.push(edge);
        Ok(())
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn keyframe(&self, id: usize) -> &Keyframe {
        &self.keyframes[id]
    }

    pub fn keyframe_mut(&mut self, id: usize) -> &mut Keyframe {
        &mut self.keyframes[id]
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.edges.iter().any(|e| (e.i == a && e.j == b) || (e.i == b && e.j == a))
    }

    pub fn poses(&self) -> Vec<RigidTransform> {
        self.keyframes.iter().map(|k| k.pose).collect()
    }
}

pub const DESCRIPTOR_SIDE: usize = 8;

/// 8×8 area-averaged grayscale thumbnail, L2-normalized.
pub fn descriptor(image: &ColorImage) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let s = DESCRIPTOR_SIDE;
    let mut out = alloc::vec![0.0; s * s];
    let mut counts = alloc::vec![0usize; s * s];
    for y in 0..h {
        for x in 0..w {
            let c = image.get(x, y);
            let k = (y * s / h.max(1)) * s + x * s / w.max(1);
            out[k] += (c[0] + c[1] + c[2]) / 3.0;
            counts[k] += 1;
        }
    }
    for (v, n) in out.iter_mut().zip(&counts) {
        if *n > 0 {
            *v /= *n as f64;
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    out
}
