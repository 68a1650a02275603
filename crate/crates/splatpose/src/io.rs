//! File formats: ASCII PLY, transform and graph JSON, raw float maps with a
//! JSON header, PNG images and CSV tables.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use splatpose_core::diffusion::UncertainImage;
use splatpose_core::geometry::{PointCloud, RigidTransform, SimTransform, Vec3};
use splatpose_core::image::{ColorImage, Grid, ScalarMap};
use splatpose_core::posegraph::{GraphEdge, KeyframeKind, PoseGraph};
use splatpose_core::splat::{GaussianField, IsotropicGaussian, RenderOutput};

use crate::error::{Error, Result};

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::format(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::format(path, e))).collect()
}

/// Unit quaternion, translation and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub scale: f64,
}

impl TransformRecord {
    pub fn from_rigid(t: &RigidTransform) -> Self {
        let q = t.rotation.quaternion();
        Self {
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
            tx: t.translation.x,
            ty: t.translation.y,
            tz: t.translation.z,
            scale: 1.0,
        }
    }

    pub fn from_sim(t: &SimTransform) -> Self {
        Self { scale: t.scale(), ..Self::from_rigid(&t.rigid) }
    }

    pub fn rigid(&self) -> splatpose_core::Result<RigidTransform> {
        RigidTransform::from_quaternion(self.qw, self.qx, self.qy, self.qz, Vec3::new(self.tx, self.ty, self.tz))
    }

    pub fn sim(&self) -> splatpose_core::Result<SimTransform> {
        SimTransform::new(self.scale, self.rigid()?)
    }
}

/// Header shared by the raw float maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapHeader {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

pub fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

pub fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::format(path, "length is not a multiple of 8 bytes"));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `stem.json` header plus little-endian `f64` values in `stem.bin`.
pub fn write_scalar_map(stem: &Path, map: &ScalarMap) -> Result<()> {
    write_json(&with_suffix(stem, ".json"), &MapHeader { width: map.width(), height: map.height(), channels: 1 })?;
    write_f64s(&with_suffix(stem, ".bin"), map.as_slice())
}

pub fn read_scalar_map(stem: &Path) -> Result<ScalarMap> {
    let h: MapHeader = read_json(&with_suffix(stem, ".json"))?;
    let path = with_suffix(stem, ".bin");
    let data = read_f64s(&path)?;
    if h.channels != 1 {
        return Err(Error::format(&path, "expected one channel"));
    }
    Grid::from_vec(h.width, h.height, data).map_err(|e| Error::format(&path, e))
}

/// `stem.json` header, interleaved RGB in `stem.rgb.bin` and per-pixel
/// variance in `stem.var.bin`.
pub fn write_uncertain_image(stem: &Path, img: &UncertainImage) -> Result<()> {
    write_json(&with_suffix(stem, ".json"), &MapHeader { width: img.width(), height: img.height(), channels: 3 })?;
    let rgb: Vec<f64> = img.rgb.as_slice().iter().flatten().copied().collect();
    write_f64s(&with_suffix(stem, ".rgb.bin"), &rgb)?;
    write_f64s(&with_suffix(stem, ".var.bin"), img.variance.as_slice())
}

pub fn read_uncertain_image(stem: &Path) -> Result<UncertainImage> {
    let h: MapHeader = read_json(&with_suffix(stem, ".json"))?;
    let rgb_path = with_suffix(stem, ".rgb.bin");
    let rgb = read_f64s(&rgb_path)?;
    let var = read_f64s(&with_suffix(stem, ".var.bin"))?;
    if h.channels != 3 || rgb.len() != 3 * var.len() {
        return Err(Error::format(&rgb_path, "channel count does not match the header"));
    }
    let pixels: Vec<[f64; 3]> = rgb.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(UncertainImage {
        rgb: Grid::from_vec(h.width, h.height, pixels).map_err(|e| Error::format(&rgb_path, e))?,
        variance: Grid::from_vec(h.width, h.height, var).map_err(|e| Error::format(&rgb_path, e))?,
    })
}

/// 8-bit RGB PNG; intensities are clamped to `[0, 1]`.
pub fn write_png(path: &Path, img: &ColorImage) -> Result<()> {
    let mut buf = image::RgbImage::new(img.width() as u32, img.height() as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let c = img.get(x as usize, y as usize);
        *px = image::Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    buf.save(path).map_err(|e| Error::format(path, e))
}

pub fn read_png(path: &Path) -> Result<ColorImage> {
    let img = image::open(path).map_err(|e| Error::format(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Grid::from_fn(w as usize, h as usize, |x, y| {
        img.get_pixel(x as u32, y as u32).0.map(|v| v as f64 / 255.0)
    }))
}

/// Colour as PNG with depth and silhouette as raw float maps.
pub fn write_render(stem: &Path, out: &RenderOutput) -> Result<()> {
    write_png(&with_suffix(stem, ".png"), &out.color)?;
    write_scalar_map(&with_suffix(stem, ".depth"), &out.depth)?;
    write_scalar_map(&with_suffix(stem, ".silhouette"), &out.silhouette)
}

fn write_ply(path: &Path, properties: &[&str], rows: impl Iterator<Item = Vec<f64>>, count: usize) -> Result<()> {
    let mut w = create(path)?;
    let mut text = format!("ply\nformat ascii 1.0\nelement vertex {count}\n");
    for p in properties {
        text.push_str(&format!("property double {p}\n"));
    }
    text.push_str("end_header\n");
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

/// Reads an ASCII PLY vertex table and returns the columns named in `wanted`.
fn read_ply(path: &Path, wanted: &[&str]) -> Result<Vec<Vec<f64>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(|e| Error::io(path, e)) };
    if next()?.as_deref().map(str::trim) != Some("ply") {
        return Err(Error::format(path, "missing ply magic"));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    loop {
        let line = next()?.ok_or_else(|| Error::format(path, "unterminated header"))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => return Err(Error::format(path, "only ascii PLY is supported")),
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|e| Error::format(path, e))?);
                }
            }
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| Error::format(path, "no vertex element"))?;
    let cols: Vec<usize> = wanted
        .iter()
        .map(|w| props.iter().position(|p| p == w).ok_or_else(|| Error::format(path, format!("missing property {w}"))))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next()?.ok_or_else(|| Error::format(path, "fewer vertices than declared"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::format(path, e)))
            .collect::<Result<_>>()?;
        if vals.len() != props.len() {
            return Err(Error::format(path, "vertex row has the wrong number of values"));
        }
        rows.push(cols.iter().map(|&c| vals[c]).collect());
    }
    Ok(rows)
}

/// `x y z confidence`; confidence is 1 when the cloud has none.
pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let conf = cloud.confidence();
    let rows = cloud.points().iter().enumerate().map(|(k, p)| vec![p.x, p.y, p.z, conf.map_or(1.0, |c| c[k])]);
    write_ply(path, &["x", "y", "z", "confidence"], rows, cloud.len())
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let rows = read_ply(path, &["x", "y", "z", "confidence"])?;
    let points = rows.iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect();
    let conf = rows.iter().map(|r| r[3]).collect();
    PointCloud::with_confidence(points, Some(conf)).map_err(|e| Error::format(path, e))
}

/// `x y z radius r g b opacity`.
pub fn write_field(path: &Path, field: &GaussianField) -> Result<()> {
    let rows = field.gaussians.iter().map(|g| {
        vec![g.position.x, g.position.y, g.position.z, g.radius, g.color[0], g.color[1], g.color[2], g.opacity]
    });
    write_ply(path, &["x", "y", "z", "radius", "r", "g", "b", "opacity"], rows, field.len())
}

pub fn read_field(path: &Path) -> Result<GaussianField> {
    let rows = read_ply(path, &["x", "y", "z", "radius", "r", "g", "b", "opacity"])?;
    let gaussians = rows
        .iter()
        .map(|r| IsotropicGaussian::new(Vec3::new(r[0], r[1], r[2]), r[3], [r[4], r[5], r[6]], r[7]))
        .collect::<splatpose_core::Result<Vec<_>>>()
        .map_err(|e| Error::format(path, e))?;
    GaussianField::new(gaussians, 0).map_err(|e| Error::format(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub kind: KeyframeKind,
    pub pose: TransformRecord,
    pub tag: usize,
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl GraphRecord {
    pub fn from_graph(graph: &PoseGraph) -> Self {
        let nodes = graph
            .keyframes()
            .iter()
            .map(|k| GraphNode {
                id: k.id(),
                kind: k.kind(),
                pose: TransformRecord::from_rigid(&k.pose),
                tag: k.tag,
                fixed: graph.is_fixed(k.id()),
            })
            .collect();
        Self { nodes, edges: graph.edges().to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub iteration: usize,
    pub cost: f64,
}

pub fn write_costs(path: &Path, costs: &[f64]) -> Result<()> {
    let rows: Vec<CostRow> = costs.iter().enumerate().map(|(iteration, &cost)| CostRow { iteration, cost }).collect();
    write_csv(path, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_record_round_trip() {
        let t = RigidTransform::from_axis_angle(Vec3::new(0.1, -0.2, 0.3), Vec3::new(1.0, 2.0, 3.0));
        let s = SimTransform::new(2.5, t).unwrap();
        let back = TransformRecord::from_sim(&s).sim().unwrap();
        assert!((back.scale() - 2.5).abs() < 1e-15);
        assert!(back.rigid.angle_to(&t) < 1e-12 && back.rigid.translation_to(&t) < 1e-12);
    }

    #[test]
    fn ply_rejects_binary_and_short_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ply");
        fs::write(&p, "ply\nformat binary_little_endian 1.0\nelement vertex 1\nend_header\n").unwrap();
        assert!(read_point_cloud(&p).is_err());
        fs::write(&p, "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nproperty double confidence\nend_header\n0 0 0 1\n").unwrap();
        assert!(read_point_cloud(&p).is_err());
    }
}
