use alloc::vec::Vec;
use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::cloud::{centroid, covariance};
use super::{Mat3, NearestIndex, PointCloud, RigidTransform, SimTransform, Vec3};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Relative eigenvalue below which a covariance is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

fn eigenvalues_checked(cloud: &PointCloud) -> Result<(Vec3, Mat3)> {
    if cloud.len() < 4 {
        return Err(Error::DegenerateCloud);
    }
    let cov = cloud.covariance().ok_or(Error::DegenerateCloud)?;
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= RANK_TOL * max {
        return Err(Error::DegenerateCloud);
    }
    Ok((eig.eigenvalues, eig.eigenvectors))
}

/// Scale `s` such that `s * source` has the spread of `target`: the square
/// root of the ratio of mean covariance eigenvalues (target over source).
pub fn pca_scale(source: &PointCloud, target: &PointCloud) -> Result<f64> {
    let (es, _) = eigenvalues_checked(source)?;
    let (et, _) = eigenvalues_checked(target)?;
    Ok((et.sum() / es.sum()).sqrt())
}

/// Weighted closed-form rigid fit minimising `Σ w ‖T src - dst‖²`.
pub fn kabsch(src: &[Vec3], dst: &[Vec3], weights: Option<&[f64]>) -> Option<RigidTransform> {
    if src.is_empty() || src.len() != dst.len() {
        return None;
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..src.len()).map(w).sum();
    if !(total > 0.0) {
        return None;
    }
    let (mut cs, mut cd) = (Vec3::zeros(), Vec3::zeros());
    for i in 0..src.len() {
        cs += src[i] * w(i);
        cd += dst[i] * w(i);
    }
    cs /= total;
    cd /= total;
    let mut h = Mat3::zeros();
    for i in 0..src.len() {
        h += (src[i] - cs) * (dst[i] - cd).transpose() * w(i);
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, if d < 0.0 { -1.0 } else { 1.0 }));
    let r = v * fix * u.transpose();
    let rt = RigidTransform::from_matrix(&r, Vec3::zeros());
    let t = cd - rt.rotate(&cs);
    Some(RigidTransform::new(rt.rotation, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iters: usize,
    /// Stop when the relative residual decrease falls below this.
    pub tol: f64,
    /// Correspondence radius in metres.
    pub radius: f64,
    /// Use at most this many source points (strided); 0 keeps all.
    pub subsample: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self { max_iters: 60, tol: 1e-10, radius: 0.05, subsample: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Residual of every accepted iterate, starting with the initial guess.
    /// Non-increasing by construction.
    pub residuals: Vec<f64>,
    /// Correspondences at the returned transform.
    pub inliers: usize,
}

impl IcpResult {
    pub fn residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::INFINITY)
    }
}

struct Association {
    src: Vec<Vec3>,
    dst: Vec<Vec3>,
    weights: Vec<f64>,
    /// sqrt(mean over source points of min(d², radius²))
    residual: f64,
}

fn associate(source: &PointCloud, target: &NearestIndex, t: &RigidTransform, radius: f64) -> Association {
    let conf = source.confidence();
    let mut a = Association { src: Vec::new(), dst: Vec::new(), weights: Vec::new(), residual: 0.0 };
    let r2 = radius * radius;
    let mut sum = 0.0;
    for (i, p) in source.points().iter().enumerate() {
        let q = t.apply(p);
        match target.nearest_within(&q, radius) {
            Some((j, d2)) => {
                sum += d2;
                a.src.push(*p);
                a.dst.push(target.points()[j]);
                a.weights.push(conf.map_or(1.0, |c| c[i]));
            }
            None => sum += r2,
        }
    }
    a.residual = (sum / source.len().max(1) as f64).sqrt();
    a
}

/// Point-to-point ICP from `init`, mapping `source` onto `target`.
///
/// The residual is the truncated RMS nearest-neighbour distance
/// `sqrt(mean(min(d², radius²)))`; every accepted step lowers it, and a
/// step that would raise it ends the iteration.
pub fn icp_refine(source: &PointCloud, target: &PointCloud, init: &RigidTransform, params: &IcpParams) -> Result<IcpResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let index = NearestIndex::new(target.points());
    icp_with_index(&source.subsample(params.subsample), &index, init, params)
}

pub(crate) fn icp_with_index(
    source: &PointCloud,
    index: &NearestIndex,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    let mut current = *init;
    let mut assoc = associate(source, index, &current, params.radius);
    if assoc.src.is_empty() {
        return Err(Error::NoCorrespondences { radius: params.radius });
    }
    let mut residuals = alloc::vec![assoc.residual];
    for _ in 0..params.max_iters {
        if assoc.residual == 0.0 || assoc.src.len() < 3 {
            break;
        }
        let Some(next) = kabsch(&assoc.src, &assoc.dst, Some(&assoc.weights)) else { break };
        let next_assoc = associate(source, index, &next, params.radius);
        if next_assoc.src.is_empty() || next_assoc.residual > assoc.residual {
            break;
        }
        let drop = assoc.residual - next_assoc.residual;
        current = next;
        assoc = next_assoc;
        residuals.push(assoc.residual);
        if drop <= params.tol * residuals[residuals.len() - 2] {
            break;
        }
    }
    Ok(IcpResult { transform: current, residuals, inliers: assoc.src.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignParams {
    pub icp: IcpParams,
    /// Also try the four proper rotations aligning principal axes.
    pub try_principal_axes: bool,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self { icp: IcpParams::default(), try_principal_axes: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub transform: SimTransform,
    pub residual: f64,
}

/// Recovers the similarity mapping a generated cloud onto a metric one:
/// PCA scale first, then ICP on the rescaled cloud.
///
/// ICP starts from centroid alignment with the identity rotation and, when
/// enabled, from each principal-axis alignment; the lowest residual wins
/// (earlier candidates win ties).
pub fn align_generated_to_real(gen: &PointCloud, real: &PointCloud, params: &AlignParams) -> Result<Alignment> {
    let scale = pca_scale(gen, real)?;
    let scaled = gen.map_points(|p| p * scale);
    let index = NearestIndex::new(real.points());
    let source = scaled.subsample(params.icp.subsample);
    let cg = centroid(scaled.points()).ok_or(Error::EmptyCloud)?;
    let cr = centroid(real.points()).ok_or(Error::EmptyCloud)?;

    let mut rotations = alloc::vec![Mat3::identity()];
    if params.try_principal_axes {
        let eg = SymmetricEigen::new(covariance(scaled.points()).ok_or(Error::EmptyCloud)?);
        let er = SymmetricEigen::new(covariance(real.points()).ok_or(Error::EmptyCloud)?);
        let (vg, vr) = (sorted_axes(&eg), sorted_axes(&er));
        for signs in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
            let mut flip = Mat3::identity();
            flip[(0, 0)] = signs[0];
            flip[(1, 1)] = signs[1];
            let mut r = vr * flip * vg.transpose();
            if r.determinant() < 0.0 {
                let mut f2 = flip;
                f2[(2, 2)] = -1.0;
                r = vr * f2 * vg.transpose();
            }
            rotations.push(r);
        }
    }

    let mut best: Option<IcpResult> = None;
    let mut last_err = Error::NoCorrespondences { radius: params.icp.radius };
    for r in rotations {
        let rot = RigidTransform::from_matrix(&r, Vec3::zeros());
        let init = RigidTransform::new(rot.rotation, cr - rot.rotate(&cg));
        match icp_with_index(&source, &index, &init, &params.icp) {
            Ok(res) => {
                if best.as_ref().is_none_or(|b| res.residual() < b.residual()) {
                    best = Some(res);
                }
            }
            Err(e) => last_err = e,
        }
    }
    let best = best.ok_or(last_err)?;
    Ok(Alignment { transform: SimTransform::new(scale, best.transform)?, residual: best.residual() })
}

/// Eigenvectors as columns ordered by descending eigenvalue.
fn sorted_axes(eig: &SymmetricEigen<f64, nalgebra::U3>) -> Mat3 {
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(core::cmp::Ordering::Equal));
    Mat3::from_columns(&[
        eig.eigenvectors.column(order[0]).into_owned(),
        eig.eigenvectors.column(order[1]).into_owned(),
        eig.eigenvectors.column(order[2]).into_owned(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::chamfer;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Irregular blob: points on an ellipsoid with bumps, ~0.2 m across.
    fn blob(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..core::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                let d = Vec3::new(r * phi.cos(), r * phi.sin(), z);
                let bump = 1.0 + 0.15 * (3.0 * d.x).sin() * (2.0 * d.y).cos();
                Vec3::new(0.12 * d.x, 0.08 * d.y, 0.05 * d.z) * bump
            })
            .collect()
    }

    #[test]
    fn pca_scale_pure_scaling_and_identity() {
        let g = PointCloud::new(blob(500, 1)).unwrap();
        let t = g.map_points(|p| p * 2.0);
        assert!((pca_scale(&g, &t).unwrap() - 2.0).abs() < 1e-9);
        assert!((pca_scale(&g, &g).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_scale_is_rigid_invariant() {
        let g = PointCloud::new(blob(500, 2)).unwrap();
        let t = RigidTransform::from_axis_angle(Vec3::new(0.4, -1.0, 2.0), Vec3::new(1.0, -2.0, 0.3));
        let r = g.map_points(|p| t.apply(&(p * 0.5)));
        assert!((pca_scale(&g, &r).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn pca_scale_over_scale_factors() {
        let g = PointCloud::new(blob(300, 3)).unwrap();
        for a in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let s = pca_scale(&g, &g.map_points(|p| p * a)).unwrap();
            assert!((s - a).abs() < 1e-6 * a.max(1.0), "{a} -> {s}");
        }
    }

    #[test]
    fn degenerate_clouds_are_rejected() {
        let planar = PointCloud::new((0..50).map(|i| Vec3::new(i as f64, (i * 7 % 5) as f64, 0.0)).collect()).unwrap();
        let g = PointCloud::new(blob(50, 4)).unwrap();
        assert_eq!(pca_scale(&planar, &g), Err(Error::DegenerateCloud));
        let three = PointCloud::new(vec![Vec3::x(), Vec3::y(), Vec3::z()]).unwrap();
        assert_eq!(pca_scale(&g, &three), Err(Error::DegenerateCloud));
    }

    #[test]
    fn kabsch_recovers_transform() {
        let src = blob(100, 5);
        let t = RigidTransform::from_axis_angle(Vec3::new(0.3, 0.2, -0.5), Vec3::new(0.1, 0.2, 0.3));
        let dst: Vec<_> = src.iter().map(|p| t.apply(p)).collect();
        let est = kabsch(&src, &dst, None).unwrap();
        assert!(est.angle_to(&t) < 1e-10 && est.translation_to(&t) < 1e-10);
    }

    #[test]
    fn icp_identity() {
        let c = PointCloud::new(blob(800, 6)).unwrap();
        let res = icp_refine(&c, &c, &RigidTransform::identity(), &IcpParams::default()).unwrap();
        assert_eq!(res.residual(), 0.0);
        assert!(res.transform.angle_to(&RigidTransform::identity()) < 1e-12);
    }

    #[test]
    fn icp_recovers_small_motion() {
        let src = PointCloud::new(blob(2000, 7)).unwrap();
        let truth = RigidTransform::from_axis_angle(
            Vec3::new(0.3, -0.5, 0.8).normalize() * 5f64.to_radians(),
            Vec3::new(0.006, -0.008, 0.0),
        );
        let tgt = src.map_points(|p| truth.apply(p));
        let res = icp_refine(&src, &tgt, &RigidTransform::identity(), &IcpParams::default()).unwrap();
        assert!(res.transform.translation_to(&truth) < 1e-4, "{}", res.transform.translation_to(&truth));
        assert!(res.transform.angle_to(&truth).to_degrees() < 0.05);
        for w in res.residuals.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn icp_without_overlap_fails() {
        let a = PointCloud::new(blob(100, 8)).unwrap();
        let b = a.map_points(|p| p + Vec3::new(10.0, 0.0, 0.0));
        let params = IcpParams { radius: 0.1, ..IcpParams::default() };
        assert_eq!(
            icp_refine(&a, &b, &RigidTransform::identity(), &params).unwrap_err(),
            Error::NoCorrespondences { radius: 0.1 }
        );
    }

    #[test]
    fn alignment_pure_scale_and_identity() {
        let g = PointCloud::new(blob(1500, 9)).unwrap();
        let a = align_generated_to_real(&g, &g.map_points(|p| p * 3.0), &AlignParams::default()).unwrap();
        assert!((a.transform.scale() - 3.0).abs() < 1e-9);
        assert!(a.transform.rigid.angle_to(&RigidTransform::identity()) < 1e-8);
        let a = align_generated_to_real(&g, &g, &AlignParams::default()).unwrap();
        assert!((a.transform.scale() - 1.0).abs() < 1e-12);
        assert!(a.transform.rigid.translation.norm() < 1e-12);
    }

    #[test]
    fn alignment_with_noise_recovers_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let noise = Normal::new(0.0, 0.001).unwrap();
        let gen_pts = blob(3000, 11);
        let s = 1.7;
        let truth = RigidTransform::from_axis_angle(Vec3::new(0.2, 1.1, -0.4), Vec3::new(0.3, -0.1, 0.8));
        let real: Vec<_> = gen_pts
            .iter()
            .map(|p| truth.apply(&(p * s)) + Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)))
            .collect();
        let gen = PointCloud::new(gen_pts).unwrap();
        let real = PointCloud::new(real).unwrap();
        let a = align_generated_to_real(&gen, &real, &AlignParams::default()).unwrap();
        assert!((a.transform.scale() / s - 1.0).abs() < 0.02);
        assert!(a.transform.rigid.angle_to(&truth).to_degrees() < 1.0);
        assert!(a.transform.rigid.translation_to(&truth) < 0.005);
        let aligned = gen.map_points(|p| a.transform.apply(p));
        assert!(chamfer(&aligned, &real).unwrap() <= chamfer(&gen, &real).unwrap());
    }
}
