use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector6};

use super::Vec3;
use crate::{Error, Result};

/// Element of SE(3): `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self { rotation: renormalize(rotation), translation }
    }

    /// From an axis-angle vector (radians) and a translation.
    pub fn from_axis_angle(axis_angle: Vec3, translation: Vec3) -> Self {
        Self { rotation: UnitQuaternion::from_scaled_axis(axis_angle), translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: UnitQuaternion::identity(), translation }
    }

    /// Builds a transform from a rotation matrix, projecting it onto SO(3).
    pub fn from_matrix(rotation: &Matrix3<f64>, translation: Vec3) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*rotation);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    /// Quaternion components `(w, x, y, z)`; rejects non-finite or zero-norm input.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64, translation: Vec3) -> Result<Self> {
        let q = nalgebra::Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("quaternion must be finite and non-zero"));
        }
        Ok(Self { rotation: UnitQuaternion::new_normalize(q), translation })
    }

    #[inline]
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        Self { rotation: inv, translation: -(inv * self.translation) }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(self.rotation * other.rotation, self.rotation * other.translation + self.translation)
    }

    /// Left update `Exp(delta) ∘ self` with `delta = (omega, v)`: rotation by
    /// `omega` (axis-angle) followed by translation `v`, both in the output frame.
    pub fn left_update(&self, delta: &Vector6<f64>) -> Self {
        let omega = Vector3::new(delta[0], delta[1], delta[2]);
        let v = Vector3::new(delta[3], delta[4], delta[5]);
        let dr = UnitQuaternion::from_scaled_axis(omega);
        Self::new(dr * self.rotation, dr * self.translation + v)
    }

    /// Rotation angle of `self⁻¹ ∘ other`, radians.
    pub fn angle_to(&self, other: &Self) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    /// Translation distance between the two transforms.
    pub fn translation_to(&self, other: &Self) -> f64 {
        (self.translation - other.translation).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.coords.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
    }
}

/// `a ∘ b` (apply `b`, then `a`).
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Scaled rigid transform: `p -> s R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTransform {
    scale: f64,
    pub rigid: RigidTransform,
}

impl Default for SimTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, rigid: RigidTransform::identity() }
    }

    pub fn new(scale: f64, rigid: RigidTransform) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput("similarity scale must be positive and finite"));
        }
        Ok(Self { scale, rigid })
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rigid.rotation * (p * self.scale) + self.rigid.translation
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rigid.inverse();
        Self {
            scale: 1.0 / self.scale,
            rigid: RigidTransform { rotation: inv.rotation, translation: inv.translation / self.scale },
        }
    }
}
