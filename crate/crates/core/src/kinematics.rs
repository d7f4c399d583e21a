//! Observation-grid geometry, pump-cone parametrization, wave-vector
//! mismatches and the crystal ↔ pump-local frame rotation.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::Vec3;

/// Polar angle from the optic axis and azimuth from the crystal x-axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionAngles {
    pub theta: f64,
    pub phi: f64,
}

impl DirectionAngles {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self {
            theta,
            phi: phi.rem_euclid(TAU),
        }
    }
}

/// Square observation grid centered on the optic axis at distance `z_obs`.
///
/// Sample `j` along either axis sits at `-half_extent + j·spacing`, so both
/// edges are sampled. Values are stored row-major with rows ascending in y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub half_extent: f64,
    pub z_obs: f64,
}

impl GridSpec {
    pub fn new(n: usize, half_extent: f64, z_obs: f64) -> Result<Self> {
        let g = Self {
            n,
            half_extent,
            z_obs,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(SimError::InvalidParameter(format!(
                "grid needs at least 2 samples per axis, got {}",
                self.n
            )));
        }
        if !(self.half_extent > 0.0) || !(self.z_obs > 0.0) {
            return Err(SimError::InvalidParameter(
                "grid half extent and observation distance must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / (self.n - 1) as f64
    }

    pub fn cell_area(&self) -> f64 {
        let d = self.spacing();
        d * d
    }

    pub fn coord(&self, j: usize) -> f64 {
        -self.half_extent + j as f64 * self.spacing()
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(x, y)` of flat index `idx`.
    pub fn point(&self, idx: usize) -> (f64, f64) {
        (self.coord(idx % self.n), self.coord(idx / self.n))
    }

    /// Fractional grid index of a plane coordinate.
    pub fn fractional_index(&self, coord: f64) -> f64 {
        (coord + self.half_extent) / self.spacing()
    }

    pub fn angles(&self, idx: usize) -> DirectionAngles {
        let (x, y) = self.point(idx);
        angles_from_grid(x, y, self.z_obs).expect("validated grid has z_obs > 0")
    }
}

/// Emission angles of the ray from the crystal exit point to `(x, y, z)`.
pub fn angles_from_grid(x: f64, y: f64, z: f64) -> Result<DirectionAngles> {
    if !(z > 0.0) {
        return Err(SimError::InvalidParameter(format!(
            "observation distance must be positive, got {z}"
        )));
    }
    let theta = (x.hypot(y) / z).atan();
    let phi = if x == 0.0 && y == 0.0 {
        0.0
    } else {
        y.atan2(x).rem_euclid(TAU)
    };
    Ok(DirectionAngles { theta, phi })
}

/// Inverse of [`angles_from_grid`] on the plane at distance `z`.
pub fn grid_point_from_angles(a: DirectionAngles, z: f64) -> (f64, f64) {
    let r = z * a.theta.tan();
    (r * a.phi.cos(), r * a.phi.sin())
}

pub fn direction_from_angles(a: DirectionAngles) -> Vec3 {
    let (st, ct) = a.theta.sin_cos();
    let (sp, cp) = a.phi.sin_cos();
    Vec3::new(st * cp, st * sp, ct)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    CrystalXyz,
    PumpLocal,
}

impl Frame {
    pub fn as_str(self) -> &'static str {
        match self {
            Frame::CrystalXyz => "crystal_xyz",
            Frame::PumpLocal => "pump_local",
        }
    }
}

/// Wave-vector mismatch `k_s + k_i − k_p` tagged with the frame it is expressed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchVector {
    pub dk: Vec3,
    pub frame: Frame,
}

impl MismatchVector {
    pub fn crystal(dk: Vec3) -> Self {
        Self {
            dk,
            frame: Frame::CrystalXyz,
        }
    }

    pub fn pump_local(dk: Vec3) -> Self {
        Self {
            dk,
            frame: Frame::PumpLocal,
        }
    }

    pub fn norm(&self) -> f64 {
        self.dk.norm()
    }
}

/// Bessel-Gauss pump: a cone of Gaussian constituents around the optic axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub lambda_p: f64,
    /// Cone half-angle inside the crystal, radians.
    pub theta_p: f64,
    /// 1/e² spatial full-width of each Gaussian constituent, meters.
    pub w_p: f64,
    /// Number of azimuthal samples of the cone.
    pub m_phi: usize,
}

impl PumpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_p > 0.0 && self.theta_p < FRAC_PI_2) {
            return Err(SimError::InvalidParameter(format!(
                "pump cone half-angle must lie in (0, π/2), got {}",
                self.theta_p
            )));
        }
        if !(self.w_p > 0.0) || !(self.lambda_p > 0.0) {
            return Err(SimError::InvalidParameter(
                "pump width and wavelength must be positive".into(),
            ));
        }
        // m_phi = 1 is accepted: it is the single-Gaussian (critical) limit.
        if self.m_phi == 0 {
            return Err(SimError::InvalidParameter("m_phi must be at least 1".into()));
        }
        Ok(())
    }

    /// Azimuth of constituent `j`, `2πj/m_phi`.
    pub fn phi(&self, j: usize) -> f64 {
        TAU * j as f64 / self.m_phi as f64
    }
}

/// Central wave vector of the constituent at azimuth `phi_p`, given the
/// extraordinary pump index at the cone angle.
pub fn pump_central_k(pump: &PumpSpec, phi_p: f64, index: f64) -> Vec3 {
    let k = 2.0 * PI * index / pump.lambda_p;
    direction_from_angles(DirectionAngles {
        theta: pump.theta_p,
        phi: phi_p,
    }) * k
}

pub fn mismatch_crystal(k_s: &Vec3, k_i: &Vec3, k_p: &Vec3) -> MismatchVector {
    MismatchVector::crystal(k_s + k_i - k_p)
}

/// Orthonormal pump-local axes for the constituent at `(theta_p, phi_p)`.
///
/// `x'` is azimuthal, `y'` lies in the plane of `z` and `z'`, and `z'` is the
/// constituent's central direction; `x' × y' = z'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpFrame {
    pub x: Vec3,
    pub y: Vec3,
    pub z: Vec3,
}

impl PumpFrame {
    pub fn new(theta_p: f64, phi_p: f64) -> Self {
        let (st, ct) = theta_p.sin_cos();
        let (sp, cp) = phi_p.sin_cos();
        Self {
            x: Vec3::new(-sp, cp, 0.0),
            y: Vec3::new(-ct * cp, -ct * sp, st),
            z: Vec3::new(st * cp, st * sp, ct),
        }
    }

    /// Rotation matrix whose rows are `x'`, `y'`, `z'`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_rows(&[self.x.transpose(), self.y.transpose(), self.z.transpose()])
    }

    #[inline]
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        Vec3::new(self.x.dot(v), self.y.dot(v), self.z.dot(v))
    }
}

pub fn to_pump_frame(m: &MismatchVector, theta_p: f64, phi_p: f64) -> Result<MismatchVector> {
    if m.frame != Frame::CrystalXyz {
        return Err(SimError::FrameMismatch {
            expected: Frame::CrystalXyz.as_str(),
            found: m.frame.as_str(),
        });
    }
    Ok(MismatchVector::pump_local(
        PumpFrame::new(theta_p, phi_p).apply(&m.dk),
    ))
}
