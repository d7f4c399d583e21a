//! Meridional ray geometry at crystal and glass faces: Snell exit angles,
//! total internal reflection screening and axicon coupling chains.
//!
//! Angles are measured from the optic axis `z` in the meridional plane. A
//! face is described by the tilt of its normal from `z`; a flat cut has tilt
//! zero and a face of a 90° apex axicon has tilt 45°.

use std::fmt;

use serde::Serialize;

use crate::amplitude::{ProcessSpec, Role};
use crate::crystal_optics::{PolarizationClass, UniaxialCrystal};
use crate::error::{Result, SimError};

pub const DEFAULT_GLASS_INDEX: f64 = 1.52;
pub const AXICON_FACE_TILT: f64 = std::f64::consts::FRAC_PI_4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarInterface {
    pub n_in: f64,
    pub n_out: f64,
    /// Angle between the face normal and `z`, radians.
    pub face_normal_tilt: f64,
}

impl PlanarInterface {
    pub fn new(n_in: f64, n_out: f64, face_normal_tilt: f64) -> Result<Self> {
        if !(n_in >= 1.0 && n_out >= 1.0) {
            return Err(SimError::InvalidParameter(format!(
                "refractive indices must be ≥ 1 (got {n_in}, {n_out})"
            )));
        }
        Ok(Self {
            n_in,
            n_out,
            face_normal_tilt,
        })
    }

    /// Flat face into vacuum.
    pub fn flat_exit(n_in: f64) -> Result<Self> {
        Self::new(n_in, 1.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefractionReport {
    pub ray: String,
    pub face: String,
    /// Angle to `z` on the incoming side, radians.
    pub internal_to_z: f64,
    /// Angle to the face normal on the incoming side, radians.
    pub incidence: f64,
    /// Angle to the face normal on the outgoing side; `None` under TIR.
    pub refraction: Option<f64>,
    /// Angle to `z` on the outgoing side; `None` under TIR.
    pub external_to_z: Option<f64>,
    pub tir: bool,
}

impl RefractionReport {
    pub fn labelled(mut self, ray: &str, face: &str) -> Self {
        self.ray = ray.to_string();
        self.face = face.to_string();
        self
    }
}

impl fmt::Display for RefractionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let deg = |v: Option<f64>| match v {
            Some(a) => format!("{:9.4}", a.to_degrees()),
            None => format!("{:>9}", "-"),
        };
        write!(
            f,
            "{:<8} {:<22} {} {} {} {}{}",
            self.ray,
            self.face,
            deg(Some(self.internal_to_z)),
            deg(Some(self.incidence)),
            deg(self.refraction),
            deg(self.external_to_z),
            if self.tir { "  TIR" } else { "" }
        )
    }
}

/// Column header matching the [`RefractionReport`] display rows (degrees).
pub const REPORT_HEADER: &str =
    "ray      face                      in_to_z incidence refracted  out_to_z";

/// Snell refraction of a meridional ray through `iface`.
pub fn refract_at_face(theta_internal_to_z: f64, iface: &PlanarInterface) -> RefractionReport {
    let rel = theta_internal_to_z - iface.face_normal_tilt;
    let incidence = rel.abs();
    let s = iface.n_in * incidence.sin() / iface.n_out;
    let (refraction, external, tir) = if s > 1.0 {
        (None, None, true)
    } else {
        let out = s.asin();
        (Some(out), Some(iface.face_normal_tilt + rel.signum() * out), false)
    };
    RefractionReport {
        ray: String::new(),
        face: String::new(),
        internal_to_z: theta_internal_to_z,
        incidence,
        refraction,
        external_to_z: external,
        tir,
    }
}

/// Inverse of [`refract_at_face`]: the incoming angle to `z` that leaves the
/// face at `theta_external_to_z`.
pub fn trace_back(theta_external_to_z: f64, iface: &PlanarInterface) -> Result<f64> {
    let rel = theta_external_to_z - iface.face_normal_tilt;
    let s = iface.n_out * rel.abs().sin() / iface.n_in;
    if s > 1.0 {
        return Err(SimError::TotalInternalReflection(
            "no incoming ray refracts to this angle".into(),
        ));
    }
    Ok(iface.face_normal_tilt + rel.signum() * s.asin())
}

/// Phase index of a ray travelling at `theta` to the optic axis.
fn ray_index(
    crystal: &UniaxialCrystal,
    lambda: f64,
    theta: f64,
    pol: PolarizationClass,
) -> Result<f64> {
    crystal.index_at_polar(lambda, theta, pol)
}

/// Exit-angle difference of the signal and idler photons leaving a flat face
/// from the same internal angle, each refracted with its own index.
pub fn signal_idler_exit_separation(
    crystal: &UniaxialCrystal,
    process: &ProcessSpec,
    theta_internal: f64,
) -> Result<f64> {
    let mut reports = Vec::with_capacity(2);
    for role in [Role::Signal, Role::Idler] {
        let n = ray_index(
            crystal,
            process.wavelength(role),
            theta_internal,
            process.polarization(role),
        )?;
        reports.push(
            refract_at_face(theta_internal, &PlanarInterface::flat_exit(n)?)
                .labelled(role.as_str(), "flat exit"),
        );
    }
    match (reports[0].external_to_z, reports[1].external_to_z) {
        (Some(s), Some(i)) => Ok((s - i).abs()),
        _ => Err(SimError::TotalInternalReflection(format!(
            "{}; {}",
            reports[0], reports[1]
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxiconConfig {
    /// Both crystal faces cut as 90° apex axicons.
    CrystalCutAxicon,
    /// Flat crystal between two glass 90° axicons, index matched at the
    /// crystal/glass contact.
    AffixedGlassAxicons,
}

/// One ray to trace out of the crystal.
#[derive(Debug, Clone)]
pub struct PlanRay {
    pub label: String,
    pub theta_internal: f64,
    pub n_crystal: f64,
}

/// Traces each ray from inside the crystal to free space. The pump row is
/// the time reverse of its entry path, so its external angle is the angle the
/// focused pump must have before the first face.
pub fn plan_rays(config: AxiconConfig, rays: &[PlanRay], n_glass: f64) -> Result<Vec<RefractionReport>> {
    let mut out = Vec::new();
    for ray in rays {
        match config {
            AxiconConfig::CrystalCutAxicon => {
                let face = PlanarInterface::new(ray.n_crystal, 1.0, AXICON_FACE_TILT)?;
                out.push(
                    refract_at_face(ray.theta_internal, &face).labelled(&ray.label, "crystal axicon face"),
                );
            }
            AxiconConfig::AffixedGlassAxicons => {
                // The contact is treated as index matched, so the ray keeps
                // its angle into the glass.
                let contact = PlanarInterface::new(ray.n_crystal, ray.n_crystal, 0.0)?;
                let first = refract_at_face(ray.theta_internal, &contact)
                    .labelled(&ray.label, "crystal/glass contact");
                let inside = first.external_to_z.unwrap_or(ray.theta_internal);
                out.push(first);
                let face = PlanarInterface::new(n_glass, 1.0, AXICON_FACE_TILT)?;
                out.push(refract_at_face(inside, &face).labelled(&ray.label, "glass axicon face"));
            }
        }
    }
    Ok(out)
}

/// Angle chain for pump, signal and idler of a degenerate process whose pump
/// travels at `theta_p_internal` inside the crystal.
pub fn plan_axicon_coupling(
    config: AxiconConfig,
    crystal: &UniaxialCrystal,
    process: &ProcessSpec,
    theta_p_internal: f64,
    n_glass: f64,
) -> Result<Vec<RefractionReport>> {
    let mut rays = vec![PlanRay {
        label: "pump".into(),
        theta_internal: theta_p_internal,
        n_crystal: ray_index(
            crystal,
            process.lambda_p,
            theta_p_internal,
            PolarizationClass::Extraordinary,
        )?,
    }];
    for role in [Role::Signal, Role::Idler] {
        rays.push(PlanRay {
            label: role.as_str().into(),
            theta_internal: theta_p_internal,
            n_crystal: ray_index(
                crystal,
                process.wavelength(role),
                theta_p_internal,
                process.polarization(role),
            )?,
        });
    }
    plan_rays(config, &rays, n_glass)
}

/// First report flagged with total internal reflection, if any.
pub fn first_tir(reports: &[RefractionReport]) -> Option<&RefractionReport> {
    reports.iter().find(|r| r.tir)
}
