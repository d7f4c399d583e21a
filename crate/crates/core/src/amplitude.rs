//! Pair-generation amplitudes for one Gaussian pump constituent and for the
//! full Bessel-Gauss cone, plus the polarization assigned to each photon.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::crystal_optics::{energy_match, PolarizationClass, UniaxialCrystal};
use crate::error::{Result, SimError};
use crate::kinematics::{
    mismatch_crystal, pump_central_k, Frame, MismatchVector, PumpFrame, PumpSpec,
};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    #[serde(rename = "type_i")]
    TypeI,
    #[serde(rename = "type_ii")]
    TypeII,
}

impl ProcessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcessKind::TypeI => "type_i",
            ProcessKind::TypeII => "type_ii",
        }
    }

    /// (signal, idler) polarization classes; the pump is always extraordinary.
    pub fn polarizations(self) -> (PolarizationClass, PolarizationClass) {
        match self {
            ProcessKind::TypeI => (PolarizationClass::Ordinary, PolarizationClass::Ordinary),
            ProcessKind::TypeII => (
                PolarizationClass::Extraordinary,
                PolarizationClass::Ordinary,
            ),
        }
    }
}

/// Phasematching type and the three vacuum wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    pub lambda_p: f64,
    pub lambda_s: f64,
    pub lambda_i: f64,
    pub signal_pol: PolarizationClass,
    pub idler_pol: PolarizationClass,
}

impl ProcessSpec {
    pub fn new(kind: ProcessKind, lambda_p: f64, lambda_s: f64) -> Result<Self> {
        let lambda_i = energy_match(lambda_p, lambda_s)?;
        let (signal_pol, idler_pol) = kind.polarizations();
        Ok(Self {
            kind,
            lambda_p,
            lambda_s,
            lambda_i,
            signal_pol,
            idler_pol,
        })
    }

    /// Degenerate process with `λs = λi = 2λp`.
    pub fn degenerate(kind: ProcessKind, lambda_p: f64) -> Self {
        Self::new(kind, lambda_p, 2.0 * lambda_p).expect("2λp always exceeds λp")
    }

    pub fn pump_pol(&self) -> PolarizationClass {
        PolarizationClass::Extraordinary
    }

    pub fn validate(&self) -> Result<()> {
        let lhs = 1.0 / self.lambda_p;
        let rhs = 1.0 / self.lambda_s + 1.0 / self.lambda_i;
        if ((lhs - rhs) / lhs).abs() > 1e-12 {
            return Err(SimError::InvalidParameter(
                "wavelengths violate energy conservation".into(),
            ));
        }
        if (self.signal_pol, self.idler_pol) != self.kind.polarizations() {
            return Err(SimError::InvalidParameter(format!(
                "polarizations do not match {}",
                self.kind.as_str()
            )));
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        ((self.lambda_s - self.lambda_i) / self.lambda_s).abs() <= 1e-12
    }

    pub fn wavelength(&self, role: Role) -> f64 {
        match role {
            Role::Signal => self.lambda_s,
            Role::Idler => self.lambda_i,
        }
    }

    pub fn polarization(&self, role: Role) -> PolarizationClass {
        match role {
            Role::Signal => self.signal_pol,
            Role::Idler => self.idler_pol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Signal,
    Idler,
}

impl Role {
    pub fn other(self) -> Self {
        match self {
            Role::Signal => Role::Idler,
            Role::Idler => Role::Signal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Signal => "signal",
            Role::Idler => "idler",
        }
    }
}

/// Complex pair amplitude in relative units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairAmplitude(pub Complex64);

impl PairAmplitude {
    pub fn probability(&self) -> f64 {
        self.0.norm_sqr()
    }
}

pub fn optic_path_length(l_crystal: f64, theta_p: f64) -> Result<f64> {
    if !(theta_p.abs() < FRAC_PI_2) {
        return Err(SimError::Domain(format!(
            "optic path undefined at θp = {theta_p} rad"
        )));
    }
    Ok(l_crystal / theta_p.cos())
}

/// `sin(u)/u` with the removable singularity filled in.
#[inline]
pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// Gaussian transverse exponent `−w²(Δkx'² + Δky'²)/4`.
#[inline]
pub fn transverse_exponent(dkx: f64, dky: f64, w_p: f64) -> f64 {
    -w_p * w_p * (dkx * dkx + dky * dky) * 0.25
}

/// Raw single-constituent amplitude from pump-local mismatch components.
#[inline]
pub fn gaussian_amplitude_local(dk: &Vec3, w_p: f64, l_optic: f64) -> Complex64 {
    let half = 0.5 * l_optic * dk.z;
    let mag = transverse_exponent(dk.x, dk.y, w_p).exp() * sinc(half);
    let (s, c) = half.sin_cos();
    Complex64::new(mag * c, mag * s)
}

pub fn gaussian_pair_amplitude(
    dk_local: &MismatchVector,
    w_p: f64,
    l_optic: f64,
) -> Result<PairAmplitude> {
    if dk_local.frame != Frame::PumpLocal {
        return Err(SimError::FrameMismatch {
            expected: Frame::PumpLocal.as_str(),
            found: dk_local.frame.as_str(),
        });
    }
    Ok(PairAmplitude(gaussian_amplitude_local(
        &dk_local.dk,
        w_p,
        l_optic,
    )))
}

/// One sampled constituent of the pump cone.
#[derive(Debug, Clone, Copy)]
pub struct PumpConstituent {
    pub phi: f64,
    pub k: Vec3,
    pub frame: PumpFrame,
}

/// Precomputed constituents of a Bessel-Gauss pump, shared read-only by the
/// amplitude evaluations of a run.
#[derive(Debug, Clone)]
pub struct PumpTable {
    pub constituents: Vec<PumpConstituent>,
    pub w_p: f64,
    pub l_optic: f64,
    pub k_mag: f64,
}

impl PumpTable {
    pub fn new(pump: &PumpSpec, crystal: &UniaxialCrystal) -> Result<Self> {
        pump.validate()?;
        let index =
            crystal.index_at_polar(pump.lambda_p, pump.theta_p, PolarizationClass::Extraordinary)?;
        let constituents = (0..pump.m_phi)
            .map(|j| {
                let phi = pump.phi(j);
                PumpConstituent {
                    phi,
                    k: pump_central_k(pump, phi, index),
                    frame: PumpFrame::new(pump.theta_p, phi),
                }
            })
            .collect();
        Ok(Self {
            constituents,
            w_p: pump.w_p,
            l_optic: optic_path_length(crystal.length, pump.theta_p)?,
            k_mag: 2.0 * std::f64::consts::PI * index / pump.lambda_p,
        })
    }

    pub fn m_phi(&self) -> usize {
        self.constituents.len()
    }

    /// Amplitude contributed by constituent `c`.
    #[inline]
    pub fn constituent_amplitude(&self, c: &PumpConstituent, k_s: &Vec3, k_i: &Vec3) -> Complex64 {
        let dk = mismatch_crystal(k_s, k_i, &c.k).dk;
        gaussian_amplitude_local(&c.frame.apply(&dk), self.w_p, self.l_optic)
    }

    /// `(1/m_phi)·Σ_φp Φ_G`, accumulated in ascending φp order.
    pub fn amplitude(&self, k_s: &Vec3, k_i: &Vec3) -> PairAmplitude {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &self.constituents {
            acc += self.constituent_amplitude(c, k_s, k_i);
        }
        PairAmplitude(acc / self.m_phi() as f64)
    }
}

/// Bessel-Gauss pair amplitude for crystal-frame signal and idler wave vectors.
pub fn bessel_gauss_pair_amplitude(
    k_s: &Vec3,
    k_i: &Vec3,
    pump: &PumpSpec,
    crystal: &UniaxialCrystal,
) -> Result<PairAmplitude> {
    Ok(PumpTable::new(pump, crystal)?.amplitude(k_s, k_i))
}

/// Transverse polarization of a photon emitted at azimuth `phi`: radial for
/// the extraordinary class, azimuthal for the ordinary class.
pub fn polarization_vector(
    role: Role,
    process: &ProcessSpec,
    phi: f64,
) -> (Vector2<f64>, PolarizationClass) {
    let class = process.polarization(role);
    let (s, c) = phi.sin_cos();
    let v = match class {
        PolarizationClass::Extraordinary => Vector2::new(c, s),
        PolarizationClass::Ordinary => Vector2::new(-s, c),
    };
    (v, class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal_optics::solve_phasematch_angle;
    use crate::kinematics::{direction_from_angles, to_pump_frame, DirectionAngles};
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn optic_path_examples() {
        assert_eq!(optic_path_length(500e-6, 0.0).unwrap(), 500e-6);
        assert_relative_eq!(
            optic_path_length(500e-6, 60f64.to_radians()).unwrap(),
            1000e-6,
            max_relative = 1e-14
        );
        // 40-digit evaluation of 500 µm / cos 41.8°.
        assert_relative_eq!(
            optic_path_length(500e-6, 41.8f64.to_radians()).unwrap(),
            6.707_124_041_722_447e-4,
            max_relative = 1e-14
        );
        assert!(optic_path_length(500e-6, FRAC_PI_2).is_err());
    }

    #[test]
    fn perfect_phasematching_is_unity() {
        let a = gaussian_pair_amplitude(&MismatchVector::pump_local(Vec3::zeros()), 84e-6, 6e-4)
            .unwrap();
        assert_eq!(a.0, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn first_sinc_null() {
        let l = 6.7e-4;
        let a = gaussian_pair_amplitude(
            &MismatchVector::pump_local(Vec3::new(0.0, 0.0, TAU / l)),
            84e-6,
            l,
        )
        .unwrap();
        assert!(a.0.norm() < 1e-15);
    }

    #[test]
    fn gaussian_one_over_e_point() {
        let w = 84e-6;
        let t = 2.0 / w / 2f64.sqrt();
        let a = gaussian_pair_amplitude(&MismatchVector::pump_local(Vec3::new(t, t, 0.0)), w, 6e-4)
            .unwrap();
        assert_relative_eq!(a.0.norm(), (-1f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn crystal_frame_input_rejected() {
        assert!(gaussian_pair_amplitude(&MismatchVector::crystal(Vec3::zeros()), 1e-4, 1e-3).is_err());
    }

    fn type_ii_setup(m_phi: usize) -> (UniaxialCrystal, ProcessSpec, PumpSpec) {
        let c = UniaxialCrystal::bbo(500e-6);
        let p = ProcessSpec::degenerate(ProcessKind::TypeII, 405e-9);
        let theta_p = solve_phasematch_angle(&c, &p).unwrap();
        let pump = PumpSpec {
            lambda_p: 405e-9,
            theta_p,
            w_p: 84e-6,
            m_phi,
        };
        (c, p, pump)
    }

    fn k_at(c: &UniaxialCrystal, p: &ProcessSpec, role: Role, theta: f64, phi: f64) -> Vec3 {
        let s = direction_from_angles(DirectionAngles::new(theta, phi));
        c.wave_vector(p.wavelength(role), &s, p.polarization(role)).unwrap()
    }

    #[test]
    fn single_constituent_sum_is_gaussian_amplitude() {
        let (c, p, pump) = type_ii_setup(1);
        let ks = k_at(&c, &p, Role::Signal, pump.theta_p + 0.001, 0.002);
        let ki = k_at(&c, &p, Role::Idler, pump.theta_p - 0.0005, -0.001);
        let bg = bessel_gauss_pair_amplitude(&ks, &ki, &pump, &c).unwrap();

        let n = c.index_at_polar(405e-9, pump.theta_p, PolarizationClass::Extraordinary).unwrap();
        let kp = pump_central_k(&pump, 0.0, n);
        let local = to_pump_frame(&mismatch_crystal(&ks, &ki, &kp), pump.theta_p, 0.0).unwrap();
        let g = gaussian_pair_amplitude(&local, pump.w_p, optic_path_length(c.length, pump.theta_p).unwrap())
            .unwrap();
        assert_eq!(bg.0, g.0);
    }

    #[test]
    fn collinear_pair_is_near_maximum() {
        // Brute-force scan over a 64² patch of signal=idler directions at m_phi = 64.
        let (c, p, pump) = type_ii_setup(64);
        let table = PumpTable::new(&pump, &c).unwrap();
        let at = |th: f64, ph: f64| {
            let ks = k_at(&c, &p, Role::Signal, th, ph);
            let ki = k_at(&c, &p, Role::Idler, th, ph);
            table.amplitude(&ks, &ki).0.norm()
        };
        let centre = at(pump.theta_p, 0.0);
        let mut best: f64 = 0.0;
        for a in 0..64 {
            for b in 0..64 {
                let th = pump.theta_p + (a as f64 - 32.0) * 2e-4;
                let ph = (b as f64 - 32.0) * 2e-4;
                best = best.max(at(th, ph));
            }
        }
        assert!(centre >= 0.99 * best, "centre {centre} best {best}");
    }

    #[test]
    fn discrete_rotation_symmetry() {
        let (c, p, pump) = type_ii_setup(64);
        let table = PumpTable::new(&pump, &c).unwrap();
        let ks = k_at(&c, &p, Role::Signal, 0.72, 0.31);
        let ki = k_at(&c, &p, Role::Idler, 0.735, 0.305);
        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), TAU / 64.0);
        let a = table.amplitude(&ks, &ki).0.norm();
        let b = table.amplitude(&(rot * ks), &(rot * ki)).0.norm();
        assert!(((a - b) / a).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn type_ii_polarizations() {
        let p = ProcessSpec::degenerate(ProcessKind::TypeII, 405e-9);
        let (v, cls) = polarization_vector(Role::Signal, &p, 0.0);
        assert_eq!((v.x, v.y, cls), (1.0, 0.0, PolarizationClass::Extraordinary));
        let (v, cls) = polarization_vector(Role::Idler, &p, 0.0);
        assert_eq!((v.x, v.y, cls), (-0.0, 1.0, PolarizationClass::Ordinary));
    }

    #[test]
    fn type_i_is_azimuthal() {
        let p = ProcessSpec::degenerate(ProcessKind::TypeI, 405e-9);
        for phi in [0.0, 1.0, 2.5, 4.0] {
            for role in [Role::Signal, Role::Idler] {
                let (v, cls) = polarization_vector(role, &p, phi);
                assert_eq!(cls, PolarizationClass::Ordinary);
                assert!((v.x + phi.sin()).abs() < 1e-15 && (v.y - phi.cos()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn process_validation() {
        let mut p = ProcessSpec::degenerate(ProcessKind::TypeII, 405e-9);
        assert!(p.validate().is_ok());
        p.lambda_i = 800e-9;
        assert!(p.validate().is_err());
        let mut q = ProcessSpec::degenerate(ProcessKind::TypeI, 405e-9);
        q.signal_pol = PolarizationClass::Extraordinary;
        assert!(q.validate().is_err());
    }

    proptest! {
        #[test]
        fn amplitude_factorizes(
            dx in -5e4..5e4f64, dy in -5e4..5e4f64, dz in -3e4..3e4f64,
            w in 1e-5..2e-4f64, l in 1e-4..3e-3f64,
        ) {
            let a = gaussian_pair_amplitude(&MismatchVector::pump_local(Vec3::new(dx, dy, dz)), w, l)
                .unwrap().0;
            let gauss = (-w * w * (dx * dx + dy * dy) / 4.0).exp();
            let u = l * dz / 2.0;
            let expect = gauss * sinc(u).abs();
            prop_assert!((a.norm() - expect).abs() <= 1e-12 * expect.max(1e-300));
            if a.norm() > 1e-200 {
                let phase = if sinc(u) >= 0.0 { u } else { u + PI };
                let diff = (a.arg() - phase).rem_euclid(TAU);
                prop_assert!(diff < 1e-9 || TAU - diff < 1e-9);
            }
        }

        #[test]
        fn type_ii_polarizations_orthogonal(phi in 0.0..TAU) {
            let p = ProcessSpec::degenerate(ProcessKind::TypeII, 405e-9);
            let (s, _) = polarization_vector(Role::Signal, &p, phi);
            let (i, _) = polarization_vector(Role::Idler, &p, phi);
            prop_assert!(s.dot(&i).abs() < 1e-15);
            prop_assert!((s.norm() - 1.0).abs() < 1e-15 && (i.norm() - 1.0).abs() < 1e-15);
        }

        #[test]
        fn degenerate_type_i_swap_symmetry(
            t1 in 0.45..0.55f64, p1 in 0.0..TAU, t2 in 0.45..0.55f64, p2 in 0.0..TAU,
        ) {
            let c = UniaxialCrystal::bbo(500e-6);
            let p = ProcessSpec::degenerate(ProcessKind::TypeI, 405e-9);
            let theta_p = solve_phasematch_angle(&c, &p).unwrap();
            let pump = PumpSpec { lambda_p: 405e-9, theta_p, w_p: 84e-6, m_phi: 16 };
            let table = PumpTable::new(&pump, &c).unwrap();
            let ks = k_at(&c, &p, Role::Signal, t1, p1);
            let ki = k_at(&c, &p, Role::Idler, t2, p2);
            let a = table.amplitude(&ks, &ki).0.norm();
            let b = table.amplitude(&ki, &ks).0.norm();
            prop_assert_eq!(a, b);
        }
    }
}
