//! Material dispersion and direction-dependent refractive indices for
//! uniaxial crystals, plus the collinear phasematching and total internal
//! reflection solvers built on them.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::Vec3;

/// Supported wavelength band (vacuum micrometers) for the embedded BBO record.
pub const BBO_BAND_UM: [f64; 2] = [0.35, 1.6];

const BISECTION_TOL: f64 = 1e-10;
const UNIT_TOL: f64 = 1e-12;

/// Index model `n²(λ) = a + b/(λ² − c) − d·λ²` with λ in vacuum micrometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SellmeierModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl SellmeierModel {
    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    /// Dispersionless model with `n = sqrt(a)` everywhere.
    pub const fn constant(index: f64) -> Self {
        Self::new(index * index, 0.0, 0.0, 0.0)
    }

    /// Evaluates the model at a wavelength given in micrometers, without band checks.
    pub fn index_at_um(&self, lambda_um: f64) -> f64 {
        let l2 = lambda_um * lambda_um;
        (self.a + self.b / (l2 - self.c) - self.d * l2).sqrt()
    }
}

/// Evaluates a Sellmeier model at a vacuum wavelength in meters.
pub fn principal_index(model: &SellmeierModel, band_um: [f64; 2], lambda: f64) -> Result<f64> {
    let lambda_um = lambda * 1e6;
    if !(lambda_um >= band_um[0] && lambda_um <= band_um[1]) {
        return Err(SimError::OutOfBand {
            wavelength_um: lambda_um,
            lo: band_um[0],
            hi: band_um[1],
        });
    }
    let n = model.index_at_um(lambda_um);
    if !n.is_finite() {
        return Err(SimError::Domain(format!(
            "Sellmeier model undefined at {lambda_um} µm"
        )));
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolarizationClass {
    Ordinary,
    Extraordinary,
}

impl PolarizationClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PolarizationClass::Ordinary => "ordinary",
            PolarizationClass::Extraordinary => "extraordinary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UniaxialSign {
    Negative,
    Positive,
}

/// Principal indices at one wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalIndices {
    pub n_x: f64,
    pub n_y: f64,
    pub n_z: f64,
}

impl PrincipalIndices {
    pub fn uniaxial(n_o: f64, n_e: f64) -> Self {
        Self {
            n_x: n_o,
            n_y: n_o,
            n_z: n_e,
        }
    }

    /// Both phase indices for propagation along unit direction `s`, from the
    /// index-ellipsoid eigenproblem. Returned as `(slow, fast)` i.e. larger
    /// index first.
    ///
    /// The two roots of `u² − B·u + C = 0` (with `u = 1/N²`) are computed with
    /// the discriminant in the cancellation-free form
    /// `L² + 4·sx²·sz²·(ax − ay)(az − ay)`, which stays accurate near the optic axis.
    pub fn eigen_indices(&self, s: &Vec3) -> (f64, f64) {
        let ax = 1.0 / (self.n_x * self.n_x);
        let ay = 1.0 / (self.n_y * self.n_y);
        let az = 1.0 / (self.n_z * self.n_z);
        let (p, q, r) = (s.x * s.x, s.y * s.y, s.z * s.z);

        let b = p * (ay + az) + q * (ax + az) + r * (ax + ay);
        let c = p * ay * az + q * ax * az + r * ax * ay;
        let l = p * (az - ay) + q * (az - ax) + r * (ay - ax);
        let disc = (l * l + 4.0 * p * r * (ax - ay) * (az - ay)).max(0.0);

        let u_large = 0.5 * (b + disc.sqrt());
        let u_small = c / u_large;
        (1.0 / u_small.sqrt(), 1.0 / u_large.sqrt())
    }
}

/// A uniaxial crystal: ordinary and extraordinary dispersion plus thickness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniaxialCrystal {
    pub name: String,
    pub ordinary: SellmeierModel,
    pub extraordinary: SellmeierModel,
    pub band_um: [f64; 2],
    /// Thickness along the face normal, meters.
    pub length: f64,
    pub sign: UniaxialSign,
}

/// On-disk material record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialFile {
    pub name: String,
    pub ordinary: SellmeierModel,
    pub extraordinary: SellmeierModel,
    pub band_um: [f64; 2],
}

impl MaterialFile {
    pub fn bbo() -> Self {
        Self {
            name: "BBO".to_string(),
            ordinary: SellmeierModel::new(2.7359, 0.01878, 0.01822, 0.01354),
            extraordinary: SellmeierModel::new(2.3753, 0.01224, 0.01667, 0.01516),
            band_um: BBO_BAND_UM,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(format!("material file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("material record serializes")
    }
}

impl UniaxialCrystal {
    /// Builds a crystal from a material record, validating the band and
    /// inferring the uniaxial sign.
    pub fn from_material(material: &MaterialFile, length: f64) -> Result<Self> {
        if !(length > 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "crystal length must be positive, got {length}"
            )));
        }
        let [lo, hi] = material.band_um;
        if !(lo > 0.0 && hi > lo) {
            return Err(SimError::Config(format!("invalid band [{lo}, {hi}] µm")));
        }
        let mut negative = 0usize;
        let mut positive = 0usize;
        const SAMPLES: usize = 64;
        for k in 0..=SAMPLES {
            let l = lo + (hi - lo) * k as f64 / SAMPLES as f64;
            let l2 = l * l;
            if (l2 - material.ordinary.c).abs() < 1e-12
                || (l2 - material.extraordinary.c).abs() < 1e-12
            {
                return Err(SimError::Config("Sellmeier pole inside band".into()));
            }
            let no = material.ordinary.index_at_um(l);
            let ne = material.extraordinary.index_at_um(l);
            if !(no > 1.0 && ne > 1.0) {
                return Err(SimError::Config(format!(
                    "index must exceed 1 across the band (n_o={no}, n_e={ne} at {l} µm)"
                )));
            }
            if ne < no {
                negative += 1;
            } else if ne > no {
                positive += 1;
            }
        }
        let sign = match (negative, positive) {
            (_, 0) => UniaxialSign::Negative,
            (0, _) => UniaxialSign::Positive,
            _ => {
                return Err(SimError::Config(
                    "birefringence changes sign inside the band".into(),
                ))
            }
        };
        Ok(Self {
            name: material.name.clone(),
            ordinary: material.ordinary,
            extraordinary: material.extraordinary,
            band_um: material.band_um,
            length,
            sign,
        })
    }

    /// BBO with the embedded dispersion record.
    pub fn bbo(length: f64) -> Self {
        Self::from_material(&MaterialFile::bbo(), length).expect("embedded BBO record is valid")
    }

    pub fn material(&self) -> MaterialFile {
        MaterialFile {
            name: self.name.clone(),
            ordinary: self.ordinary,
            extraordinary: self.extraordinary,
            band_um: self.band_um,
        }
    }

    pub fn n_o(&self, lambda: f64) -> Result<f64> {
        principal_index(&self.ordinary, self.band_um, lambda)
    }

    pub fn n_e(&self, lambda: f64) -> Result<f64> {
        principal_index(&self.extraordinary, self.band_um, lambda)
    }

    pub fn principal_indices(&self, lambda: f64) -> Result<PrincipalIndices> {
        Ok(PrincipalIndices::uniaxial(
            self.n_o(lambda)?,
            self.n_e(lambda)?,
        ))
    }

    /// Phase index seen by a wave of class `pol` travelling along unit `s`.
    pub fn directional_index(&self, lambda: f64, s: &Vec3, pol: PolarizationClass) -> Result<f64> {
        let norm = s.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(SimError::NonUnitDirection { norm });
        }
        match pol {
            PolarizationClass::Ordinary => self.n_o(lambda),
            PolarizationClass::Extraordinary => {
                let (slow, fast) = self.principal_indices(lambda)?.eigen_indices(s);
                Ok(match self.sign {
                    UniaxialSign::Negative => fast,
                    UniaxialSign::Positive => slow,
                })
            }
        }
    }

    /// Index for propagation at polar angle `theta` from the optic axis.
    pub fn index_at_polar(&self, lambda: f64, theta: f64, pol: PolarizationClass) -> Result<f64> {
        let s = Vec3::new(theta.sin(), 0.0, theta.cos());
        self.directional_index(lambda, &s, pol)
    }

    /// Crystal-frame wave vector `(2πN/λ)·s`, rad/m.
    pub fn wave_vector(&self, lambda: f64, s: &Vec3, pol: PolarizationClass) -> Result<Vec3> {
        let n = self.directional_index(lambda, s, pol)?;
        Ok(s * (2.0 * PI * n / lambda))
    }
}

/// Idler wavelength from energy conservation, `1/λi = 1/λp − 1/λs`.
pub fn energy_match(lambda_p: f64, lambda_s: f64) -> Result<f64> {
    if !(lambda_s > lambda_p) || !(lambda_p > 0.0) {
        return Err(SimError::NoIdler {
            pump_m: lambda_p,
            signal_m: lambda_s,
        });
    }
    Ok(1.0 / (1.0 / lambda_p - 1.0 / lambda_s))
}

/// Bisection for a sign change of `f` on `[lo, hi]`; `None` without a bracket.
pub(crate) fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<Option<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(Some(lo));
    }
    if f_hi == 0.0 {
        return Ok(Some(hi));
    }
    if f_lo.signum() == f_hi.signum() {
        return Ok(None);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(Some(mid));
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Internal pump angle that phasematches a degenerate collinear process with
/// an extraordinary pump.
pub fn solve_phasematch_angle(
    crystal: &UniaxialCrystal,
    process: &crate::amplitude::ProcessSpec,
) -> Result<f64> {
    let (lp, ls, li) = (process.lambda_p, process.lambda_s, process.lambda_i);
    if ((ls - li) / ls).abs() > 1e-12 || ((ls - 2.0 * lp) / ls).abs() > 1e-12 {
        return Err(SimError::InvalidParameter(
            "phasematch solver requires a degenerate process (λs = λi = 2λp)".into(),
        ));
    }
    let (sig, idl) = (process.signal_pol, process.idler_pol);
    // Collinear momentum balance N_p/λp = N_s/λs + N_i/λi along the pump direction.
    let residual = |theta: f64| -> Result<f64> {
        let np = crystal.index_at_polar(lp, theta, PolarizationClass::Extraordinary)?;
        let ns = crystal.index_at_polar(ls, theta, sig)?;
        let ni = crystal.index_at_polar(li, theta, idl)?;
        Ok(np / lp - ns / ls - ni / li)
    };
    bisect(residual, 0.0, FRAC_PI_2, BISECTION_TOL)?.ok_or_else(|| {
        SimError::NotPhasematchable(format!(
            "{} at {:.1} nm has no collinear solution in {}",
            process.kind.as_str(),
            lp * 1e9,
            crystal.name
        ))
    })
}

/// Internal polar angle beyond which a ray of class `pol` is totally
/// internally reflected at a face normal to the optic axis (outside index 1).
/// Returns `Ok(None)` when every internal angle below 90° escapes.
pub fn tir_angle(crystal: &UniaxialCrystal, lambda: f64, pol: PolarizationClass) -> Result<Option<f64>> {
    tir_angle_into(crystal, lambda, pol, 1.0)
}

pub fn tir_angle_into(
    crystal: &UniaxialCrystal,
    lambda: f64,
    pol: PolarizationClass,
    n_out: f64,
) -> Result<Option<f64>> {
    if pol == PolarizationClass::Ordinary {
        let n = crystal.n_o(lambda)?;
        return Ok((n > n_out).then(|| (n_out / n).asin()));
    }
    let g = |theta: f64| -> Result<f64> {
        Ok(crystal.index_at_polar(lambda, theta, pol)? * theta.sin() - n_out)
    };
    if g(FRAC_PI_2)? <= 0.0 {
        return Ok(None);
    }
    bisect(g, 0.0, FRAC_PI_2, 1e-13)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitude::{ProcessKind, ProcessSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const NM: f64 = 1e-9;

    fn bbo() -> UniaxialCrystal {
        UniaxialCrystal::bbo(500e-6)
    }

    #[test]
    fn bbo_ordinary_405_regression() {
        // 40-digit evaluation of the embedded coefficients.
        let n = bbo().n_o(405.0 * NM).unwrap();
        assert_relative_eq!(n, 1.691_886_895_976_859_9, max_relative = 1e-14);
        let ne = bbo().n_e(405.0 * NM).unwrap();
        assert_relative_eq!(ne, 1.567_124_145_905_082_7, max_relative = 1e-14);
    }

    #[test]
    fn dispersionless_model_is_flat() {
        let m = SellmeierModel::new(2.25, 0.0, 0.0, 0.0);
        for l in [0.4e-6, 0.8e-6, 1.5e-6] {
            assert_eq!(principal_index(&m, BBO_BAND_UM, l).unwrap(), 1.5);
        }
    }

    #[test]
    fn out_of_band_rejected() {
        let err = bbo().n_o(200.0 * NM).unwrap_err();
        assert!(matches!(err, SimError::OutOfBand { .. }));
        assert!(err.to_string().contains("0.35"));
    }

    #[test]
    fn on_axis_extraordinary_equals_ordinary() {
        let c = bbo();
        let s = Vec3::z();
        let ne = c.directional_index(405.0 * NM, &s, PolarizationClass::Extraordinary).unwrap();
        assert_relative_eq!(ne, c.n_o(405.0 * NM).unwrap(), max_relative = 1e-15);
    }

    #[test]
    fn ordinary_ignores_direction() {
        let c = bbo();
        let n0 = c.n_o(810.0 * NM).unwrap();
        for s in [Vec3::x(), Vec3::new(0.6, 0.0, 0.8), Vec3::new(0.0, -0.28, 0.96)] {
            let n = c.directional_index(810.0 * NM, &s, PolarizationClass::Ordinary).unwrap();
            assert_eq!(n, n0);
        }
    }

    #[test]
    fn extraordinary_45_deg_matches_closed_form() {
        // 1/N² = cos²θ/no² + sin²θ/ne² evaluated to 40 digits at θ = 45°.
        let c = bbo();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let n = c
            .directional_index(405.0 * NM, &Vec3::new(h, 0.0, h), PolarizationClass::Extraordinary)
            .unwrap();
        assert_relative_eq!(n, 1.625_926_417_089_056_1, max_relative = 1e-12);
    }

    #[test]
    fn non_unit_direction_rejected() {
        let err = bbo()
            .directional_index(405.0 * NM, &Vec3::new(0.0, 0.0, 1.1), PolarizationClass::Ordinary)
            .unwrap_err();
        assert!(matches!(err, SimError::NonUnitDirection { .. }));
    }

    #[test]
    fn axis_aligned_wave_vector() {
        let c = bbo();
        let k = c.wave_vector(810.0 * NM, &Vec3::z(), PolarizationClass::Ordinary).unwrap();
        let n = c.n_o(810.0 * NM).unwrap();
        assert_eq!(k.x, 0.0);
        assert_eq!(k.y, 0.0);
        assert_relative_eq!(k.z, 2.0 * PI * n / (810.0 * NM), max_relative = 1e-15);
    }

    #[test]
    fn wave_vector_direction_at_41_8() {
        let c = bbo();
        let th = 41.8f64.to_radians();
        let s = Vec3::new(th.sin(), 0.0, th.cos());
        let k = c.wave_vector(405.0 * NM, &s, PolarizationClass::Extraordinary).unwrap();
        assert_relative_eq!(k.z / k.norm(), th.cos(), max_relative = 1e-12);
    }

    #[test]
    fn energy_match_cases() {
        assert_relative_eq!(energy_match(405.0 * NM, 810.0 * NM).unwrap(), 810.0 * NM, max_relative = 1e-14);
        assert_relative_eq!(energy_match(775.0 * NM, 1550.0 * NM).unwrap(), 1550.0 * NM, max_relative = 1e-14);
        assert!(matches!(
            energy_match(405.0 * NM, 405.0 * NM),
            Err(SimError::NoIdler { .. })
        ));
    }

    #[test]
    fn phasematch_angles_match_reported_values() {
        let c = bbo();
        let cases = [
            (ProcessKind::TypeII, 405.0, 41.8),
            (ProcessKind::TypeI, 405.0, 28.8),
            (ProcessKind::TypeII, 775.0, 28.7),
        ];
        for (kind, lp, expect) in cases {
            let p = ProcessSpec::degenerate(kind, lp * NM);
            let th = solve_phasematch_angle(&c, &p).unwrap().to_degrees();
            assert!((th - expect).abs() <= 0.1, "{kind:?} {lp}: {th}");
        }
    }

    #[test]
    fn unphasematchable_crystal_reports_error() {
        // An isotropic "crystal" cannot phasematch anything collinear.
        let mut m = MaterialFile::bbo();
        m.extraordinary = m.ordinary;
        let c = UniaxialCrystal::from_material(&m, 1e-3).unwrap();
        let p = ProcessSpec::degenerate(ProcessKind::TypeII, 405.0 * NM);
        assert!(matches!(
            solve_phasematch_angle(&c, &p),
            Err(SimError::NotPhasematchable(_))
        ));
    }

    #[test]
    fn tir_cases() {
        let c = bbo();
        let e = tir_angle(&c, 405.0 * NM, PolarizationClass::Extraordinary).unwrap().unwrap();
        assert!((e.to_degrees() - 38.0).abs() <= 0.5, "{}", e.to_degrees());
        let o = tir_angle(&c, 405.0 * NM, PolarizationClass::Ordinary).unwrap().unwrap();
        assert_eq!(o, (1.0 / c.n_o(405.0 * NM).unwrap()).asin());
        assert_relative_eq!(o.to_degrees(), 36.231_985_172_969_32, max_relative = 1e-12);

        let unity = MaterialFile {
            name: "vacuum-like".into(),
            ordinary: SellmeierModel::constant(1.0),
            extraordinary: SellmeierModel::constant(1.0),
            band_um: BBO_BAND_UM,
        };
        // Index exactly 1 fails the n > 1 material invariant, so build it by hand.
        let flat = UniaxialCrystal {
            name: unity.name,
            ordinary: unity.ordinary,
            extraordinary: unity.extraordinary,
            band_um: unity.band_um,
            length: 1e-3,
            sign: UniaxialSign::Negative,
        };
        for pol in [PolarizationClass::Ordinary, PolarizationClass::Extraordinary] {
            assert_eq!(tir_angle(&flat, 405.0 * NM, pol).unwrap(), None);
        }
    }

    #[test]
    fn material_toml_round_trip() {
        let m = MaterialFile::bbo();
        let text = m.to_toml_string();
        assert_eq!(MaterialFile::from_toml_str(&text).unwrap(), m);
        assert!(MaterialFile::from_toml_str("name = 3").is_err());
    }

    #[test]
    fn bbo_is_negative_uniaxial() {
        assert_eq!(bbo().sign, UniaxialSign::Negative);
    }

    fn closed_form(no: f64, ne: f64, cos_t: f64) -> f64 {
        let sin2 = 1.0 - cos_t * cos_t;
        1.0 / (cos_t * cos_t / (no * no) + sin2 / (ne * ne)).sqrt()
    }

    proptest! {
        #[test]
        fn eigen_route_agrees_with_closed_form(
            lambda in 0.35e-6..1.6e-6f64,
            theta in 0.0..std::f64::consts::PI,
            phi in 0.0..(2.0 * PI),
        ) {
            let c = bbo();
            let s = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            let n = c.directional_index(lambda, &s, PolarizationClass::Extraordinary).unwrap();
            let expect = closed_form(c.n_o(lambda).unwrap(), c.n_e(lambda).unwrap(), s.z);
            prop_assert!(((n - expect) / expect).abs() < 1e-12);
            let (slow, _) = c.principal_indices(lambda).unwrap().eigen_indices(&s);
            prop_assert!(((slow - c.n_o(lambda).unwrap()) / slow).abs() < 1e-12);
        }

        #[test]
        fn ordinary_rotation_invariant(
            theta in 0.0..PI, phi in 0.0..(2.0 * PI), lambda in 0.35e-6..1.6e-6f64,
        ) {
            let c = bbo();
            let s = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            let n = c.directional_index(lambda, &s, PolarizationClass::Ordinary).unwrap();
            prop_assert_eq!(n, c.n_o(lambda).unwrap());
        }

        #[test]
        fn extraordinary_bounded_and_monotone(
            lambda in 0.35e-6..1.6e-6f64, t1 in 0.0..FRAC_PI_2, t2 in 0.0..FRAC_PI_2,
        ) {
            let c = bbo();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let n_lo = c.index_at_polar(lambda, lo, PolarizationClass::Extraordinary).unwrap();
            let n_hi = c.index_at_polar(lambda, hi, PolarizationClass::Extraordinary).unwrap();
            let (no, ne) = (c.n_o(lambda).unwrap(), c.n_e(lambda).unwrap());
            prop_assert!(n_hi <= n_lo + 1e-15);
            prop_assert!(n_lo <= no + 1e-15 && n_hi >= ne - 1e-15);
        }

        #[test]
        fn wave_vector_norm_is_index(
            lambda in 0.35e-6..1.6e-6f64, theta in 0.0..PI, phi in 0.0..(2.0 * PI), e in any::<bool>(),
        ) {
            let c = bbo();
            let pol = if e { PolarizationClass::Extraordinary } else { PolarizationClass::Ordinary };
            let s = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            let k = c.wave_vector(lambda, &s, pol).unwrap();
            let n = c.directional_index(lambda, &s, pol).unwrap();
            prop_assert!((k.norm() * lambda / (2.0 * PI) - n).abs() < 1e-12);
        }

        #[test]
        fn energy_match_is_an_involution(lp in 0.3e-6..0.8e-6f64, ratio in 1.05..4.0f64) {
            let ls = lp * ratio;
            let li = energy_match(lp, ls).unwrap();
            let back = energy_match(lp, li).unwrap();
            prop_assert!(((back - ls) / ls).abs() < 1e-12);
        }
    }
}
