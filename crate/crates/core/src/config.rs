//! Run configuration files.
//!
//! Dimensional values are strings carrying their unit (`"405 nm"`,
//! `"41.8 deg"`, `"0.2 m"`) and are converted to SI on load. The resolved
//! form written next to every run uses meters and radians with
//! round-trip-exact numbers, so rerunning from it reproduces the outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::amplitude::{ProcessKind, ProcessSpec};
use crate::crystal_optics::{solve_phasematch_angle, MaterialFile, UniaxialCrystal};
use crate::engine::{AreaElement, SimulationJob};
use crate::error::{Result, SimError};
use crate::kinematics::{GridSpec, PumpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    /// `(n, m_phi, half_extent, z_obs)`.
    pub fn parameters(self) -> (usize, usize, f64, f64) {
        match self {
            Preset::Desk => (160, 180, 0.25, 0.2),
            Preset::Paper => (750, 750, 0.25, 0.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Bin,
    Csv,
    Both,
}

impl DataFormat {
    pub fn binary(self) -> bool {
        matches!(self, DataFormat::Bin | DataFormat::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, DataFormat::Csv | DataFormat::Both)
    }
}

/// Parses `"<number> <unit>"` into SI. `kind` selects the accepted units.
pub fn parse_quantity(text: &str, kind: QuantityKind) -> Result<f64> {
    let t = text.trim();
    // The unit is the trailing run of letters, which keeps exponents such
    // as `5e-4 m` inside the number.
    let split = t
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_alphabetic())
        .last()
        .map(|(i, _)| i)
        .ok_or_else(|| SimError::Config(format!("missing unit in {text:?}")))?;
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| SimError::Config(format!("bad number in {text:?}")))?;
    let scale = match (kind, unit.trim()) {
        (QuantityKind::Length, "m") => 1.0,
        (QuantityKind::Length, "cm") => 1e-2,
        (QuantityKind::Length, "mm") => 1e-3,
        (QuantityKind::Length, "um" | "µm") => 1e-6,
        (QuantityKind::Length, "nm") => 1e-9,
        (QuantityKind::Angle, "rad") => 1.0,
        (QuantityKind::Angle, "deg") => return Ok(value.to_radians()),
        (_, u) => {
            return Err(SimError::Config(format!(
                "unit {u:?} not accepted for a {kind:?} in {text:?}"
            )))
        }
    };
    Ok(value * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantityKind {
    Length,
    Angle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub half_extent: String,
    pub z_obs: String,
}

/// On-disk configuration as written by a user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    /// Material TOML; the built-in BBO table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<PathBuf>,
    pub crystal_length: String,
    pub process: ProcessKind,
    pub pump_wavelength: String,
    /// Defaults to the degenerate wavelength `2·λp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_wavelength: Option<String>,
    /// An angle, or `"solve"` for the collinear phasematching angle.
    pub theta_p: String,
    pub pump_width: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_phi: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_element: Option<AreaElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emit_pgm: Option<bool>,
}

impl Default for RunConfigFile {
    /// Type-II BBO at 405 nm on the desk preset.
    fn default() -> Self {
        Self {
            material: None,
            crystal_length: "500 um".into(),
            process: ProcessKind::TypeII,
            pump_wavelength: "405 nm".into(),
            signal_wavelength: None,
            theta_p: "solve".into(),
            pump_width: "84 um".into(),
            m_phi: None,
            preset: Some(Preset::Desk),
            grid: None,
            prune_threshold: None,
            checkpoint_every: None,
            area_element: None,
            output_dir: None,
            format: None,
            emit_pgm: None,
        }
    }
}

impl RunConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Converts units, applies the preset and solves `θp` when requested.
    pub fn resolve(&self) -> Result<RunConfig> {
        let material = match &self.material {
            Some(p) => MaterialFile::load(p).map_err(|e| SimError::Config(e.to_string()))?,
            None => MaterialFile::bbo(),
        };
        let length = parse_quantity(&self.crystal_length, QuantityKind::Length)?;
        let crystal = UniaxialCrystal::from_material(&material, length)
            .map_err(|e| SimError::Config(e.to_string()))?;
        let lambda_p = parse_quantity(&self.pump_wavelength, QuantityKind::Length)?;
        let process = match &self.signal_wavelength {
            Some(s) => ProcessSpec::new(
                self.process,
                lambda_p,
                parse_quantity(s, QuantityKind::Length)?,
            )
            .map_err(|e| SimError::Config(e.to_string()))?,
            None => ProcessSpec::degenerate(self.process, lambda_p),
        };

        let theta_solved = self.theta_p.trim() == "solve";
        let theta_p = if theta_solved {
            if !process.is_degenerate() {
                return Err(SimError::Config(
                    "theta_p = \"solve\" needs a degenerate process".into(),
                ));
            }
            solve_phasematch_angle(&crystal, &process).map_err(|e| {
                if e.is_physics() {
                    e
                } else {
                    SimError::Config(e.to_string())
                }
            })?
        } else {
            parse_quantity(&self.theta_p, QuantityKind::Angle)?
        };

        let (mut n, mut m_phi, mut half, mut z) = self.preset.unwrap_or(Preset::Desk).parameters();
        if let Some(g) = &self.grid {
            n = g.n;
            half = parse_quantity(&g.half_extent, QuantityKind::Length)?;
            z = parse_quantity(&g.z_obs, QuantityKind::Length)?;
        }
        if let Some(m) = self.m_phi {
            m_phi = m;
        }
        let pump = PumpSpec {
            lambda_p,
            theta_p,
            w_p: parse_quantity(&self.pump_width, QuantityKind::Length)?,
            m_phi,
        };
        let grid = GridSpec::new(n, half, z).map_err(|e| SimError::Config(e.to_string()))?;
        let mut job = SimulationJob::new(crystal, process, pump, grid)
            .map_err(|e| SimError::Config(e.to_string()))?;
        if let Some(t) = self.prune_threshold {
            job.prune_threshold = t;
        }
        if let Some(c) = self.checkpoint_every {
            job.checkpoint_every = c;
        }
        if let Some(a) = self.area_element {
            job.area_element = a;
        }
        job.validate().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(RunConfig {
            job,
            material: self.material.clone(),
            theta_solved,
            output_dir: self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
            format: self.format.unwrap_or(DataFormat::Bin),
            emit_pgm: self.emit_pgm.unwrap_or(false),
        })
    }
}

/// Fully resolved run parameters in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub job: SimulationJob,
    pub material: Option<PathBuf>,
    pub theta_solved: bool,
    pub output_dir: PathBuf,
    pub format: DataFormat,
    pub emit_pgm: bool,
}

impl RunConfig {
    /// Config file equivalent to this run with every value explicit.
    pub fn to_file(&self) -> RunConfigFile {
        let j = &self.job;
        let m = |v: f64| format!("{v:e} m");
        RunConfigFile {
            material: self.material.clone(),
            crystal_length: m(j.crystal.length),
            process: j.process.kind,
            pump_wavelength: m(j.process.lambda_p),
            signal_wavelength: Some(m(j.process.lambda_s)),
            theta_p: format!("{:e} rad", j.pump.theta_p),
            pump_width: m(j.pump.w_p),
            m_phi: Some(j.pump.m_phi),
            preset: None,
            grid: Some(GridSection {
                n: j.grid.n,
                half_extent: m(j.grid.half_extent),
                z_obs: m(j.grid.z_obs),
            }),
            prune_threshold: Some(j.prune_threshold),
            checkpoint_every: Some(j.checkpoint_every),
            area_element: Some(j.area_element),
            output_dir: Some(self.output_dir.clone()),
            format: Some(self.format),
            emit_pgm: Some(self.emit_pgm),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_file()).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantities() {
        let l = |s| parse_quantity(s, QuantityKind::Length).unwrap();
        assert_eq!(l("405 nm"), 405.0 * 1e-9);
        assert_eq!(l("500um"), 500.0 * 1e-6);
        assert_eq!(l("84 µm"), 84.0 * 1e-6);
        assert_eq!(l("20 cm"), 0.2);
        let a = parse_quantity("41.8 deg", QuantityKind::Angle).unwrap();
        assert_eq!(a, 41.8f64.to_radians());
        assert!(parse_quantity("41.8", QuantityKind::Angle).is_err());
        assert!(parse_quantity("3 deg", QuantityKind::Length).is_err());
        assert!(parse_quantity("x nm", QuantityKind::Length).is_err());
    }

    #[test]
    fn default_resolves_to_desk_type_ii() {
        let rc = RunConfigFile::default().resolve().unwrap();
        assert_eq!(rc.job.grid.n, 160);
        assert_eq!(rc.job.pump.m_phi, 180);
        assert!(rc.theta_solved);
        assert!((rc.job.pump.theta_p.to_degrees() - 41.8).abs() < 0.1);
    }

    #[test]
    fn resolved_round_trip_is_exact() {
        let mut f = RunConfigFile::default();
        f.theta_p = "41.8 deg".into();
        f.m_phi = Some(12);
        let rc = f.resolve().unwrap();
        let again = RunConfigFile::from_toml_str(&rc.to_toml_string())
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(again, RunConfig {
            theta_solved: false,
            ..rc.clone()
        });
        assert_eq!(again.job.fingerprint(crate::amplitude::Role::Signal), rc.job.fingerprint(crate::amplitude::Role::Signal));
    }

    #[test]
    fn solve_needs_degenerate_process() {
        let mut f = RunConfigFile::default();
        f.signal_wavelength = Some("800 nm".into());
        assert!(matches!(f.resolve(), Err(SimError::Config(_))));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let text = toml::to_string(&RunConfigFile::default()).unwrap() + "bogus = 1\n";
        assert!(matches!(RunConfigFile::from_toml_str(&text), Err(SimError::Config(_))));
        let mut f = RunConfigFile::default();
        f.pump_wavelength = "100 nm".into();
        assert!(matches!(f.resolve(), Err(SimError::Config(_))));
    }
}
