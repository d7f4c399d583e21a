//! Observables extracted from density grids: line and radial profiles, ring
//! radii and thicknesses, conditional spot widths, rotational symmetry and
//! the polarization-spread estimate.

use std::f64::consts::PI;

use serde::Serialize;

use crate::amplitude::{ProcessSpec, Role};
use crate::crystal_optics::{bisect, UniaxialCrystal};
use crate::engine::DensityGrid;
use crate::error::{Result, SimError};
use crate::kinematics::{direction_from_angles, pump_central_k, DirectionAngles, PumpSpec};

pub const DEFAULT_PROMINENCE: f64 = 0.05;

/// A sampled 1D profile with coordinates in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
    /// Sample spacing of the underlying grid.
    pub spacing: f64,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices of strict local maxima (plateaus report their first sample).
    pub fn local_maxima(&self) -> Vec<usize> {
        let v = &self.values;
        let n = v.len();
        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            let left_ok = i == 0 || v[i - 1] < v[i];
            let right_ok = j + 1 == n || v[j + 1] < v[i];
            if left_ok && right_ok && v[i] > 0.0 {
                out.push(i);
            }
            i = j + 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    YEqualsZero,
    XEqualsZero,
}

/// Row (`y = 0`) or column (`x = 0`) nearest the requested axis.
pub fn slice_profile(grid: &DensityGrid, axis: SliceAxis) -> Profile {
    let g = &grid.grid;
    let n = g.n;
    let mid = (0..n)
        .min_by(|&a, &b| g.coord(a).abs().total_cmp(&g.coord(b).abs()))
        .unwrap_or(0);
    let values = (0..n)
        .map(|j| match axis {
            SliceAxis::YEqualsZero => grid.at(j, mid),
            SliceAxis::XEqualsZero => grid.at(mid, j),
        })
        .collect();
    Profile {
        coords: (0..n).map(|j| g.coord(j)).collect(),
        values,
        spacing: g.spacing(),
    }
}

/// Cell indices grouped into annuli one cell wide, `[k·d, (k+1)·d)`.
fn annuli(grid: &DensityGrid) -> Vec<Vec<usize>> {
    let g = &grid.grid;
    let d = g.spacing();
    let mut bins: Vec<Vec<usize>> = Vec::new();
    for idx in 0..g.len() {
        let (x, y) = g.point(idx);
        let k = (x.hypot(y) / d) as usize;
        if bins.len() <= k {
            bins.resize_with(k + 1, Vec::new);
        }
        bins[k].push(idx);
    }
    bins
}

/// Azimuthal average over annular bins one cell wide; coordinates are bin
/// centres. Bins containing no cell centre are omitted.
pub fn radial_profile(grid: &DensityGrid) -> Profile {
    let d = grid.grid.spacing();
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (k, cells) in annuli(grid).iter().enumerate() {
        if cells.is_empty() {
            continue;
        }
        let sum: f64 = cells.iter().map(|&i| grid.values[i]).sum();
        coords.push((k as f64 + 0.5) * d);
        values.push(sum / cells.len() as f64);
    }
    Profile {
        coords,
        values,
        spacing: d,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingMetrics {
    /// Ring radius on the observation plane, meters.
    pub radius: f64,
    /// Full width at half maximum across the ring, meters.
    pub fwhm_thickness: f64,
    /// Profile value at the peak.
    pub peak_density: f64,
    /// Set when the FWHM spans two grid cells or fewer.
    pub under_resolved: bool,
}

/// Topographic prominence of the local maximum at `i`.
fn prominence(v: &[f64], i: usize) -> f64 {
    let peak = v[i];
    let side_min = |range: &mut dyn Iterator<Item = usize>| {
        let mut lowest = peak;
        for j in range {
            if v[j] > peak {
                return lowest;
            }
            lowest = lowest.min(v[j]);
        }
        // No higher ground on this side: the edge bounds the descent.
        lowest
    };
    let left = side_min(&mut (0..i).rev());
    let right = side_min(&mut (i + 1..v.len()));
    peak - left.max(right)
}

/// Linear-interpolated position where the profile crosses `level`, walking
/// from the peak at `i` in direction `step`. Falls back to the end sample.
fn half_crossing(p: &Profile, i: usize, level: f64, step: isize) -> f64 {
    let mut j = i as isize;
    loop {
        let next = j + step;
        if next < 0 || next as usize >= p.len() {
            return p.coords[j as usize];
        }
        let (a, b) = (p.values[j as usize], p.values[next as usize]);
        if b < level {
            let t = (a - level) / (a - b);
            let (ca, cb) = (p.coords[j as usize], p.coords[next as usize]);
            return ca + t * (cb - ca);
        }
        j = next;
    }
}

/// FWHM by linear interpolation around the peak at `i`.
pub fn fwhm_at(p: &Profile, i: usize) -> f64 {
    let level = 0.5 * p.values[i];
    half_crossing(p, i, level, 1) - half_crossing(p, i, level, -1)
}

/// Rings of a radial profile: local maxima whose prominence is at least
/// `prominence` times the global maximum, ordered by radius.
pub fn ring_metrics_with(profile: &Profile, prominence_frac: f64) -> Vec<RingMetrics> {
    let global = profile.values.iter().copied().fold(0.0, f64::max);
    if global <= 0.0 {
        return Vec::new();
    }
    profile
        .local_maxima()
        .into_iter()
        .filter(|&i| prominence(&profile.values, i) >= prominence_frac * global)
        .map(|i| {
            let fwhm = fwhm_at(profile, i);
            RingMetrics {
                radius: profile.coords[i],
                fwhm_thickness: fwhm,
                peak_density: profile.values[i],
                under_resolved: fwhm <= 2.0 * profile.spacing,
            }
        })
        .collect()
}

pub fn ring_metrics(profile: &Profile) -> Vec<RingMetrics> {
    ring_metrics_with(profile, DEFAULT_PROMINENCE)
}

/// Bilinear interpolation of the grid at plane point `(x, y)`; `None`
/// outside the sampled square.
pub fn sample_bilinear(grid: &DensityGrid, x: f64, y: f64) -> Option<f64> {
    let g = &grid.grid;
    let fx = g.fractional_index(x);
    let fy = g.fractional_index(y);
    let last = (g.n - 1) as f64;
    if !(0.0..=last).contains(&fx) || !(0.0..=last).contains(&fy) {
        return None;
    }
    let ix = (fx.floor() as usize).min(g.n - 2);
    let iy = (fy.floor() as usize).min(g.n - 2);
    let (tx, ty) = (fx - ix as f64, fy - iy as f64);
    let v00 = grid.at(ix, iy);
    let v10 = grid.at(ix + 1, iy);
    let v01 = grid.at(ix, iy + 1);
    let v11 = grid.at(ix + 1, iy + 1);
    Some(
        v00 * (1.0 - tx) * (1.0 - ty)
            + v10 * tx * (1.0 - ty)
            + v01 * (1.0 - tx) * ty
            + v11 * tx * ty,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalWidths {
    /// Arc-length FWHM along the ring through the peak, meters.
    pub fwhm_azimuthal: f64,
    /// FWHM along the radial line through the peak, meters.
    pub fwhm_radial: f64,
    pub frac_of_circumference: f64,
    pub frac_of_ring_thickness: f64,
    /// Peak position on the plane.
    pub peak_x: f64,
    pub peak_y: f64,
}

/// Sub-sample step used when walking the interpolated field.
const WALK_STEPS_PER_CELL: f64 = 16.0;

/// Distance from the peak to the half-level along `point(s)`, `s ≥ 0`.
fn walk_to_half(
    grid: &DensityGrid,
    level: f64,
    point: impl Fn(f64) -> (f64, f64),
) -> Result<f64> {
    let ds = grid.grid.spacing() / WALK_STEPS_PER_CELL;
    let mut prev = {
        let (x, y) = point(0.0);
        sample_bilinear(grid, x, y).ok_or(SimError::PeakOnBoundary)?
    };
    let mut s = 0.0;
    loop {
        let next = s + ds;
        let (x, y) = point(next);
        let v = sample_bilinear(grid, x, y).ok_or(SimError::PeakOnBoundary)?;
        if v < level {
            return Ok(s + ds * (prev - level) / (prev - v));
        }
        prev = v;
        s = next;
        if s > 2.0 * grid.grid.half_extent * PI {
            return Err(SimError::Domain("density never drops to half maximum".into()));
        }
    }
}

/// Radial and arc-length FWHM of a conditional spot, expressed as fractions
/// of the ring circumference and thickness.
pub fn conditional_widths(grid: &DensityGrid, ring: &RingMetrics) -> Result<ConditionalWidths> {
    let g = &grid.grid;
    let peak = grid.argmax();
    let (ix, iy) = (peak % g.n, peak / g.n);
    if ix == 0 || iy == 0 || ix == g.n - 1 || iy == g.n - 1 {
        return Err(SimError::PeakOnBoundary);
    }
    let (px, py) = g.point(peak);
    let r = px.hypot(py);
    if r == 0.0 {
        return Err(SimError::Domain("conditional peak on the axis".into()));
    }
    let phi = py.atan2(px);
    let level = 0.5 * grid.values[peak];

    let (ux, uy) = (phi.cos(), phi.sin());
    let out = walk_to_half(grid, level, |s| (px + s * ux, py + s * uy))?;
    let inward = walk_to_half(grid, level, |s| (px - s * ux, py - s * uy))?;
    let ccw = walk_to_half(grid, level, |s| {
        let a = phi + s / r;
        (r * a.cos(), r * a.sin())
    })?;
    let cw = walk_to_half(grid, level, |s| {
        let a = phi - s / r;
        (r * a.cos(), r * a.sin())
    })?;

    let fwhm_radial = out + inward;
    let fwhm_azimuthal = ccw + cw;
    Ok(ConditionalWidths {
        fwhm_azimuthal,
        fwhm_radial,
        frac_of_circumference: fwhm_azimuthal / (2.0 * PI * ring.radius),
        frac_of_ring_thickness: fwhm_radial / ring.fwhm_thickness,
        peak_x: px,
        peak_y: py,
    })
}

/// Largest annulus-wise `std/mean` over one-cell annuli, ignoring annuli
/// whose mean is below 1% of the largest annulus mean.
pub fn rotational_symmetry_error(grid: &DensityGrid) -> f64 {
    let stats: Vec<(f64, f64)> = annuli(grid)
        .iter()
        .filter(|c| !c.is_empty())
        .map(|cells| {
            let n = cells.len() as f64;
            let mean = cells.iter().map(|&i| grid.values[i]).sum::<f64>() / n;
            let var = cells
                .iter()
                .map(|&i| (grid.values[i] - mean).powi(2))
                .sum::<f64>()
                / n;
            (mean, var.sqrt())
        })
        .collect();
    let peak = stats.iter().map(|s| s.0).fold(0.0, f64::max);
    if peak <= 0.0 {
        return 0.0;
    }
    stats
        .iter()
        .filter(|(mean, _)| *mean >= 0.01 * peak)
        .map(|(mean, std)| std / mean)
        .fold(0.0, f64::max)
}

/// Angular radius and centre polar angle of the standard output circle of
/// one photon for a single pump along `(θp, 0)`.
///
/// Solves full momentum conservation `|k_p − k_role| = |k_other|` for role
/// directions in the meridional plane. One root is the collinear direction
/// `θp`; the other marks the far side of the circle.
pub fn standard_cone(
    crystal: &UniaxialCrystal,
    process: &ProcessSpec,
    pump: &PumpSpec,
    role: Role,
) -> Result<(f64, f64)> {
    let pump_index = crystal.index_at_polar(
        pump.lambda_p,
        pump.theta_p,
        crate::crystal_optics::PolarizationClass::Extraordinary,
    )?;
    let k_p = pump_central_k(pump, 0.0, pump_index);
    let (lr, lo) = (process.wavelength(role), process.wavelength(role.other()));
    let (pr, po) = (process.polarization(role), process.polarization(role.other()));
    let mismatch = |theta: f64| -> Result<f64> {
        let k_r = crystal.wave_vector(lr, &direction_from_angles(DirectionAngles::new(theta, 0.0)), pr)?;
        let rest = k_p - k_r;
        let k_o = crystal.wave_vector(lo, &rest.normalize(), po)?;
        Ok(rest.norm() - k_o.norm())
    };
    let tp = pump.theta_p;
    let gap = 1e-4;
    let span = 0.3_f64.min(tp);
    for (lo_t, hi_t) in [(tp - span, tp - gap), (tp + gap, tp + span)] {
        if let Some(root) = bisect(mismatch, lo_t, hi_t, 1e-13)? {
            let rho = 0.5 * (root - tp).abs();
            return Ok((rho, 0.5 * (root + tp)));
        }
    }
    Err(SimError::NotPhasematchable(
        "no standard output circle in the meridional plane".into(),
    ))
}

/// Full range of pump azimuths whose standard output circles, thickened to
/// the ring's FWHM, still cover a fixed point of a ring at the pump cone
/// angle.
///
/// In the angular plane the point sits at polar angle `θp`. A constituent
/// rotated by `δ` has its circle centre at polar angle `θc` and azimuth `δ`,
/// so the squared distance to the point is
/// `ρ² + 2θp·θc·(1 − cos δ)` when `θp − θc = ±ρ`. Coverage by the annulus
/// `ρ ± t/2` bounds `δ`.
pub fn polarization_spread_estimate(
    crystal: &UniaxialCrystal,
    process: &ProcessSpec,
    pump: &PumpSpec,
    ring: &RingMetrics,
    z_obs: f64,
) -> Result<f64> {
    let (rho, theta_c) = standard_cone(crystal, process, pump, Role::Signal)?;
    // Plane thickness at radius r = z·tanθ maps to dθ = dr·cos²θ / z.
    let theta_ring = (ring.radius / z_obs).atan();
    let t = ring.fwhm_thickness * theta_ring.cos().powi(2) / z_obs;
    let reach = rho * t + 0.25 * t * t;
    let cos_delta = 1.0 - reach / (2.0 * pump.theta_p * theta_c);
    if cos_delta <= -1.0 {
        return Ok(2.0 * PI);
    }
    Ok(2.0 * cos_delta.acos())
}
