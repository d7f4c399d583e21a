//! Marginal, flux and conditional output densities over observation grids.
//!
//! Each output cell is an independent task: it reads shared immutable tables
//! (grid wave vectors, pump constituents) and reduces its own sums in fixed
//! index order, so results do not depend on the number of workers. The
//! amplitude sum over pump constituents is accumulated as a complex number
//! per partner cell and squared only afterwards.

pub mod checkpoint;
pub mod summation;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::amplitude::{PairAmplitude, ProcessSpec, PumpTable, Role};
use crate::crystal_optics::UniaxialCrystal;
use crate::error::{Result, SimError};
use crate::kinematics::{direction_from_angles, DirectionAngles, GridSpec, PumpSpec};
use crate::Vec3;

use checkpoint::Checkpoint;
use summation::{row_compensated_total, CompensatedSum};

pub const DEFAULT_PRUNE_THRESHOLD: f64 = -30.0;
/// Default refusal limit on `n⁴·m_phi` amplitude triples.
pub const DEFAULT_WORK_BUDGET: f64 = 2.0e11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    UnitSum,
    Raw,
}

impl Normalization {
    pub fn code(self) -> u8 {
        match self {
            Normalization::Raw => 0,
            Normalization::UnitSum => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Normalization::Raw),
            1 => Ok(Normalization::UnitSum),
            _ => Err(SimError::Format(format!("unknown normalization code {code}"))),
        }
    }
}

/// Measure attached to each partner-grid cell in the marginal sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaElement {
    /// Plain `(x, y)` cell area on the observation plane.
    PlaneCell,
    /// Transverse k-space area `dk_x·dk_y = |k|²·z²/R⁴·dA`.
    KSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationJob {
    pub crystal: UniaxialCrystal,
    pub process: ProcessSpec,
    pub pump: PumpSpec,
    pub grid: GridSpec,
    /// Gaussian exponent below which a term is replaced by zero; `-inf` disables pruning.
    pub prune_threshold: f64,
    /// Rows per checkpoint/progress chunk.
    pub checkpoint_every: usize,
    pub area_element: AreaElement,
}

impl SimulationJob {
    pub fn new(
        crystal: UniaxialCrystal,
        process: ProcessSpec,
        pump: PumpSpec,
        grid: GridSpec,
    ) -> Result<Self> {
        let job = Self {
            crystal,
            process,
            pump,
            grid,
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            checkpoint_every: 8,
            area_element: AreaElement::PlaneCell,
        };
        job.validate()?;
        Ok(job)
    }

    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        self.pump.validate()?;
        self.grid.validate()?;
        if self.pump.lambda_p != self.process.lambda_p {
            return Err(SimError::InvalidParameter(
                "pump and process wavelengths disagree".into(),
            ));
        }
        if !(self.prune_threshold <= 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "prune threshold must be ≤ 0, got {}",
                self.prune_threshold
            )));
        }
        if self.checkpoint_every == 0 {
            return Err(SimError::InvalidParameter(
                "checkpoint_every must be at least one row".into(),
            ));
        }
        Ok(())
    }

    /// Number of `(outer cell, partner cell, φp)` triples in a marginal run.
    pub fn work_estimate(&self) -> f64 {
        let cells = self.grid.len() as f64;
        cells * cells * self.pump.m_phi as f64
    }

    /// SHA-256 over every job parameter plus the marginal role.
    pub fn fingerprint(&self, role: Role) -> [u8; 32] {
        let mut h = Sha256::new();
        let mut put = |tag: &str, v: f64| {
            h.update(tag.as_bytes());
            h.update(v.to_bits().to_le_bytes());
        };
        let c = &self.crystal;
        for (tag, m) in [("o", &c.ordinary), ("e", &c.extraordinary)] {
            put(tag, m.a);
            put(tag, m.b);
            put(tag, m.c);
            put(tag, m.d);
        }
        put("band", c.band_um[0]);
        put("band", c.band_um[1]);
        put("length", c.length);
        let p = &self.process;
        put("lp", p.lambda_p);
        put("ls", p.lambda_s);
        put("li", p.lambda_i);
        put("theta_p", self.pump.theta_p);
        put("w_p", self.pump.w_p);
        put("m_phi", self.pump.m_phi as f64);
        put("n", self.grid.n as f64);
        put("half", self.grid.half_extent);
        put("z", self.grid.z_obs);
        put("prune", self.prune_threshold);
        put("every", self.checkpoint_every as f64);
        h.update(c.name.as_bytes());
        h.update(p.kind.as_str().as_bytes());
        h.update(p.signal_pol.as_str().as_bytes());
        h.update(p.idler_pol.as_str().as_bytes());
        h.update(format!("{:?}", self.area_element).as_bytes());
        h.update(role.as_str().as_bytes());
        h.finalize().into()
    }
}

/// `n×n` nonnegative density over the observation plane.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub values: Vec<f64>,
    pub grid: GridSpec,
    pub normalization: Normalization,
    pub cell_area: f64,
}

impl DensityGrid {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.n + ix]
    }

    /// `Σ value·cell_area` with row-wise compensation.
    pub fn integral(&self) -> f64 {
        row_compensated_total(&self.values, self.grid.n) * self.cell_area
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Structural and normalization checks used after reloading a grid.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.values.len() != self.grid.len() {
            return Err(SimError::Format(format!(
                "expected {} values, found {}",
                self.grid.len(),
                self.values.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(SimError::Format(format!("invalid density value {v}")));
        }
        if self.normalization == Normalization::UnitSum {
            let total = self.integral();
            if (total - 1.0).abs() > 1e-9 {
                return Err(SimError::Format(format!(
                    "unit-sum grid integrates to {total}"
                )));
            }
        }
        Ok(())
    }

    /// Rescales so that `Σ value·cell_area = 1`. A grid that vanishes
    /// everywhere cannot be normalized and stays raw.
    pub fn normalized(mut self) -> Self {
        let total = self.integral();
        if total > 0.0 && total.is_finite() {
            for v in &mut self.values {
                *v /= total;
            }
            self.normalization = Normalization::UnitSum;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PruneStats {
    pub evaluated: u64,
    pub skipped: u64,
}

impl PruneStats {
    pub fn skipped_fraction(&self) -> f64 {
        let total = self.evaluated + self.skipped;
        if total == 0 {
            0.0
        } else {
            self.skipped as f64 / total as f64
        }
    }

    fn merge(self, other: Self) -> Self {
        Self {
            evaluated: self.evaluated + other.evaluated,
            skipped: self.skipped + other.skipped,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub rows_done: usize,
    pub rows_total: usize,
    pub elapsed: Duration,
}

impl Progress {
    pub fn rows_per_sec(&self) -> f64 {
        let s = self.elapsed.as_secs_f64();
        if s > 0.0 {
            self.rows_done as f64 / s
        } else {
            0.0
        }
    }
}

pub type ProgressFn<'a> = &'a (dyn Fn(&Progress) + Sync);

#[derive(Clone, Default)]
pub struct RunOptions<'a> {
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    /// Refusal limit on the work estimate; `None` means [`DEFAULT_WORK_BUDGET`].
    pub budget: Option<f64>,
    pub budget_override: bool,
    /// Checkpoint file; resumed from when it already exists.
    pub checkpoint_path: Option<PathBuf>,
    /// Stop (as if interrupted) once at least this many rows are complete.
    pub stop_after_rows: Option<usize>,
    pub progress: Option<ProgressFn<'a>>,
}

impl RunOptions<'_> {
    fn check_budget(&self, estimate: f64) -> Result<()> {
        let budget = self.budget.unwrap_or(DEFAULT_WORK_BUDGET);
        if estimate > budget && !self.budget_override {
            return Err(SimError::BudgetExceeded { estimate, budget });
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.unwrap_or(0))
            .build()
            .map_err(|e| SimError::InvalidParameter(format!("thread pool: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct MarginalRun {
    pub density: DensityGrid,
    pub stats: PruneStats,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub enum RunOutcome {
    Complete(MarginalRun),
    Interrupted { completed_rows: usize },
}

/// Skip decision for one `(k_s, k_i, φp)` triple.
#[inline]
pub fn should_prune(exponent: f64, threshold: f64) -> bool {
    exponent < threshold
}

/// Wave vector of every cell of `grid` for photon `role`.
pub fn grid_wave_vectors(
    crystal: &UniaxialCrystal,
    process: &ProcessSpec,
    role: Role,
    grid: &GridSpec,
) -> Result<Vec<Vec3>> {
    let lambda = process.wavelength(role);
    let pol = process.polarization(role);
    (0..grid.len())
        .map(|idx| crystal.wave_vector(lambda, &direction_from_angles(grid.angles(idx)), pol))
        .collect()
}

fn partner_weights(job: &SimulationJob, partner_k: &[Vec3]) -> Vec<f64> {
    let g = &job.grid;
    let area = g.cell_area();
    match job.area_element {
        AreaElement::PlaneCell => vec![area; g.len()],
        AreaElement::KSpace => (0..g.len())
            .map(|idx| {
                let (x, y) = g.point(idx);
                let r2 = x * x + y * y + g.z_obs * g.z_obs;
                partner_k[idx].norm_squared() * g.z_obs * g.z_obs / (r2 * r2) * area
            })
            .collect(),
    }
}

/// Gaussian exponent `-w²(a² + b²)/4` of one triple, where `(a0, b0)` are
/// the pump-frame transverse components of `k_outer − k_p`. Every path
/// evaluates it in this exact order so pruning decisions agree bitwise.
#[inline]
fn gate_exponent(a0: f64, b0: f64, fx: &Vec3, fy: &Vec3, k: &Vec3, w2q: f64) -> f64 {
    let a = a0 + fx.x * k.x + fx.y * k.y + fx.z * k.z;
    let b = b0 + fy.x * k.x + fy.y * k.y + fy.z * k.z;
    -w2q * (a * a + b * b)
}

const MAX_BUCKETS_PER_AXIS: usize = 256;

/// Partner cells of one pump constituent bucketed by their transverse
/// pump-frame components. A term can only survive pruning when those
/// components lie within `radius` of `-(a0, b0)`, so a query touches a few
/// buckets instead of the whole grid.
struct BucketIndex {
    u0: f64,
    v0: f64,
    size: f64,
    nu: usize,
    nv: usize,
    offsets: Vec<u32>,
    members: Vec<u32>,
}

impl BucketIndex {
    fn new(partner: &[Vec3], fx: &Vec3, fy: &Vec3, radius: f64) -> Self {
        let uv: Vec<(f64, f64)> = partner
            .iter()
            .map(|k| {
                (
                    fx.x * k.x + fx.y * k.y + fx.z * k.z,
                    fy.x * k.x + fy.y * k.y + fy.z * k.z,
                )
            })
            .collect();
        let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(u, v) in &uv {
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
        let span = (u1 - u0).max(v1 - v0).max(f64::MIN_POSITIVE);
        let size = radius.max(span / MAX_BUCKETS_PER_AXIS as f64);
        let nu = ((u1 - u0) / size) as usize + 1;
        let nv = ((v1 - v0) / size) as usize + 1;

        let key = |(u, v): (f64, f64)| {
            let iu = (((u - u0) / size) as usize).min(nu - 1);
            let iv = (((v - v0) / size) as usize).min(nv - 1);
            iv * nu + iu
        };
        let mut offsets = vec![0u32; nu * nv + 1];
        for &p in &uv {
            offsets[key(p) + 1] += 1;
        }
        for b in 0..nu * nv {
            offsets[b + 1] += offsets[b];
        }
        let mut fill = offsets.clone();
        let mut members = vec![0u32; uv.len()];
        for (i, &p) in uv.iter().enumerate() {
            let b = key(p);
            members[fill[b] as usize] = i as u32;
            fill[b] += 1;
        }
        Self {
            u0,
            v0,
            size,
            nu,
            nv,
            offsets,
            members,
        }
    }

    /// Appends every member whose bucket lies within one bucket of the disk
    /// of `radius` around `(cu, cv)`. The extra bucket absorbs rounding.
    fn candidates(&self, cu: f64, cv: f64, radius: f64, out: &mut Vec<u32>) {
        let span = |c: f64, origin: f64, n: usize| -> Option<(usize, usize)> {
            let lo = ((c - radius - origin) / self.size).floor() - 1.0;
            let hi = ((c + radius - origin) / self.size).floor() + 1.0;
            if hi < 0.0 || lo > (n - 1) as f64 {
                return None;
            }
            Some((lo.max(0.0) as usize, (hi as usize).min(n - 1)))
        };
        let (Some((ulo, uhi)), Some((vlo, vhi))) =
            (span(cu, self.u0, self.nu), span(cv, self.v0, self.nv))
        else {
            return;
        };
        for iv in vlo..=vhi {
            let row = iv * self.nu;
            let a = self.offsets[row + ulo] as usize;
            let b = self.offsets[row + uhi + 1] as usize;
            out.extend_from_slice(&self.members[a..b]);
        }
    }
}

/// Shared read-only tables for one marginal run.
struct MarginalKernel {
    role: Role,
    outer: Vec<Vec3>,
    partner: Vec<Vec3>,
    weights: Vec<f64>,
    pump: PumpTable,
    threshold: f64,
    /// One index per constituent; empty when pruning is disabled.
    buckets: Vec<BucketIndex>,
    radius: f64,
    inv_m2: f64,
}

struct Scratch {
    acc: Vec<Complex64>,
    touched: Vec<bool>,
    list: Vec<u32>,
    candidates: Vec<u32>,
}

impl MarginalKernel {
    fn new(job: &SimulationJob, role: Role) -> Result<Self> {
        let outer = grid_wave_vectors(&job.crystal, &job.process, role, &job.grid)?;
        let partner = grid_wave_vectors(&job.crystal, &job.process, role.other(), &job.grid)?;
        let pump = PumpTable::new(&job.pump, &job.crystal)?;
        let m = pump.m_phi() as f64;
        let threshold = job.prune_threshold;
        // a² + b² ≤ -4·threshold/w² for any surviving term.
        let radius = (-4.0 * threshold).sqrt() / pump.w_p;
        let buckets = if threshold > f64::NEG_INFINITY {
            pump.constituents
                .iter()
                .map(|c| BucketIndex::new(&partner, &c.frame.x, &c.frame.y, radius))
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            role,
            weights: partner_weights(job, &partner),
            outer,
            partner,
            pump,
            threshold,
            buckets,
            radius,
            inv_m2: 1.0 / (m * m),
        })
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            acc: vec![Complex64::new(0.0, 0.0); self.partner.len()],
            touched: vec![false; self.partner.len()],
            list: Vec::new(),
            candidates: Vec::new(),
        }
    }

    #[inline]
    fn pair(&self, outer: &Vec3, partner: &Vec3) -> (Vec3, Vec3) {
        match self.role {
            Role::Signal => (*outer, *partner),
            Role::Idler => (*partner, *outer),
        }
    }

    #[inline]
    fn w2q(&self) -> f64 {
        0.25 * self.pump.w_p * self.pump.w_p
    }

    /// Unnormalized marginal value at one outer cell.
    fn cell(&self, o: usize, s: &mut Scratch) -> (f64, PruneStats) {
        if self.buckets.is_empty() {
            return self.cell_full(o, s, false);
        }
        let ko = self.outer[o];
        let w2q = self.w2q();
        let mut evaluated = 0u64;
        for (c, index) in self.pump.constituents.iter().zip(&self.buckets) {
            let d = ko - c.k;
            let (fx, fy) = (&c.frame.x, &c.frame.y);
            let a0 = fx.dot(&d);
            let b0 = fy.dot(&d);
            s.candidates.clear();
            index.candidates(-a0, -b0, self.radius, &mut s.candidates);
            for &i in &s.candidates {
                let i = i as usize;
                let kp = &self.partner[i];
                if should_prune(gate_exponent(a0, b0, fx, fy, kp, w2q), self.threshold) {
                    continue;
                }
                evaluated += 1;
                if !s.touched[i] {
                    s.touched[i] = true;
                    s.list.push(i as u32);
                }
                let (ks, ki) = self.pair(&ko, kp);
                s.acc[i] += self.pump.constituent_amplitude(c, &ks, &ki);
            }
        }

        // Untouched partners contribute exact zeros, which leave a
        // compensated sum unchanged, so summing the touched ones in index
        // order reproduces the full scan bitwise.
        s.list.sort_unstable();
        let mut total = CompensatedSum::new();
        for &i in &s.list {
            let i = i as usize;
            total.add(s.acc[i].norm_sqr() * self.inv_m2 * self.weights[i]);
            s.acc[i] = Complex64::new(0.0, 0.0);
            s.touched[i] = false;
        }
        s.list.clear();
        let triples = (self.partner.len() * self.pump.m_phi()) as u64;
        let stats = PruneStats {
            evaluated,
            skipped: triples - evaluated,
        };
        (total.value(), stats)
    }

    /// Reference path scanning every partner cell for every constituent.
    fn cell_full(&self, o: usize, s: &mut Scratch, prune: bool) -> (f64, PruneStats) {
        let ko = self.outer[o];
        let w2q = self.w2q();
        let mut stats = PruneStats::default();
        s.acc.fill(Complex64::new(0.0, 0.0));
        for c in &self.pump.constituents {
            let d = ko - c.k;
            let (fx, fy) = (&c.frame.x, &c.frame.y);
            let a0 = fx.dot(&d);
            let b0 = fy.dot(&d);
            for (acc, kp) in s.acc.iter_mut().zip(&self.partner) {
                if prune && should_prune(gate_exponent(a0, b0, fx, fy, kp, w2q), self.threshold) {
                    stats.skipped += 1;
                    continue;
                }
                stats.evaluated += 1;
                let (ks, ki) = self.pair(&ko, kp);
                *acc += self.pump.constituent_amplitude(c, &ks, &ki);
            }
        }
        let mut total = CompensatedSum::new();
        for (acc, w) in s.acc.iter().zip(&self.weights) {
            total.add(acc.norm_sqr() * self.inv_m2 * w);
        }
        s.acc.fill(Complex64::new(0.0, 0.0));
        (total.value(), stats)
    }
}

/// Runs (or resumes) one marginal density computation.
pub fn run_marginal(job: &SimulationJob, role: Role, opts: &RunOptions) -> Result<RunOutcome> {
    job.validate()?;
    opts.check_budget(job.work_estimate())?;
    let n = job.grid.n;
    let fingerprint = job.fingerprint(role);
    let mut raw = vec![0.0; job.grid.len()];
    let mut row = 0usize;

    if let Some(path) = opts.checkpoint_path.as_deref().filter(|p| p.exists()) {
        let ck = Checkpoint::load(path)?;
        ck.verify(&fingerprint, n)?;
        row = ck.completed_rows as usize;
        raw[..ck.values.len()].copy_from_slice(&ck.values);
    }

    let kernel = MarginalKernel::new(job, role)?;
    let pool = opts.pool()?;
    let start = Instant::now();
    let mut stats = PruneStats::default();

    while row < n {
        let end = (row + job.checkpoint_every).min(n);
        let chunk = &mut raw[row * n..end * n];
        let chunk_stats = pool.install(|| {
            chunk
                .par_chunks_mut(n)
                .enumerate()
                .map(|(r, out)| {
                    let mut scratch = kernel.scratch();
                    let base = (row + r) * n;
                    let mut st = PruneStats::default();
                    for (col, v) in out.iter_mut().enumerate() {
                        let (value, cs) = kernel.cell(base + col, &mut scratch);
                        *v = value;
                        st = st.merge(cs);
                    }
                    st
                })
                .reduce(PruneStats::default, PruneStats::merge)
        });
        stats = stats.merge(chunk_stats);
        row = end;

        if let Some(path) = &opts.checkpoint_path {
            Checkpoint {
                fingerprint,
                completed_rows: row as u32,
                values: raw[..row * n].to_vec(),
            }
            .save(path)?;
        }
        if let Some(cb) = opts.progress {
            cb(&Progress {
                rows_done: row,
                rows_total: n,
                elapsed: start.elapsed(),
            });
        }
        if let Some(stop) = opts.stop_after_rows {
            if row >= stop && row < n {
                return Ok(RunOutcome::Interrupted {
                    completed_rows: row,
                });
            }
        }
    }

    let density = DensityGrid {
        values: raw,
        grid: job.grid,
        normalization: Normalization::Raw,
        cell_area: job.grid.cell_area(),
    }
    .normalized();
    if density.normalization != Normalization::UnitSum {
        return Err(SimError::Domain(
            "marginal density vanishes on the whole grid".into(),
        ));
    }
    Ok(RunOutcome::Complete(MarginalRun {
        density,
        stats,
        elapsed: start.elapsed(),
    }))
}

fn complete(outcome: RunOutcome) -> Result<MarginalRun> {
    match outcome {
        RunOutcome::Complete(run) => Ok(run),
        RunOutcome::Interrupted { completed_rows } => Err(SimError::InvalidParameter(format!(
            "run stopped after {completed_rows} rows"
        ))),
    }
}

pub fn marginal_density(job: &SimulationJob, role: Role, opts: &RunOptions) -> Result<MarginalRun> {
    complete(run_marginal(job, role, opts)?)
}

pub fn marginal_signal_density(job: &SimulationJob, opts: &RunOptions) -> Result<DensityGrid> {
    Ok(marginal_density(job, Role::Signal, opts)?.density)
}

pub fn marginal_idler_density(job: &SimulationJob, opts: &RunOptions) -> Result<DensityGrid> {
    Ok(marginal_density(job, Role::Idler, opts)?.density)
}

/// Cellwise `P(k_s) + P(k_i)`.
pub fn flux_density(sig: &DensityGrid, idl: &DensityGrid) -> Result<DensityGrid> {
    if sig.grid != idl.grid {
        return Err(SimError::GridMismatch(format!(
            "{:?} vs {:?}",
            sig.grid, idl.grid
        )));
    }
    Ok(DensityGrid {
        values: sig.values.iter().zip(&idl.values).map(|(a, b)| a + b).collect(),
        grid: sig.grid,
        normalization: Normalization::Raw,
        cell_area: sig.cell_area,
    })
}

/// Signal density given an idler emitted along `(theta_i, phi_i)`.
pub fn conditional_signal_density(
    job: &SimulationJob,
    theta_i: f64,
    phi_i: f64,
    opts: &RunOptions,
) -> Result<DensityGrid> {
    job.validate()?;
    opts.check_budget(job.grid.len() as f64 * job.pump.m_phi as f64)?;
    let p = &job.process;
    let k_i = job.crystal.wave_vector(
        p.lambda_i,
        &direction_from_angles(DirectionAngles::new(theta_i, phi_i)),
        p.idler_pol,
    )?;
    let signal = grid_wave_vectors(&job.crystal, p, Role::Signal, &job.grid)?;
    let pump = PumpTable::new(&job.pump, &job.crystal)?;
    let threshold = job.prune_threshold;
    let w2q = 0.25 * pump.w_p * pump.w_p;
    let m = pump.m_phi() as f64;

    let values = opts.pool()?.install(|| {
        signal
            .par_iter()
            .map(|ks| {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in &pump.constituents {
                    if threshold > f64::NEG_INFINITY {
                        let d = ks + k_i - c.k;
                        let (a, b) = (c.frame.x.dot(&d), c.frame.y.dot(&d));
                        if should_prune(-w2q * (a * a + b * b), threshold) {
                            continue;
                        }
                    }
                    acc += pump.constituent_amplitude(c, ks, &k_i);
                }
                PairAmplitude(acc / m).probability()
            })
            .collect::<Vec<f64>>()
    });

    Ok(DensityGrid {
        values,
        grid: job.grid,
        normalization: Normalization::Raw,
        cell_area: job.grid.cell_area(),
    }
    .normalized())
}
