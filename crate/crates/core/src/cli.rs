//! Command-line front end: argument parsing, run orchestration and file
//! emission.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::amplitude::{ProcessKind, Role};
use crate::analysis::{
    conditional_widths, polarization_spread_estimate, radial_profile, ring_metrics,
    rotational_symmetry_error, slice_profile, RingMetrics, SliceAxis,
};
use crate::config::{DataFormat, Preset, RunConfig, RunConfigFile};
use crate::crystal_optics::{tir_angle, PolarizationClass};
use crate::engine::{
    conditional_signal_density, flux_density, run_marginal, DensityGrid, Progress, RunOptions,
    RunOutcome, DEFAULT_WORK_BUDGET,
};
use crate::error::{Result, SimError};
use crate::io::{
    grid_to_csv, grid_to_pgm, metrics_to_text, read_grid, sha256_hex, write_grid, MetricRecord,
};
use crate::planner::{
    plan_axicon_coupling, refract_at_face, signal_idler_exit_separation, AxiconConfig,
    PlanarInterface, DEFAULT_GLASS_INDEX, REPORT_HEADER,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_PHYSICS: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "supercone", version, about = "Bessel-Gauss pumped SPDC simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the collinear phasematching angle and screen flat-face TIR.
    SolveAngle(RunArgs),
    /// Compute signal, idler and flux marginal densities.
    Simulate(RunArgs),
    /// Signal density for a fixed idler direction, with spot widths.
    Conditional(ConditionalArgs),
    /// Refraction plan for flat and axicon faces.
    Plan(PlanArgs),
    /// Ring metrics of a saved grid.
    Rings(GridFileArgs),
    /// Line or radial profile of a saved grid.
    Profile(ProfileArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Bin,
    Csv,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProcessArg {
    TypeI,
    TypeIi,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML run configuration; built-in Type-II 405 nm defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub process: Option<ProcessArg>,
    #[arg(long)]
    pub pump_nm: Option<f64>,
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub m_phi: Option<usize>,
    #[arg(long, conflicts_with = "solve_theta")]
    pub theta_p_deg: Option<f64>,
    #[arg(long)]
    pub solve_theta: bool,
    #[arg(long)]
    pub budget_override: bool,
    /// Refusal limit on the work estimate (amplitude triples).
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub emit_pgm: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConditionalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub theta_i_deg: Option<f64>,
    #[arg(long, default_value_t = 45.0)]
    pub phi_i_deg: f64,
    /// Saved signal marginal used for the ring; computed when absent.
    #[arg(long)]
    pub marginal: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxiconArg {
    CrystalCut,
    Glass,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value = "crystal-cut")]
    pub axicon: AxiconArg,
    /// Glass index; `bbo` uses the crystal's principal extraordinary index.
    #[arg(long)]
    pub n_glass: Option<String>,
}

#[derive(Debug, Args)]
pub struct GridFileArgs {
    pub grid: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Y0,
    X0,
    Radial,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    pub grid: PathBuf,
    #[arg(long, value_enum, default_value = "y0")]
    pub axis: AxisArg,
}

/// Process exit code for an error.
pub fn exit_code(err: &SimError) -> i32 {
    match err {
        SimError::BudgetExceeded { .. } => EXIT_BUDGET,
        e if e.is_physics() => EXIT_PHYSICS,
        _ => EXIT_CONFIG,
    }
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut file = match &self.config {
            Some(p) => RunConfigFile::load(p)?,
            None => RunConfigFile::default(),
        };
        if let Some(p) = self.process {
            file.process = match p {
                ProcessArg::TypeI => ProcessKind::TypeI,
                ProcessArg::TypeIi => ProcessKind::TypeII,
            };
        }
        if let Some(nm) = self.pump_nm {
            file.pump_wavelength = format!("{nm} nm");
            file.signal_wavelength = None;
        }
        if let Some(p) = self.preset {
            file.preset = Some(match p {
                PresetArg::Desk => Preset::Desk,
                PresetArg::Paper => Preset::Paper,
            });
            file.grid = None;
            file.m_phi = None;
        }
        if let Some(t) = self.theta_p_deg {
            file.theta_p = format!("{t} deg");
        }
        if self.solve_theta {
            file.theta_p = "solve".into();
        }
        if let Some(m) = self.m_phi {
            file.m_phi = Some(m);
        }
        if let Some(f) = self.format {
            file.format = Some(match f {
                FormatArg::Bin => DataFormat::Bin,
                FormatArg::Csv => DataFormat::Csv,
                FormatArg::Both => DataFormat::Both,
            });
        }
        if self.emit_pgm {
            file.emit_pgm = Some(true);
        }
        if let Some(o) = &self.out {
            file.output_dir = Some(o.clone());
        }
        let mut rc = file.resolve()?;
        if let Some(n) = self.grid_n {
            rc.job.grid.n = n;
            rc.job.grid.validate().map_err(|e| SimError::Config(e.to_string()))?;
        }
        Ok(rc)
    }

    fn options(&self) -> RunOptions<'static> {
        RunOptions {
            workers: self.workers,
            budget: self.budget,
            budget_override: self.budget_override,
            ..Default::default()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SolveAngle(a) => cmd_solve_angle(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Conditional(a) => cmd_conditional(&a),
        Command::Plan(a) => cmd_plan(&a),
        Command::Rings(a) => cmd_rings(&a.grid),
        Command::Profile(a) => cmd_profile(&a),
    }
}

fn cmd_solve_angle(args: &RunArgs) -> Result<()> {
    let rc = args.resolve_with_solve()?;
    let job = &rc.job;
    let theta = job.pump.theta_p;
    let tir = tir_angle(&job.crystal, job.process.lambda_p, PolarizationClass::Extraordinary)?;
    println!("process          {}", job.process.kind.as_str());
    println!("pump wavelength  {:.1} nm", job.process.lambda_p * 1e9);
    println!("theta_p          {:.4} deg (internal)", theta.to_degrees());
    match tir {
        Some(t) => {
            println!("pump TIR angle   {:.4} deg (extraordinary, flat face)", t.to_degrees());
            if theta > t {
                println!("warning: theta_p exceeds the TIR angle; the pump cannot enter through a flat face");
            } else {
                let n = job.crystal.index_at_polar(job.process.lambda_p, theta, PolarizationClass::Extraordinary)?;
                let r = refract_at_face(theta, &PlanarInterface::flat_exit(n)?);
                println!(
                    "flat face        feasible, external {:.4} deg",
                    r.external_to_z.unwrap_or(f64::NAN).to_degrees()
                );
            }
        }
        None => println!("pump TIR angle   none"),
    }
    Ok(())
}

impl RunArgs {
    /// As [`RunArgs::resolve`], but solving `θp` unless an angle was given.
    fn resolve_with_solve(&self) -> Result<RunConfig> {
        if self.theta_p_deg.is_some() {
            return self.resolve();
        }
        RunArgs {
            solve_theta: true,
            ..self.clone()
        }
        .resolve()
    }
}

fn progress_printer(p: &Progress) {
    eprintln!(
        "  rows {}/{} ({:.1} rows/s)",
        p.rows_done,
        p.rows_total,
        p.rows_per_sec()
    );
}

/// Files written so far, with checksums for the metadata sidecar.
struct Emitted {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Emitted {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn grid(&mut self, stem: &str, grid: &DensityGrid, rc: &RunConfig) -> Result<()> {
        if rc.format.binary() {
            let name = format!("{stem}.scpm");
            write_grid(&self.dir.join(&name), grid)?;
            let bytes = fs::read(self.dir.join(&name))?;
            self.files.push((name, sha256_hex(&bytes)));
        }
        if rc.format.csv() {
            self.write(&format!("{stem}.csv"), grid_to_csv(grid).as_bytes())?;
        }
        if rc.emit_pgm {
            self.write(&format!("{stem}.pgm"), &grid_to_pgm(grid, None))?;
        }
        Ok(())
    }

    fn metadata(&mut self, rc: &RunConfig, extra: &[(&str, String)]) -> Result<()> {
        let j = &rc.job;
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("software", format!("supercone {}", env!("CARGO_PKG_VERSION")));
        line("material", j.crystal.name.clone());
        line("crystal_length_m", format!("{:e}", j.crystal.length));
        line("process", j.process.kind.as_str().into());
        line("lambda_p_m", format!("{:e}", j.process.lambda_p));
        line("lambda_s_m", format!("{:e}", j.process.lambda_s));
        line("lambda_i_m", format!("{:e}", j.process.lambda_i));
        line("theta_p_rad", format!("{:e}", j.pump.theta_p));
        line("theta_p_solved", rc.theta_solved.to_string());
        line("w_p_m", format!("{:e}", j.pump.w_p));
        line("m_phi", j.pump.m_phi.to_string());
        line("grid_n", j.grid.n.to_string());
        line("half_extent_m", format!("{:e}", j.grid.half_extent));
        line("z_obs_m", format!("{:e}", j.grid.z_obs));
        line("prune_threshold", format!("{:e}", j.prune_threshold));
        line("area_element", format!("{:?}", j.area_element));
        line("normalization_domain", "observation-plane cells".into());
        for (k, v) in extra {
            line(k, v.clone());
        }
        for (name, sum) in &self.files {
            line(&format!("sha256.{name}"), sum.clone());
        }
        self.write("metadata.txt", s.as_bytes())
    }
}

fn ring_records(prefix: &str, rings: &[RingMetrics], out: &mut Vec<MetricRecord>) {
    out.push(MetricRecord::new(format!("{prefix}.ring_count"), rings.len() as f64, "1"));
    for (k, r) in rings.iter().enumerate() {
        out.push(MetricRecord::new(format!("{prefix}.ring{k}.radius"), r.radius, "m"));
        out.push(MetricRecord::new(format!("{prefix}.ring{k}.fwhm"), r.fwhm_thickness, "m"));
        out.push(MetricRecord::new(format!("{prefix}.ring{k}.peak"), r.peak_density, "1/m^2"));
        out.push(MetricRecord::new(
            format!("{prefix}.ring{k}.under_resolved"),
            r.under_resolved as u8 as f64,
            "flag",
        ));
    }
}

fn marginal(rc: &RunConfig, args: &RunArgs, role: Role) -> Result<DensityGrid> {
    let mut opts = args.options();
    let checkpoint = args
        .checkpoint_dir
        .as_ref()
        .map(|d| -> Result<PathBuf> {
            fs::create_dir_all(d)?;
            Ok(d.join(format!("{}.scck", role.as_str())))
        })
        .transpose()?;
    opts.checkpoint_path = checkpoint.clone();
    opts.progress = Some(&progress_printer);
    eprintln!("{} marginal", role.as_str());
    match run_marginal(&rc.job, role, &opts)? {
        RunOutcome::Complete(run) => {
            eprintln!(
                "  done in {:.2} s, {:.4}% of triples pruned",
                run.elapsed.as_secs_f64(),
                100.0 * run.stats.skipped_fraction()
            );
            if let Some(p) = checkpoint {
                let _ = fs::remove_file(p);
            }
            Ok(run.density)
        }
        RunOutcome::Interrupted { completed_rows } => Err(SimError::InvalidParameter(format!(
            "run interrupted after {completed_rows} rows"
        ))),
    }
}

fn print_estimate(rc: &RunConfig, args: &RunArgs) {
    let est = rc.job.work_estimate();
    let budget = args.budget.unwrap_or(DEFAULT_WORK_BUDGET);
    eprintln!(
        "work estimate {est:.3e} triples per marginal (budget {budget:.3e}{})",
        if args.budget_override { ", overridden" } else { "" }
    );
}

fn cmd_simulate(args: &RunArgs) -> Result<()> {
    let rc = args.resolve()?;
    print_estimate(&rc, args);
    let start = Instant::now();
    let sig = marginal(&rc, args, Role::Signal)?;
    let idl = marginal(&rc, args, Role::Idler)?;
    let flux = flux_density(&sig, &idl)?;

    let mut out = Emitted::new(&rc.output_dir)?;
    out.grid("signal", &sig, &rc)?;
    out.grid("idler", &idl, &rc)?;
    out.grid("flux", &flux, &rc)?;

    let mut records = Vec::new();
    for (name, g) in [("signal", &sig), ("idler", &idl), ("flux", &flux)] {
        let rings = ring_metrics(&radial_profile(g));
        ring_records(name, &rings, &mut records);
        records.push(MetricRecord::new(
            format!("{name}.symmetry_error"),
            rotational_symmetry_error(g),
            "1",
        ));
        if name == "flux" {
            if rc.job.process.kind == ProcessKind::TypeII && rings.len() == 3 {
                let j = &rc.job;
                let spread =
                    polarization_spread_estimate(&j.crystal, &j.process, &j.pump, &rings[1], j.grid.z_obs)?;
                records.push(MetricRecord::new("polarization_spread", spread, "rad"));
                println!("polarization spread estimate {:.3} deg", spread.to_degrees());
            }
            for r in &rings {
                println!(
                    "ring r = {:.4} m  fwhm = {:.4} m{}",
                    r.radius,
                    r.fwhm_thickness,
                    if r.under_resolved { "  (under-resolved)" } else { "" }
                );
            }
        }
    }
    out.write("metrics.txt", metrics_to_text(&records).as_bytes())?;
    out.write("config.resolved.toml", rc.to_toml_string().as_bytes())?;
    out.metadata(&rc, &[("runtime_s", format!("{:.3}", start.elapsed().as_secs_f64()))])?;
    println!("wrote {}", rc.output_dir.display());
    Ok(())
}

fn cmd_conditional(args: &ConditionalArgs) -> Result<()> {
    let rc = args.run.resolve()?;
    let theta_i = args
        .theta_i_deg
        .map(f64::to_radians)
        .unwrap_or(rc.job.pump.theta_p);
    let phi_i = args.phi_i_deg.to_radians();
    let start = Instant::now();
    let cond = conditional_signal_density(&rc.job, theta_i, phi_i, &args.run.options())?;

    let sig = match &args.marginal {
        Some(p) => read_grid(p)?,
        None => {
            print_estimate(&rc, &args.run);
            marginal(&rc, &args.run, Role::Signal)?
        }
    };
    let mut out = Emitted::new(&rc.output_dir)?;
    out.grid("conditional", &cond, &rc)?;

    let mut records = vec![
        MetricRecord::new("theta_i", theta_i, "rad"),
        MetricRecord::new("phi_i", phi_i, "rad"),
    ];
    let (px, py) = cond.grid.point(cond.argmax());
    let r_peak = px.hypot(py);
    let rings = ring_metrics(&radial_profile(&sig));
    let ring = rings
        .iter()
        .min_by(|a, b| (a.radius - r_peak).abs().total_cmp(&(b.radius - r_peak).abs()));
    let widths = ring
        .ok_or_else(|| SimError::Domain("no ring in the signal marginal".into()))
        .and_then(|r| conditional_widths(&cond, r).map(|w| (w, r)));
    match widths {
        Ok((w, ring)) => {
            let reliable = w.frac_of_circumference < 1.0 && w.frac_of_ring_thickness < 1.0;
            records.extend([
                MetricRecord::new("ring_radius", ring.radius, "m"),
                MetricRecord::new("ring_fwhm", ring.fwhm_thickness, "m"),
                MetricRecord::new("fwhm_azimuthal", w.fwhm_azimuthal, "m"),
                MetricRecord::new("fwhm_radial", w.fwhm_radial, "m"),
                MetricRecord::new("frac_of_circumference", w.frac_of_circumference, "1"),
                MetricRecord::new("frac_of_ring_thickness", w.frac_of_ring_thickness, "1"),
                MetricRecord::new("widths_reliable", reliable as u8 as f64, "flag"),
            ]);
            println!(
                "peak ({:.4}, {:.4}) m  azimuthal {:.3} mm ({:.4} of circumference)  radial {:.3} mm ({:.3} of ring)",
                w.peak_x,
                w.peak_y,
                w.fwhm_azimuthal * 1e3,
                w.frac_of_circumference,
                w.fwhm_radial * 1e3,
                w.frac_of_ring_thickness
            );
        }
        Err(e) => {
            records.push(MetricRecord::new("widths_reliable", 0.0, "flag"));
            println!("widths unreliable: {e}");
        }
    }
    out.write("metrics.txt", metrics_to_text(&records).as_bytes())?;
    out.write("config.resolved.toml", rc.to_toml_string().as_bytes())?;
    out.metadata(
        &rc,
        &[
            ("theta_i_rad", format!("{theta_i:e}")),
            ("phi_i_rad", format!("{phi_i:e}")),
            ("runtime_s", format!("{:.3}", start.elapsed().as_secs_f64())),
        ],
    )?;
    Ok(())
}

fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let rc = args.run.resolve_with_solve()?;
    let j = &rc.job;
    let theta = j.pump.theta_p;
    let n_glass = match args.n_glass.as_deref() {
        None => DEFAULT_GLASS_INDEX,
        Some("bbo") => j.crystal.n_e(j.process.lambda_p)?,
        Some(v) => v
            .parse()
            .map_err(|_| SimError::Config(format!("bad --n-glass {v:?}")))?,
    };
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "theta_p {:.4} deg, glass index {:.5}", theta.to_degrees(), n_glass)?;
    writeln!(w, "{REPORT_HEADER}")?;
    let n_pump = j.crystal.index_at_polar(j.process.lambda_p, theta, PolarizationClass::Extraordinary)?;
    let flat = refract_at_face(theta, &PlanarInterface::flat_exit(n_pump)?);
    writeln!(w, "{}", flat.labelled("pump", "flat face"))?;
    let config = match args.axicon {
        AxiconArg::CrystalCut => AxiconConfig::CrystalCutAxicon,
        AxiconArg::Glass => AxiconConfig::AffixedGlassAxicons,
    };
    let plan = plan_axicon_coupling(config, &j.crystal, &j.process, theta, n_glass)?;
    for r in &plan {
        writeln!(w, "{r}")?;
    }
    match signal_idler_exit_separation(&j.crystal, &j.process, theta) {
        Ok(s) => writeln!(w, "signal/idler flat-face separation {:.4} deg", s.to_degrees())?,
        Err(e) => writeln!(w, "signal/idler flat-face separation unavailable: {e}")?,
    }
    if let Some(bad) = plan.iter().find(|r| r.tir) {
        writeln!(w, "TIR at {} for {}", bad.face, bad.ray)?;
    }
    Ok(())
}

fn cmd_rings(path: &Path) -> Result<()> {
    let g = read_grid(path)?;
    let rings = ring_metrics(&radial_profile(&g));
    let mut records = Vec::new();
    ring_records("grid", &rings, &mut records);
    records.push(MetricRecord::new(
        "grid.symmetry_error",
        rotational_symmetry_error(&g),
        "1",
    ));
    print!("{}", metrics_to_text(&records));
    Ok(())
}

fn cmd_profile(args: &ProfileArgs) -> Result<()> {
    let g = read_grid(&args.grid)?;
    let p = match args.axis {
        AxisArg::Y0 => slice_profile(&g, SliceAxis::YEqualsZero),
        AxisArg::X0 => slice_profile(&g, SliceAxis::XEqualsZero),
        AxisArg::Radial => radial_profile(&g),
    };
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    writeln!(w, "coord_m,value")?;
    for (c, v) in p.coords.iter().zip(&p.values) {
        writeln!(w, "{c:e},{v:e}")?;
    }
    Ok(())
}
