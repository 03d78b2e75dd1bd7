//! Command-line front end. Every subcommand writes a JSON report plus CSV
//! tables and SVG plots into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::dnmap::{assemble_dn, star_norm, DNOperator, SobolevScale, StarNorm};
use crate::gegenbauer::GegenbauerSpec;
use crate::grid::GridDomain;
use crate::medium::{split_real_imag, verify_ellipticity, AdmissibilityReport, KRanges, ViolationKind};
use crate::plot::{LogLogPlot, Series, Style};
use crate::singular::correction::{correction_w, CorrectionOptions, DecayReport};
use crate::singular::{SingularSolutionSpec, SingularityPoint};
use crate::solver::assemble;
use crate::stability::{geometric_sweep, run_stability_experiment, StabilityReport};
use crate::{Error, Result, C64, VERSION};

#[derive(Debug, Parser)]
#[command(name = "otlab", version, about = "Diffuse optical tomography numerical laboratory")]
pub struct Cli {
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, env = "OTLAB_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON configuration; the bundled default is used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the configuration and report admissibility of the medium.
    Check(Common),
    /// Solve the Dirichlet problem with the configured data.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Points per axis, overriding the configuration.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        no_reaction: bool,
        /// Write the plane `x_AXIS = INDEX * h` as CSV, given as `AXIS:INDEX`.
        #[arg(long, value_name = "AXIS:INDEX")]
        dump_slice: Option<String>,
    },
    /// Assemble (or load) the Dirichlet-to-Neumann map.
    Dn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        save: Option<PathBuf>,
        #[arg(long)]
        load: Option<PathBuf>,
    },
    /// Singular solution and decay of its numerical correction.
    Singular {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m: Option<u32>,
    },
    /// Boundary stability sweep.
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        profile_order: Option<u32>,
        #[arg(long)]
        h: Option<u32>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        eps_start: Option<f64>,
        #[arg(long)]
        eps_count: Option<usize>,
        #[arg(long)]
        k: Option<f64>,
    },
    /// Table of Gegenbauer polynomials with ODE and endpoint checks.
    GegenbauerTable(Common),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit status for an error: 2 for invalid input, 3 for numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. }
        | Error::Expr { .. }
        | Error::Json(_)
        | Error::Format(_)
        | Error::InadmissibleWaveNumber { .. }
        | Error::Smoothness { .. }
        | Error::Shape(_)
        | Error::MemoryBudget { .. } => EXIT_VALIDATION,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Serialize)]
struct Versions {
    otlab: &'static str,
    format: u32,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config_fingerprint: &'a str,
    seed: u64,
    versions: Versions,
    report: T,
}

struct Output {
    dir: PathBuf,
    fingerprint: String,
    seed: u64,
}

impl Output {
    fn new(cfg: &RunConfig, common: &Common) -> Result<Self> {
        let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            fingerprint: cfg.fingerprint(),
            seed: cfg.seed,
        })
    }

    fn header(&self) -> String {
        format!("config_fingerprint={} otlab={VERSION}", self.fingerprint)
    }

    fn json<T: Serialize>(&self, command: &str, report: T) -> Result<PathBuf> {
        let env = Envelope {
            command,
            config_fingerprint: &self.fingerprint,
            seed: self.seed,
            versions: Versions {
                otlab: VERSION,
                format: 1,
            },
            report,
        };
        let path = self.dir.join(format!("{command}.json"));
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    fn csv(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(format!("{name}.csv"));
        fs::write(&path, format!("# {}\n{body}", self.header()))?;
        Ok(path)
    }

    fn svg(&self, name: &str, plot: &LogLogPlot) -> Result<PathBuf> {
        let path = self.dir.join(format!("{name}.svg"));
        let svg = plot.to_svg();
        let svg = svg.replacen('\n', &format!("\n<!-- {} -->\n", self.header()), 1);
        fs::write(&path, svg)?;
        Ok(path)
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        None => Ok(RunConfig::bundled()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config {
                pointer: String::new(),
                message: format!("cannot read {}: {e}", p.display()),
            })?;
            RunConfig::from_json(&text)
        }
    }
}

/// Parse arguments, run inside a dedicated thread pool and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_NUMERICAL;
        }
    };
    match pool.install(|| run(&cli.command)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Execute a subcommand; returns the files written.
pub fn run(cmd: &Command) -> Result<Vec<PathBuf>> {
    match cmd {
        Command::Check(c) => check(c),
        Command::Solve {
            common,
            grid,
            no_reaction,
            dump_slice,
        } => solve(common, *grid, *no_reaction, dump_slice.as_deref()),
        Command::Dn { common, save, load } => dn(common, save.as_deref(), load.as_deref()),
        Command::Singular { common, m } => singular(common, *m),
        Command::Stability {
            common,
            profile_order,
            h,
            alpha,
            eps_start,
            eps_count,
            k,
        } => {
            let mut cfg = load_config(common)?;
            if let Some(v) = profile_order {
                cfg.stability.profile_order = *v;
            }
            if let Some(v) = h {
                cfg.stability.h = *v;
            }
            if let Some(v) = alpha {
                cfg.stability.alpha = *v;
            }
            if let Some(v) = eps_start {
                cfg.stability.eps_start = *v;
            }
            if let Some(v) = eps_count {
                cfg.stability.eps_count = *v;
            }
            if let Some(v) = k {
                cfg.apriori.k = *v;
            }
            cfg.validate()?;
            stability(&cfg, common)
        }
        Command::GegenbauerTable(c) => gegenbauer_table(c),
    }
}

#[derive(Serialize)]
struct CheckReport {
    medium_fingerprint: String,
    admissibility: AdmissibilityReport,
    k_ranges: KRanges,
    k_admissible: bool,
    ellipticity: EllipticitySummary,
}

#[derive(Serialize)]
struct EllipticitySummary {
    kr_lower_stated: f64,
    kr_lower_sharp: f64,
    ki_lower: f64,
    norm_upper: f64,
    c2: f64,
    kr_below_stated: usize,
    kr_below_sharp: usize,
    ki_below: usize,
    norm_above: usize,
}

fn check(common: &Common) -> Result<Vec<PathBuf>> {
    let cfg = load_config(common)?;
    let medium = cfg.medium()?;
    let admissibility = medium.admissibility();
    let k_ranges = cfg.apriori.k_ranges()?;
    let field = split_real_imag(&medium)?;
    let e = verify_ellipticity(&field, &cfg.apriori);
    let report = CheckReport {
        medium_fingerprint: medium.fingerprint(),
        k_admissible: k_ranges.is_admissible(cfg.apriori.k),
        k_ranges,
        ellipticity: EllipticitySummary {
            kr_lower_stated: e.bounds.kr_lower_stated,
            kr_lower_sharp: e.bounds.kr_lower_sharp,
            ki_lower: e.bounds.ki_lower,
            norm_upper: e.bounds.norm_upper,
            c2: e.c2,
            kr_below_stated: e.count(ViolationKind::KrBelowStatedBound),
            kr_below_sharp: e.count(ViolationKind::KrBelowSharpBound),
            ki_below: e.count(ViolationKind::KiBelowBound),
            norm_above: e.count(ViolationKind::NormBound),
        },
        admissibility,
    };
    let out = Output::new(&cfg, common)?;
    let ok = report.admissibility.admissible && report.k_admissible;
    let path = out.json("check", &report)?;
    if !ok {
        return Err(Error::config("/medium", format!("medium or wave number is not admissible, see {}", path.display())));
    }
    Ok(vec![path])
}

#[derive(Serialize)]
struct SolveReport {
    grid: GridDomain,
    include_reaction: bool,
    free_nodes: usize,
    relative_residual: f64,
    max_abs: f64,
}

fn parse_slice(s: &str, m: usize) -> Result<(usize, usize)> {
    let bad = || Error::config("/dump_slice", format!("expected AXIS:INDEX with AXIS < 3 and INDEX < {m}, got {s}"));
    let (a, i) = s.split_once(':').ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let i: usize = i.trim().parse().map_err(|_| bad())?;
    if a > 2 || i >= m {
        return Err(bad());
    }
    Ok((a, i))
}

fn solve(common: &Common, points: Option<usize>, no_reaction: bool, slice: Option<&str>) -> Result<Vec<PathBuf>> {
    let mut cfg = load_config(common)?;
    if let Some(p) = points {
        cfg.grid.points = p;
    }
    if no_reaction {
        cfg.solve.include_reaction = false;
    }
    cfg.validate()?;
    let grid = cfg.grid()?;
    let slice = slice.map(|s| parse_slice(s, grid.m())).transpose()?;
    let medium = cfg.medium_on(grid)?;
    let op = assemble(&medium, cfg.solve.include_reaction)?;
    let g = cfg.solve.boundary.sample(&grid, "/solve/boundary")?;
    let f = cfg.solve.source.sample(&grid, "/solve/source")?;
    let u = op.solve_dirichlet(&g, &f)?;
    let out = Output::new(&cfg, common)?;
    let report = SolveReport {
        grid,
        include_reaction: cfg.solve.include_reaction,
        free_nodes: op.free_nodes().len(),
        relative_residual: op.relative_residual(&u, &f),
        max_abs: u.max_abs(),
    };
    let mut paths = vec![out.json("solve", &report)?];
    if let Some((axis, index)) = slice {
        let mut body = String::from("i,j,x,y,re,im\n");
        let (a1, a2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for i in 0..grid.m() {
            for j in 0..grid.m() {
                let mut ijk = [0; 3];
                ijk[axis] = index;
                ijk[a1] = i;
                ijk[a2] = j;
                let p = grid.index(ijk[0], ijk[1], ijk[2]);
                let x = grid.coords(p);
                let v = u.values[p];
                body.push_str(&format!("{i},{j},{:e},{:e},{:e},{:e}\n", x[a1], x[a2], v.re, v.im));
            }
        }
        paths.push(out.csv("solve_slice", &body)?);
    }
    Ok(paths)
}

#[derive(Serialize)]
struct DnReport {
    size: usize,
    loaded: bool,
    medium_fingerprint: String,
    symmetry_residual: f64,
    max_abs: f64,
    star_norm: StarNorm,
}

fn dn(common: &Common, save: Option<&Path>, load: Option<&Path>) -> Result<Vec<PathBuf>> {
    let cfg = load_config(common)?;
    let medium = cfg.medium()?;
    let op = match load {
        Some(p) => {
            let mut r = std::io::BufReader::new(fs::File::open(p)?);
            let op = DNOperator::read_from(&mut r)?;
            if op.medium_fingerprint != medium.fingerprint() || op.grid != medium.grid {
                return Err(Error::config("/medium", "stored operator was computed for a different medium"));
            }
            op
        }
        None => assemble_dn(&medium)?,
    };
    if let Some(p) = save {
        let mut w = std::io::BufWriter::new(fs::File::create(p)?);
        op.write_to(&mut w)?;
    }
    let scale = SobolevScale::new(medium.grid)?;
    let report = DnReport {
        size: op.size(),
        loaded: load.is_some(),
        medium_fingerprint: op.medium_fingerprint.clone(),
        symmetry_residual: op.symmetry_residual(),
        max_abs: op.max_abs(),
        star_norm: star_norm(&op, &scale, cfg.seed)?,
    };
    let out = Output::new(&cfg, common)?;
    let mut paths = vec![out.json("dn", &report)?];
    if let Some(p) = save {
        paths.push(p.to_path_buf());
    }
    Ok(paths)
}

#[derive(Serialize)]
struct SingularReport {
    m: u32,
    z: [f64; 3],
    r_min: f64,
    r_max: f64,
    include_reaction: bool,
    decay: DecayReport,
}

fn singular(common: &Common, m: Option<u32>) -> Result<Vec<PathBuf>> {
    let cfg = load_config(common)?;
    let medium = cfg.medium()?;
    let grid = medium.grid;
    let sc = &cfg.singular;
    let m = m.unwrap_or(sc.m);
    let node = match sc.z {
        Some(z) => {
            let h = grid.h();
            let idx = |v: f64| ((v / h).round().max(0.0) as usize).min(grid.m() - 1);
            grid.index(idx(z[0]), idx(z[1]), idx(z[2]))
        }
        None => {
            let c = grid.m() / 2;
            grid.index(c, c, c)
        }
    };
    let z = sc.z.unwrap_or(grid.coords(node));
    let at = SingularityPoint::new(z.to_vec(), medium.tensor_inverse_at_point(node))?;
    let spec = SingularSolutionSpec::new(m, at)?;
    let r_min = sc.r_min.unwrap_or(2.0 * grid.h());
    let mut opts = CorrectionOptions::new(r_min, sc.r_max);
    opts.include_reaction = sc.include_reaction;
    let res = correction_w(&medium, &spec, &opts)?;
    let d = res.decay;
    let out = Output::new(&cfg, common)?;
    let mut body = String::from("radius,sup_um,sup_w,sup_r_dw\n");
    for i in 0..d.radii.len() {
        body.push_str(&format!("{:e},{:e},{:e},{:e}\n", d.radii[i], d.sup_um[i], d.sup_w[i], d.sup_r_dw[i]));
    }
    let mut plot = LogLogPlot::new(format!("singular solution m = {m}"), "|x - z|", "shell maximum");
    let pts = |v: &[f64]| d.radii.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    plot.push(Series::new("|u_m|", pts(&d.sup_um), Style::Markers));
    plot.push(Series::new("|w|", pts(&d.sup_w), Style::Markers));
    plot.push(Series::new("|x-z||Dw|", pts(&d.sup_r_dw), Style::Markers));
    if let (Some(&r0), Some(&r1)) = (d.radii.first(), d.radii.last()) {
        if let Some(i) = d.sup_w.iter().rposition(|v| *v > 0.0) {
            let anchor = (d.radii[i], d.sup_w[i]);
            plot.push(Series::guide(format!("slope {:.2}", d.exponent_statement), d.exponent_statement, anchor, r0, r1));
            plot.push(Series::guide(format!("slope {:.2}", d.exponent_proof), d.exponent_proof, anchor, r0, r1));
        }
    }
    let report = SingularReport {
        m,
        z,
        r_min,
        r_max: sc.r_max,
        include_reaction: sc.include_reaction,
        decay: d,
    };
    Ok(vec![out.json("singular", &report)?, out.csv("singular", &body)?, out.svg("singular", &plot)?])
}

fn stability(cfg: &RunConfig, common: &Common) -> Result<Vec<PathBuf>> {
    let medium = cfg.medium()?;
    let st = &cfg.stability;
    let sweep = geometric_sweep(st.eps_start, st.eps_count);
    let report: StabilityReport = run_stability_experiment(&medium, &st.perturbation(), st.h, &sweep, cfg.seed)?;
    let out = Output::new(cfg, common)?;
    let mut plot = LogLogPlot::new(
        format!("boundary stability, profile order {}", st.profile_order),
        "||Lambda_1 - Lambda_2||_*",
        "boundary norm",
    );
    let stars: Vec<f64> = report.rows.iter().map(|r| r.star_norm).collect();
    for j in 0..=st.h as usize {
        let pts: Vec<(f64, f64)> = stars.iter().copied().zip(report.rows.iter().map(|r| r.normal_derivatives[j])).collect();
        let anchor = pts.iter().copied().find(|p| p.1 > 0.0);
        plot.push(Series::new(format!("d^{j} (mu_1 - mu_2)"), pts, Style::Markers));
        if let (Some(a), Some(lo), Some(hi)) = (
            anchor,
            stars.iter().copied().reduce(f64::min),
            stars.iter().copied().reduce(f64::max),
        ) {
            let e = report.predicted[j];
            plot.push(Series::guide(format!("slope {e:.3}"), e, a, lo, hi));
        }
    }
    Ok(vec![
        out.json("stability", &report)?,
        out.csv("stability", &report.to_csv())?,
        out.svg("stability", &plot)?,
    ])
}

#[derive(Serialize)]
struct GegenbauerRow {
    n: u32,
    m: u32,
    endpoint_plus: f64,
    endpoint_minus: f64,
    max_standard_residual: f64,
    max_alternative_residual: f64,
}

fn gegenbauer_table(common: &Common) -> Result<Vec<PathBuf>> {
    let cfg = load_config(common)?;
    let gt = &cfg.gegenbauer_table;
    let mut body = String::from("n,m,t,value,derivative,standard_residual,alternative_residual\n");
    let mut rows = Vec::new();
    for &n in &gt.dimensions {
        for m in 0..=gt.max_degree {
            let g = GegenbauerSpec::new(m, n)?;
            let ends = g.endpoint_values()?;
            let (mut std_max, mut alt_max) = (0.0f64, 0.0f64);
            for i in 0..gt.points {
                let t = -1.0 + 2.0 * i as f64 / (gt.points - 1) as f64;
                let z = C64::new(t, 0.0);
                let r = g.ode_residual(t);
                std_max = std_max.max(r.standard_relative);
                alt_max = alt_max.max(r.alternative_relative);
                body.push_str(&format!(
                    "{n},{m},{t:e},{:e},{:e},{:e},{:e}\n",
                    g.eval(z).re,
                    g.derivative(z).re,
                    r.standard_relative,
                    r.alternative_relative
                ));
            }
            rows.push(GegenbauerRow {
                n,
                m,
                endpoint_plus: ends.plus,
                endpoint_minus: ends.minus,
                max_standard_residual: std_max,
                max_alternative_residual: alt_max,
            });
        }
    }
    let out = Output::new(&cfg, common)?;
    Ok(vec![out.json("gegenbauer-table", &rows)?, out.csv("gegenbauer-table", &body)?])
}
