//! Experiment harness: configure a domain, solve, and write CSV reports.
//!
//! Configuration files are line oriented `key = value` text with `#`
//! comments. Keys: `domain`, `domain_file`, `mode`, `degree`, `level`,
//! `young`, `poisson`, `force` (three numbers), `tol`, `beta`, `gamma`,
//! `delta`, `alpha`, `eps0`, `eps_min`, `eps_prec`, `max_iter`, `stop`,
//! `out`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{assemble, constant_field, BlockSystem, ProblemSetup};
use crate::error::{Error, Result};
use crate::geometry::{builtin_domain, parse_domain, Domain, Mode};
use crate::precond::{InverseKind, Preconditioner};
use crate::solver::{tpcg, SolveReport, SolverParams, StopRule};

/// Where the geometry comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainSource {
    Builtin(String),
    File(PathBuf),
}

impl DomainSource {
    pub fn load(&self) -> Result<Domain> {
        match self {
            DomainSource::Builtin(name) => builtin_domain(name),
            DomainSource::File(path) => parse_domain(&fs::read_to_string(path)?),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DomainSource::Builtin(name) => name.clone(),
            DomainSource::File(path) => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        }
    }
}

/// One experiment.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub domain: DomainSource,
    pub mode: Mode,
    pub degree: usize,
    /// `n_el = 2^level`.
    pub level: u32,
    /// Overrides the Young's modulus of every patch.
    pub young: Option<f64>,
    /// Overrides the Poisson ratio of every patch.
    pub poisson: Option<f64>,
    /// Body force; `None` keeps the mode's default.
    pub force: Option<[f64; 3]>,
    pub solver: SolverParams,
    pub eps_prec: f64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain: DomainSource::Builtin("lshape".into()),
            mode: Mode::Elasticity,
            degree: 3,
            level: 3,
            young: None,
            poisson: None,
            force: None,
            solver: SolverParams::default(),
            eps_prec: 0.1,
            out: None,
        }
    }
}

fn cfg_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| cfg_err(line, format!("bad value `{v}` for `{key}`")))
}

impl RunConfig {
    pub fn n_el(&self) -> usize {
        1 << self.level
    }

    /// Apply `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            let (k, v) = s.split_once('=').ok_or_else(|| cfg_err(line, format!("expected `key = value`, got `{s}`")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "domain" => self.domain = DomainSource::Builtin(v.to_string()),
                "domain_file" => self.domain = DomainSource::File(PathBuf::from(v)),
                "mode" => self.mode = v.parse().map_err(|_| cfg_err(line, format!("unknown mode `{v}`")))?,
                "degree" => self.degree = num(line, k, v)?,
                "level" => self.level = num(line, k, v)?,
                "young" => self.young = Some(num(line, k, v)?),
                "poisson" => self.poisson = Some(num(line, k, v)?),
                "force" => {
                    let f: Vec<f64> = v.split_whitespace().map(|t| num(line, k, t)).collect::<Result<_>>()?;
                    let f: [f64; 3] = f.try_into().map_err(|_| cfg_err(line, "`force` needs three numbers"))?;
                    self.force = Some(f);
                }
                "tol" => self.solver.tol = num(line, k, v)?,
                "beta" => self.solver.beta = num(line, k, v)?,
                "gamma" => self.solver.gamma = num(line, k, v)?,
                "delta" => self.solver.delta = num(line, k, v)?,
                "alpha" => self.solver.alpha = num(line, k, v)?,
                "eps0" => self.solver.eps0 = num(line, k, v)?,
                "eps_min" => self.solver.eps_min = Some(num(line, k, v)?),
                "eps_prec" => self.eps_prec = num(line, k, v)?,
                "max_iter" => self.solver.max_iter = num(line, k, v)?,
                "stop" => self.solver.stop = v.parse::<StopRule>().map_err(|_| cfg_err(line, format!("unknown stopping rule `{v}`")))?,
                "out" => self.out = Some(PathBuf::from(v)),
                _ => return Err(cfg_err(line, format!("unknown key `{k}`"))),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(nu) = self.poisson {
            if !(nu > -1.0 && nu < 0.5) {
                return Err(Error::Config(format!("Poisson ratio {nu} must lie in (-1, 0.5)")));
            }
        }
        if let Some(e) = self.young {
            if e <= 0.0 {
                return Err(Error::Config(format!("Young's modulus {e} must be positive")));
            }
        }
        if self.degree < 1 {
            return Err(Error::Config("degree must be at least 1".into()));
        }
        if !(self.eps_prec > 0.0 && self.eps_prec < 1.0) {
            return Err(Error::Config(format!("eps_prec {} must lie in (0, 1)", self.eps_prec)));
        }
        let s = &self.solver;
        if s.tol <= 0.0 || s.beta < 0.0 || s.gamma < 0.0 || s.delta < 0.0 || !(s.alpha > 0.0 && s.alpha < 1.0) || s.eps0 < 0.0 {
            return Err(Error::Config("solver parameters out of range".into()));
        }
        Ok(())
    }

    /// Domain with material overrides applied.
    pub fn domain(&self) -> Result<Domain> {
        let mut d = self.domain.load()?;
        for p in &mut d.patches {
            if let Some(e) = self.young {
                p.material.young = e;
            }
            if let Some(nu) = self.poisson {
                p.material.poisson = nu;
            }
        }
        Ok(d)
    }

    pub fn setup(&self) -> ProblemSetup {
        let mut s = match self.mode {
            Mode::Elasticity => ProblemSetup::elasticity(self.degree, self.n_el()),
            Mode::Scalar => ProblemSetup::scalar(self.degree, self.n_el()),
        };
        if let Some(f) = self.force {
            s.force = constant_field(f);
        }
        s
    }
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub label: String,
    pub mode: Mode,
    pub degree: usize,
    pub n_el: usize,
    pub ndof: usize,
    pub report: SolveReport,
    /// `(i, j, k, ℓ, ranks)` of every stored matrix block.
    pub matrix_ranks: Vec<(usize, usize, usize, usize, [usize; 3])>,
    pub assembly_seconds: f64,
    pub precond_seconds: f64,
    pub precond_terms: usize,
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Elasticity => "elasticity",
        Mode::Scalar => "scalar",
    }
}

/// Assemble, precondition and solve; write reports if `out` is set.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    run_with_log(cfg, |_| {})
}

/// As [`run`], calling `log` after every iteration.
pub fn run_with_log(cfg: &RunConfig, log: impl FnMut(&crate::solver::IterationLog)) -> Result<RunOutcome> {
    cfg.validate()?;
    let domain = cfg.domain()?;
    let sys: BlockSystem = assemble(&domain, &cfg.setup())?;
    let t = Instant::now();
    let prec = Preconditioner::build(&sys, InverseKind::ExpSum { eps_prec: cfg.eps_prec })?;
    let precond_seconds = t.elapsed().as_secs_f64();
    let (_, report) = tpcg(&sys, &prec, &cfg.solver, None, log)?;
    let out = RunOutcome {
        label: cfg.domain.label(),
        mode: cfg.mode,
        degree: cfg.degree,
        n_el: cfg.n_el(),
        ndof: sys.ndof(),
        matrix_ranks: sys.rank_report(),
        assembly_seconds: sys.timings.total(),
        precond_seconds,
        precond_terms: prec.max_terms(),
        report,
    };
    if let Some(dir) = &cfg.out {
        write_run(dir, &out)?;
    }
    Ok(out)
}

fn key(o: &RunOutcome) -> String {
    format!("{},{},{},{}", o.label, mode_name(o.mode), o.degree, o.n_el)
}

pub const ITERATIONS_HEADER: &str = "domain,mode,degree,n_el,iterations,converged";
pub const RANKS_HEADER: &str = "domain,mode,degree,n_el,max_rank";
pub const MEMORY_HEADER: &str = "domain,mode,degree,n_el,memory_percent,memory_percent_full";
pub const LOG_HEADER: &str = "iter,residual,max_rank_u,eps,attempts,max_rank_p,eta,seconds";
pub const MATRIX_RANKS_HEADER: &str = "i,j,k,l,r1,r2,r3";

fn write_run(dir: &Path, o: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let r = &o.report;
    fs::write(dir.join("iterations.csv"), format!("{ITERATIONS_HEADER}\n{},{},{}\n", key(o), r.iterations, r.converged))?;
    fs::write(dir.join("ranks.csv"), format!("{RANKS_HEADER}\n{},{}\n", key(o), r.max_rank))?;
    fs::write(dir.join("memory.csv"), format!("{MEMORY_HEADER}\n{},{:.6},{:.6}\n", key(o), r.memory.percent, r.memory.percent_full))?;
    let mut log = format!("{LOG_HEADER}\n");
    for l in &r.history {
        writeln!(log, "{},{:e},{},{:e},{},{},{:e},{:.3}", l.iter, l.residual, l.max_rank_u, l.eps, l.attempts, l.max_rank_p, l.eta, l.seconds).unwrap();
    }
    fs::write(dir.join("log.csv"), log)?;
    let mut mr = format!("{MATRIX_RANKS_HEADER}\n");
    for (i, j, k, l, q) in &o.matrix_ranks {
        writeln!(mr, "{i},{j},{k},{l},{},{},{}", q[0], q[1], q[2]).unwrap();
    }
    fs::write(dir.join("matrix_ranks.csv"), mr)?;
    Ok(())
}

/// Result of one point of a sweep.
pub type SweepRow = ((usize, u32), Result<RunOutcome>);

/// Run every `(degree, level)` pair with at most `jobs` runs at a time.
pub fn sweep(base: &RunConfig, degrees: &[usize], levels: &[u32], jobs: usize) -> Result<Vec<SweepRow>> {
    let pairs: Vec<(usize, u32)> = degrees.iter().flat_map(|&p| levels.iter().map(move |&l| (p, l))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(p, l)| {
                let cfg = RunConfig { degree: p, level: l, out: None, ..base.clone() };
                ((p, l), run(&cfg))
            })
            .collect()
    });
    Ok(rows)
}

/// Aggregated sweep tables: `(file name, contents)`. Failed runs appear as
/// rows whose value is `error`.
pub fn sweep_tables(base: &RunConfig, degrees: &[usize], levels: &[u32], rows: &[SweepRow]) -> Vec<(String, String)> {
    let label = base.domain.label();
    let mode = mode_name(base.mode);
    let mut it = format!("{ITERATIONS_HEADER}\n");
    let mut rk = format!("{RANKS_HEADER}\n");
    let mut mem = format!("{MEMORY_HEADER}\n");
    for ((p, l), res) in rows {
        let head = format!("{label},{mode},{p},{}", 1usize << l);
        match res {
            Ok(o) => {
                let r = &o.report;
                writeln!(it, "{head},{},{}", r.iterations, r.converged).unwrap();
                writeln!(rk, "{head},{}", r.max_rank).unwrap();
                writeln!(mem, "{head},{:.6},{:.6}", r.memory.percent, r.memory.percent_full).unwrap();
            }
            Err(_) => {
                writeln!(it, "{head},error,false").unwrap();
                writeln!(rk, "{head},error").unwrap();
                writeln!(mem, "{head},error,error").unwrap();
            }
        }
    }
    // Table layout: one row per degree, one column per level.
    let mut table = String::from("degree");
    for l in levels {
        write!(table, ",n_el={}", 1usize << l).unwrap();
    }
    table.push('\n');
    for p in degrees {
        write!(table, "{p}").unwrap();
        for l in levels {
            let cell = rows.iter().find(|((q, m), _)| q == p && m == l).map(|(_, r)| match r {
                Ok(o) => o.report.iterations.to_string(),
                Err(_) => "error".into(),
            });
            write!(table, ",{}", cell.unwrap_or_default()).unwrap();
        }
        table.push('\n');
    }
    vec![
        ("iterations.csv".into(), it),
        ("ranks.csv".into(), rk),
        ("memory.csv".into(), mem),
        ("iterations_table.csv".into(), table),
    ]
}

/// Write the sweep tables into `dir`.
pub fn write_sweep(dir: &Path, tables: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in tables {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_overrides_defaults() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\ndomain = cross3d\nmode = scalar\ndegree = 2 # trailing\nlevel=4\nforce = 0 0 -2\ntol = 1e-8\nstop = absolute\n").unwrap();
        assert_eq!(c.domain, DomainSource::Builtin("cross3d".into()));
        assert_eq!(c.mode, Mode::Scalar);
        assert_eq!((c.degree, c.n_el()), (2, 16));
        assert_eq!(c.force, Some([0.0, 0.0, -2.0]));
        assert_eq!(c.solver.tol, 1e-8);
        assert_eq!(c.solver.stop, StopRule::Absolute);
        let e = c.apply_text("\n\ncolour = red").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn invalid_material_is_rejected() {
        let c = RunConfig { poisson: Some(0.5), ..RunConfig::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { young: Some(-1.0), ..RunConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_sweep_has_headers_only() {
        let base = RunConfig::default();
        let rows = sweep(&base, &[], &[5, 6], 1).unwrap();
        let t = sweep_tables(&base, &[], &[5, 6], &rows);
        assert_eq!(t[0].1, format!("{ITERATIONS_HEADER}\n"));
        assert_eq!(t[3].1, "degree,n_el=32,n_el=64\n");
    }

    #[test]
    fn sweep_covers_the_product_and_is_deterministic() {
        let base = RunConfig { mode: Mode::Scalar, ..RunConfig::default() };
        let a = sweep_tables(&base, &[1, 2], &[1, 2, 3], &sweep(&base, &[1, 2], &[1, 2, 3], 2).unwrap());
        let b = sweep_tables(&base, &[1, 2], &[1, 2, 3], &sweep(&base, &[1, 2], &[1, 2, 3], 1).unwrap());
        assert_eq!(a, b);
        assert_eq!(a[0].1.lines().count(), 7);
    }
}
