use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lrmp::bench::{run_with_log, sweep, sweep_tables, write_sweep, DomainSource, RunConfig};
use lrmp::solver::StopRule;
use lrmp::verify::{convergence_study, empirical_orders, kernel_check, matrix_error_check};

#[derive(Parser)]
#[command(name = "lrmp", about = "Low-rank multipatch isogeometric elasticity solver", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one problem and write its reports.
    Run(Common),
    /// Solve every (degree, level) pair and write aggregated tables.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma separated degrees.
        #[arg(long, value_delimiter = ',', default_value = "3")]
        degrees: Vec<usize>,
        /// Comma separated levels (n_el = 2^level).
        #[arg(long, value_delimiter = ',', default_value = "3")]
        levels: Vec<u32>,
        /// Runs executed at the same time.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Matrix error, kernel and convergence checks.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Check::All)]
        check: Check,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Check {
    MatrixError,
    Kernel,
    Convergence,
    All,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin domain: lshape, cross3d, thick_square, thick_ring.
    #[arg(long)]
    domain: Option<String>,
    /// Domain description file.
    #[arg(long, conflicts_with = "domain")]
    domain_file: Option<PathBuf>,
    /// elasticity or scalar.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    /// n_el = 2^level.
    #[arg(long)]
    level: Option<u32>,
    #[arg(long)]
    young: Option<f64>,
    #[arg(long)]
    poisson: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    eps_min: Option<f64>,
    #[arg(long)]
    eps_prec: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// absolute or relative.
    #[arg(long)]
    stop: Option<String>,
    /// Output directory for CSV reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> lrmp::Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            c.apply_text(&std::fs::read_to_string(path)?)?;
        }
        if let Some(d) = &self.domain {
            c.domain = DomainSource::Builtin(d.clone());
        }
        if let Some(f) = &self.domain_file {
            c.domain = DomainSource::File(f.clone());
        }
        if let Some(m) = &self.mode {
            c.mode = m.parse()?;
        }
        if let Some(s) = &self.stop {
            c.solver.stop = s.parse::<StopRule>()?;
        }
        c.degree = self.degree.unwrap_or(c.degree);
        c.level = self.level.unwrap_or(c.level);
        c.young = self.young.or(c.young);
        c.poisson = self.poisson.or(c.poisson);
        let s = &mut c.solver;
        s.tol = self.tol.unwrap_or(s.tol);
        s.beta = self.beta.unwrap_or(s.beta);
        s.gamma = self.gamma.unwrap_or(s.gamma);
        s.delta = self.delta.unwrap_or(s.delta);
        s.alpha = self.alpha.unwrap_or(s.alpha);
        s.eps0 = self.eps0.unwrap_or(s.eps0);
        s.eps_min = self.eps_min.or(s.eps_min);
        s.max_iter = self.max_iter.unwrap_or(s.max_iter);
        c.eps_prec = self.eps_prec.unwrap_or(c.eps_prec);
        c.out = self.out.clone().or(c.out);
        c.validate()?;
        Ok(c)
    }
}

fn run(common: &Common) -> lrmp::Result<()> {
    let cfg = common.config()?;
    println!("iter,residual,max_rank,eps");
    let o = run_with_log(&cfg, |l| println!("{},{:e},{},{:e}", l.iter, l.residual, l.max_rank_u, l.eps))?;
    let r = &o.report;
    eprintln!(
        "{} {:?} p={} n_el={} dofs={}: {} iterations (converged {}), residual {:.3e}, max rank {}, memory {:.3}%",
        o.label, o.mode, o.degree, o.n_el, o.ndof, r.iterations, r.converged, r.final_residual, r.max_rank, r.memory.percent
    );
    Ok(())
}

fn run_sweep(common: &Common, degrees: &[usize], levels: &[u32], jobs: usize) -> lrmp::Result<()> {
    let cfg = common.config()?;
    let rows = sweep(&cfg, degrees, levels, jobs)?;
    let tables = sweep_tables(&cfg, degrees, levels, &rows);
    for ((p, l), r) in &rows {
        if let Err(e) = r {
            eprintln!("p={p} level={l}: {e}");
        }
    }
    match &cfg.out {
        Some(dir) => write_sweep(dir, &tables)?,
        None => print!("{}", tables[0].1),
    }
    Ok(())
}

fn verify(common: &Common, check: Check) -> lrmp::Result<()> {
    let cfg = common.config()?;
    let domain = cfg.domain()?;
    let setup = cfg.setup();
    if matches!(check, Check::MatrixError | Check::All) {
        let r = matrix_error_check(&domain, &setup)?;
        println!(
            "matrix error: {:.3e} (zeta {:.2e}, lambda_min {:.3e}, bound {:.3e}, holds {})",
            r.rel_error, r.zeta, r.lambda_min, r.bound, r.bound_holds()
        );
    }
    if matches!(check, Check::Kernel | Check::All) {
        let r = kernel_check(&domain, &setup)?;
        println!(
            "kernel: dim ker A = {}, dim ker Ã = {}, range residual {:.2e}",
            r.kernel_dim_exact.unwrap_or(0),
            r.kernel_dim_approx.unwrap_or(0),
            r.range_residual.unwrap_or(0.0)
        );
    }
    if matches!(check, Check::Convergence | Check::All) {
        let rows = convergence_study(&[cfg.degree], &[cfg.level.saturating_sub(1).max(1), cfg.level.max(2)], 1e-10)?;
        println!("degree,n_el,iterations,l2,h1");
        for r in &rows {
            println!("{},{},{},{:e},{:e}", r.degree, r.n_el, r.iterations, r.l2, r.h1);
        }
        for (p, l, a, b) in empirical_orders(&rows) {
            println!("orders p={p} level={l}: L2 {a:.2}, H1 {b:.2}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run(c) => run(c),
        Cmd::Sweep { common, degrees, levels, jobs } => run_sweep(common, degrees, levels, *jobs),
        Cmd::Verify { common, check } => verify(common, *check),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
