//! Command-line front end. Every subcommand writes CSV (with a header row)
//! or JSON to stdout, or to `--output` when given.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{Error, Result};
use crate::melnikov::{audit, bound_for, melnikov_zeros, realize_max, MelnikovFunction, DEFAULT_GRID};
use crate::odeharness::{find_limit_cycles, section_range};
use crate::picard_fuchs::pf_check;
use crate::quadrature::{integral_i, integral_j};
use crate::reduction::{parse_twice_i, reduce_integral, IntegralIndex};
use crate::symfield::{basis_family, ect_check_with, wronskian, PreciseElem};
use crate::systems::{make_system, Branch, Perturbation, SystemKind, SystemSpec};

#[derive(Parser, Debug)]
#[command(name = "pfab", version, about = "Abelian integrals and limit-cycle counts for switched quadratic centers")]
struct Cli {
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Describe a system: first integral, energy ranges, centers.
    System(SystemArgs),
    /// Generating integral I_{i,j}(h) (or J) by quadrature.
    Integral(IntegralArgs),
    /// Exact reduction of I_{i,j} to basis integrals.
    Reduce(ReduceArgs),
    /// Picard-Fuchs checks.
    Pf {
        #[command(subcommand)]
        action: PfAction,
    },
    /// Melnikov function of a perturbation.
    Melnikov {
        #[command(subcommand)]
        action: MelnikovAction,
    },
    /// Wronskians of the Chebyshev family.
    Wronskian(WronskianArgs),
    /// Numerical Chebyshev-system evidence on one annulus.
    Ect(EctArgs),
    /// Perturbation whose Melnikov function vanishes at given energies.
    Realize(RealizeArgs),
    /// Simulate the switched flow and detect limit cycles.
    Simulate(SimulateArgs),
    /// Randomized audit of the zero-count ceilings.
    Audit(AuditArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BranchArg {
    Main,
    Negative,
}

impl From<BranchArg> for Branch {
    fn from(b: BranchArg) -> Branch {
        match b {
            BranchArg::Main => Branch::Main,
            BranchArg::Negative => Branch::Negative,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Spacing {
    Linear,
    Log,
}

/// Either explicit energies or a grid.
#[derive(Args, Debug, Clone)]
struct HGrid {
    /// Energy; repeat for several.
    #[arg(long = "h", allow_negative_numbers = true)]
    h: Vec<f64>,
    #[arg(long, allow_negative_numbers = true)]
    h_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    h_max: Option<f64>,
    #[arg(long, default_value_t = 11)]
    count: usize,
    #[arg(long, value_enum, default_value_t = Spacing::Linear)]
    spacing: Spacing,
}

impl HGrid {
    fn points(&self, sys: &SystemSpec) -> Result<Vec<f64>> {
        let mut hs = self.h.clone();
        match (self.h_min, self.h_max) {
            (Some(a), Some(b)) => {
                if self.count < 2 {
                    return Err(Error::InvalidArgument("grid count must be at least 2".into()));
                }
                if !(a < b) {
                    return Err(Error::InvalidArgument(format!("need h-min < h-max, got {a} and {b}")));
                }
                if self.spacing == Spacing::Log && a * b <= 0.0 {
                    return Err(Error::InvalidArgument("log spacing needs h-min and h-max of one sign".into()));
                }
                let n = self.count;
                for i in 0..n {
                    let t = i as f64 / (n - 1) as f64;
                    hs.push(match self.spacing {
                        Spacing::Linear => a + (b - a) * t,
                        Spacing::Log => a.signum() * (a.abs().ln() + (b.abs().ln() - a.abs().ln()) * t).exp(),
                    });
                }
            }
            (None, None) => {}
            _ => return Err(Error::InvalidArgument("give both h-min and h-max".into())),
        }
        if hs.is_empty() {
            return Err(Error::InvalidArgument("no energies given (use --h or --h-min/--h-max)".into()));
        }
        hs.sort_by(f64::total_cmp);
        hs.dedup();
        for &h in &hs {
            sys.annulus_of(h)?;
        }
        Ok(hs)
    }
}

#[derive(Args, Debug)]
struct SystemArgs {
    #[arg(long)]
    system: SystemKind,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Which {
    I,
    J,
}

#[derive(Args, Debug)]
struct IntegralArgs {
    #[arg(long)]
    system: SystemKind,
    /// Integer or half-integer (`1/2`, `1.5`).
    #[arg(long, allow_negative_numbers = true)]
    i: String,
    #[arg(long)]
    j: u32,
    #[arg(long, value_enum, default_value_t = Which::I)]
    which: Which,
    #[command(flatten)]
    grid: HGrid,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    #[arg(long)]
    system: SystemKind,
    #[arg(long, allow_negative_numbers = true)]
    i: String,
    #[arg(long)]
    j: u32,
    /// Print the combination as text instead of JSON.
    #[arg(long)]
    text: bool,
}

#[derive(Subcommand, Debug)]
enum PfAction {
    /// Normalized residuals `|V - A V'| / |V|` on each energy range.
    Check {
        #[arg(long)]
        system: SystemKind,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
}

#[derive(Subcommand, Debug)]
enum MelnikovAction {
    /// Zero reports on every annulus, as JSON.
    Zeros {
        #[arg(long)]
        system: SystemKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
    },
    /// Values of `M(h)` as CSV.
    Eval {
        #[arg(long)]
        system: SystemKind,
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        grid: HGrid,
    },
}

#[derive(Args, Debug)]
struct WronskianArgs {
    #[arg(long)]
    system: SystemKind,
    /// Order; all orders up to the family size when omitted.
    #[arg(long)]
    k: Option<usize>,
    /// Annulus, when no energy is given.
    #[arg(long, value_enum)]
    branch: Option<BranchArg>,
    /// Print the closed form instead of values.
    #[arg(long)]
    symbolic: bool,
    #[command(flatten)]
    grid: HGrid,
}

#[derive(Args, Debug)]
struct EctArgs {
    #[arg(long)]
    system: SystemKind,
    #[arg(long, value_enum, default_value_t = BranchArg::Main)]
    branch: BranchArg,
    #[arg(long, default_value_t = 4096)]
    samples: usize,
    /// Truncation radius for unbounded ranges (estimated when omitted).
    #[arg(long)]
    radius: Option<f64>,
}

#[derive(Args, Debug)]
struct RealizeArgs {
    #[arg(long)]
    system: SystemKind,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    targets: Vec<f64>,
    /// Emit the k-vector and zero report alongside the perturbation.
    #[arg(long)]
    report: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    system: SystemKind,
    #[arg(long, allow_negative_numbers = true)]
    eps: f64,
    #[arg(long)]
    config: PathBuf,
    /// Energy range scanned on the section.
    #[arg(long, allow_negative_numbers = true)]
    h_min: f64,
    #[arg(long, allow_negative_numbers = true)]
    h_max: f64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Where to write the JSON cycle summary (stderr when omitted).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    system: SystemKind,
    /// Degrees to audit, e.g. `0,1,2`.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
    n: Vec<u32>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    /// Restrict to smooth (`true`) or discontinuous (`false`) draws.
    #[arg(long)]
    smooth: Option<bool>,
}

/// Decimal with 17 significant digits, positional when the exponent is
/// moderate.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..17).contains(&e) {
        let prec = (16 - e).max(0) as usize;
        let s = format!("{x:.prec$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.16e}")
    }
}

fn read_pert(path: &PathBuf) -> Result<Perturbation> {
    Perturbation::from_json_str(&std::fs::read_to_string(path)?)
}

fn index(i: &str, j: u32) -> Result<IntegralIndex> {
    Ok(IntegralIndex::half(parse_twice_i(i)?, j))
}

fn pretty(v: &serde_json::Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn execute(cmd: Command) -> Result<String> {
    let mut out = String::new();
    match cmd {
        Command::System(a) => {
            let sys = make_system(a.system);
            let sigma: Vec<_> = sys
                .sigma
                .iter()
                .map(|s| json!({"branch": s.branch.to_string(), "lo": s.lo, "hi": s.hi, "center_h": s.center_h, "center_x": s.center_x}))
                .collect();
            out = pretty(&json!({
                "system": sys.kind.name(),
                "k": sys.k.to_string(),
                "lambda0": sys.lambda0.to_string(),
                "lambda1": sys.lambda1.to_string(),
                "lambda2": sys.lambda2.to_string(),
                "integrating_factor_exponent": sys.mu_exponent.to_string(),
                "first_integral": "x^(-k) (y^2/2 + lambda2 x^2 + lambda1 x + lambda0)",
                "sigma": sigma,
            }))?;
        }
        Command::Integral(a) => {
            let sys = make_system(a.system);
            let idx = index(&a.i, a.j)?;
            let hs = a.grid.points(&sys)?;
            let eval = |h: f64| match a.which {
                Which::I => integral_i(&sys, h, idx),
                Which::J => integral_j(&sys, h, idx),
            };
            if hs.len() == 1 && a.grid.h_min.is_none() {
                writeln!(out, "{}", fmt17(eval(hs[0])?)).ok();
            } else {
                out.push_str("h,value\n");
                for h in hs {
                    writeln!(out, "{},{}", fmt17(h), fmt17(eval(h)?)).ok();
                }
            }
        }
        Command::Reduce(a) => {
            let sys = make_system(a.system);
            let combo = reduce_integral(&sys, index(&a.i, a.j)?)?;
            out = if a.text { format!("{combo}\n") } else { pretty(&combo.to_json())? };
        }
        Command::Pf {
            action: PfAction::Check { system, count },
        } => {
            let sys = make_system(system);
            out.push_str("h,residual\n");
            for row in pf_check(&sys, count)? {
                writeln!(out, "{},{}", fmt17(row.h), fmt17(row.residual)).ok();
            }
        }
        Command::Melnikov { action } => match action {
            MelnikovAction::Zeros { system, config, grid } => {
                let sys = make_system(system);
                let pert = read_pert(&config)?;
                let reports = melnikov_zeros(&sys, &pert, grid)?;
                let zero = reports.iter().all(|r| r.identically_zero);
                let status = if zero {
                    "identically zero".to_string()
                } else {
                    format!("{} simple zeros", reports.iter().map(|r| r.count).sum::<usize>())
                };
                out = pretty(&json!({
                    "system": system.name(),
                    "n": pert.n,
                    "smooth": pert.is_smooth(),
                    "bound": bound_for(system, pert.n as i64, pert.is_smooth())?,
                    "status": status,
                    "reports": reports,
                }))?;
            }
            MelnikovAction::Eval { system, config, grid } => {
                let sys = make_system(system);
                let m = MelnikovFunction::new(&sys, &read_pert(&config)?)?;
                out.push_str("h,M\n");
                for h in grid.points(&sys)? {
                    writeln!(out, "{},{}", fmt17(h), fmt17(m.evaluate(h))).ok();
                }
            }
        },
        Command::Wronskian(a) => {
            let sys = make_system(a.system);
            let hs = if a.symbolic && a.grid.h.is_empty() && a.grid.h_min.is_none() {
                Vec::new()
            } else {
                a.grid.points(&sys)?
            };
            let branch = match (a.branch, hs.first()) {
                (Some(b), _) => b.into(),
                (None, Some(&h)) => sys.annulus_of(h)?.branch,
                (None, None) => Branch::Main,
            };
            let fam = basis_family(sys.kind, branch);
            let orders: Vec<usize> = match a.k {
                Some(k) if k >= 1 && k <= fam.len() => vec![k],
                Some(k) => {
                    return Err(Error::InvalidArgument(format!(
                        "order {k} outside 1..={} for {}",
                        fam.len(),
                        sys.kind
                    )))
                }
                None => (1..=fam.len()).collect(),
            };
            if a.symbolic {
                for k in orders {
                    writeln!(out, "W{k} = {}", wronskian(&fam, k)).ok();
                }
            } else {
                out.push_str("k,h,W\n");
                for k in orders {
                    let w = PreciseElem::new(&wronskian(&fam, k));
                    for &h in &hs {
                        if sys.annulus_of(h)?.branch != branch {
                            return Err(Error::InvalidArgument(format!("h = {h} is not on the {branch} annulus")));
                        }
                        writeln!(out, "{k},{},{}", fmt17(h), fmt17(w.evaluate(h).value)).ok();
                    }
                }
            }
        }
        Command::Ect(a) => {
            let sys = make_system(a.system);
            let ann = sys.annulus(a.branch.into())?;
            let fam = basis_family(sys.kind, ann.branch);
            let rep = ect_check_with(&fam, (ann.lo, ann.hi), a.samples, a.radius);
            out = pretty(&serde_json::to_value(&rep)?)?;
        }
        Command::Realize(a) => {
            let sys = make_system(a.system);
            let r = realize_max(&sys, &a.targets)?;
            out = if a.report {
                pretty(&serde_json::to_value(&r)?)?
            } else {
                r.perturbation.to_json_string() + "\n"
            };
        }
        Command::Simulate(a) => {
            let sys = make_system(a.system);
            let pert = read_pert(&a.config)?;
            let range = section_range(&sys, a.h_min, a.h_max)?;
            let scan = find_limit_cycles(&sys, &pert, a.eps, range, a.samples)?;
            out.push_str("x0,x_ret,displacement,h0\n");
            for s in &scan.samples {
                writeln!(
                    out,
                    "{},{},{},{}",
                    fmt17(s.x0),
                    fmt17(s.x_ret),
                    fmt17(s.displacement),
                    fmt17(s.h0)
                )
                .ok();
            }
            let summary = pretty(&json!({
                "system": sys.kind.name(),
                "eps": a.eps,
                "x_range": [range.0, range.1],
                "degenerate": scan.degenerate,
                "cycles": scan.cycles,
            }))?;
            match a.summary {
                Some(p) => std::fs::write(p, summary)?,
                None => eprint!("{summary}"),
            }
        }
        Command::Audit(a) => {
            let sys = make_system(a.system);
            let smooth: Vec<bool> = match a.smooth {
                Some(s) => vec![s],
                None => vec![false, true],
            };
            out.push_str("system,n,smooth,trials,bound,max_count,violations,smooth_residual\n");
            for &n in &a.n {
                for &s in &smooth {
                    let row = audit(&sys, n, s, a.trials, a.seed, a.grid)?;
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        row.system.name(),
                        row.n,
                        row.smooth,
                        row.trials,
                        row.bound,
                        row.max_count,
                        row.violations,
                        row.smooth_residual.map(fmt17).unwrap_or_default()
                    )
                    .ok();
                }
            }
        }
    }
    Ok(out)
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 for usage and domain errors, 2 for
/// numerical failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return code;
        }
    };
    let output = cli.output.clone();
    match execute(cli.command).and_then(|text| match &output {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fmt17;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(4.0 * 2f64.sqrt()), "5.6568542494923806");
        assert_eq!(fmt17(0.25), "0.25");
        assert_eq!(fmt17(1e-20), "9.9999999999999995e-21");
        assert_eq!(fmt17(-3.0), "-3");
        assert_eq!(fmt17(0.0), "0");
    }
}
