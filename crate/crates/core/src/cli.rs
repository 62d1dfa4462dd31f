//! The `kam` experiment runner.
//!
//! Every subcommand writes `transcript.csv` and `summary.txt` into the output
//! directory (`--out`, else `$KAM_OUT_DIR`, else `./kam-out`) and exits with
//! 0 when every checked estimate holds, 1 when one fails, 2 on usage errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::arnold::{bruno_sum, constant_arnold, TailModel, TamedSequence};
use crate::error::{KamError, Result};
use crate::instances::siegel::{divisor_table, siegel_run, SiegelConfig, SiegelProblem, GOLDEN, SILVER};
use crate::instances::shift_exp_demo;
use crate::mag::{Mag, Scale};
use crate::operators::ScaledOperator;
use crate::product::{product_apply, BudgetStatus};
use crate::schedule::{build_schedule, Exponents, ScheduleParams};
use crate::spaces::{CoeffSeries, Level, SpaceSpec};
use crate::transcript::write_transcript;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "KAM_OUT_DIR";

const EXIT_PASS: i32 = 0;
const EXIT_VIOLATED: i32 = 1;
const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "kam", about = "Numerical checks of the abstract KAM iteration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a convergence schedule and check its invariants.
    Schedule(Params),
    /// Compare the exponential of t d/dz with translation on random polynomials.
    ExpDemo(Params),
    /// Assemble an infinite product of a geometric family of vector fields.
    Product(Params),
    /// Linearize f = lambda z + c z^2 and compare with the formal recursion.
    Siegel(Params),
    /// Evaluate the Bruno sum of a sequence.
    Bruno(Params),
}

/// Parameters shared by every subcommand. Flags override the config file.
#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Params {
    /// Flat TOML file of parameters.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for randomized sweeps.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rotation number: `golden`, `silver` or a decimal in (0, 1).
    #[arg(long)]
    pub theta: Option<String>,
    /// Degree cap D.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Number of KAM steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Growth exponent A in (1, 2).
    #[arg(long = "A")]
    #[serde(rename = "A")]
    pub a: Option<f64>,
    /// Tameness constant.
    #[arg(long)]
    pub c_tame: Option<f64>,
    /// Sequence for `bruno`: `e^(A^n)`, `non-tamed`, `ones`, `golden`, `silver` or comma-separated values.
    #[arg(long)]
    pub model: Option<String>,
    /// Sequence for `schedule`, same syntax as `--model`.
    #[arg(long)]
    pub p: Option<String>,
    /// Initial scale.
    #[arg(long)]
    pub s0: Option<f64>,
    /// Schedule horizon.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Shift time for `exp-demo`.
    #[arg(long)]
    pub t: Option<f64>,
    /// Output scale for `exp-demo`, product scale for `product`.
    #[arg(long)]
    pub s: Option<f64>,
    /// Number of random samples for `exp-demo`.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Number of factors for `product`.
    #[arg(long)]
    pub factors: Option<usize>,
    /// Product scale factor lambda.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Leading coefficient: of z^2 in f for `siegel`, of the first field for `product`.
    #[arg(long)]
    pub coeff: Option<f64>,
    /// Rescale beta_0 to this multiple of eps_0.
    #[arg(long)]
    pub inflate_beta: Option<f64>,
    /// Degree through which engine and oracle are compared.
    #[arg(long)]
    pub comparison_degree: Option<usize>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Params {
    /// Fill unset fields from the config file, if one was given.
    fn resolve(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path)?;
        let file: Params = toml::from_str(&text).map_err(|e| KamError::Domain(format!("config {}: {e}", path.display())))?;
        merge_fields!(self, file; out, seed, theta, degree, steps, a, c_tame, model, p, s0, horizon, t, s,
            samples, factors, lambda, coeff, inflate_beta, comparison_degree);
        Ok(self)
    }

    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("kam-out"))
    }

    fn a(&self) -> Result<f64> {
        let a = self.a.unwrap_or(1.5);
        if !(a > 1.0 && a < 2.0) {
            return Err(KamError::Domain(format!("A = {a} must lie in (1, 2)")));
        }
        Ok(a)
    }

    fn degree(&self, default: usize) -> Result<usize> {
        let d = self.degree.unwrap_or(default);
        if d < 8 {
            return Err(KamError::Domain(format!("degree cap {d} must be at least 8")));
        }
        Ok(d)
    }
}

fn unit_scale(name: &str, value: f64) -> Result<f64> {
    if !(value > 0.0 && value < 1.0) {
        return Err(KamError::Domain(format!("{name} = {value} must lie in (0, 1)")));
    }
    Ok(value)
}

pub fn parse_theta(text: &str) -> Result<f64> {
    let theta = match text.trim() {
        "golden" => GOLDEN,
        "silver" => SILVER,
        other => other
            .parse()
            .map_err(|_| KamError::Domain(format!("rotation number {other:?} is neither a name nor a number")))?,
    };
    unit_scale("theta", theta)
}

/// Sequence syntax shared by `--model` and `--p`.
pub fn parse_sequence(text: &str) -> Result<TamedSequence> {
    let text = text.trim();
    let power = text
        .strip_prefix("e^(")
        .or_else(|| text.strip_prefix("exp("))
        .and_then(|rest| rest.strip_suffix("^n)"));
    if let Some(base) = power {
        let a: f64 = base
            .parse()
            .map_err(|_| KamError::Domain(format!("bad base in {text:?}")))?;
        return TamedSequence::exp_power(a);
    }
    match text {
        "ones" => Ok(TamedSequence::ones()),
        // ln p_n = 2^n: the borderline divergent case
        "non-tamed" => TamedSequence::from_ln(vec![0.0], TailModel::Geometric { c: 1.0, base: 2.0 }),
        "golden" | "silver" => Ok(divisor_table(parse_theta(text)?, 64, 12)?.p),
        list => {
            let values: std::result::Result<Vec<f64>, _> = list.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let values = values.map_err(|_| KamError::Domain(format!("unknown sequence {list:?}")))?;
            TamedSequence::new(&values, TailModel::Constant)
        }
    }
}

/// A passing or failing run with its human-readable summary.
struct Report {
    summary: String,
    failures: Vec<String>,
}

fn exit_code(err: &KamError) -> i32 {
    match err {
        KamError::NotTamed(_)
        | KamError::ScheduleInfeasible(_)
        | KamError::Resonance { .. }
        | KamError::InitializationFailed(_)
        | KamError::BudgetExceeded(_) => EXIT_VIOLATED,
        _ => EXIT_USAGE,
    }
}

/// Parse `argv` (program name first), run the experiment and return the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let (name, params) = match cli.command {
        Command::Schedule(p) => ("schedule", p),
        Command::ExpDemo(p) => ("exp-demo", p),
        Command::Product(p) => ("product", p),
        Command::Siegel(p) => ("siegel", p),
        Command::Bruno(p) => ("bruno", p),
    };
    match dispatch(name, params) {
        Ok(report) => {
            print!("{}", report.summary);
            if report.failures.is_empty() {
                EXIT_PASS
            } else {
                for f in &report.failures {
                    eprintln!("violated: {f}");
                }
                EXIT_VIOLATED
            }
        }
        Err(e) => {
            eprintln!("kam {name}: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(name: &str, params: Params) -> Result<Report> {
    let params = params.resolve()?;
    let out = params.out_dir();
    fs::create_dir_all(&out)?;
    let report = match name {
        "schedule" => schedule_cmd(&params, &out)?,
        "exp-demo" => exp_demo_cmd(&params, &out)?,
        "product" => product_cmd(&params, &out)?,
        "siegel" => siegel_cmd(&params, &out)?,
        _ => bruno_cmd(&params, &out)?,
    };
    let mut summary = report.summary.clone();
    let _ = writeln!(summary, "status = {}", if report.failures.is_empty() { "pass" } else { "fail" });
    for f in &report.failures {
        let _ = writeln!(summary, "violated = {f}");
    }
    fs::write(out.join("summary.txt"), &summary)?;
    Ok(Report { summary, ..report })
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| KamError::Io(e.to_string()))?;
    w.write_record(header).map_err(|e| KamError::Io(e.to_string()))?;
    for row in rows {
        w.write_record(row).map_err(|e| KamError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn schedule_cmd(params: &Params, out: &Path) -> Result<Report> {
    let p = parse_sequence(params.p.as_deref().unwrap_or("e^(1.5^n)"))?;
    let s0 = unit_scale("s0", params.s0.unwrap_or(0.5))?;
    let exps = Exponents {
        k: 0,
        l: 0,
        m: 0,
        d: 0.0,
        mu: 3.0,
    };
    let sp = ScheduleParams::new(exps, params.a()?, params.c_tame.unwrap_or(1.0), params.horizon.unwrap_or(40));
    let prepared = sp.prepare(&p)?;
    let sched = build_schedule(&prepared, Scale::new(s0), &sp)?;
    let inv = &sched.invariants;
    let rows: Vec<Vec<String>> = (0..=sp.horizon)
        .map(|n| {
            vec![
                n.to_string(),
                sched.s(n).mag().to_sci(),
                sched.rho(n).to_sci(),
                sched.sigma(n).to_sci(),
                sched.eps(n).to_sci(),
                inv.rho_gap[n].to_string(),
                inv.cutoff[n].to_string(),
                inv.contraction[n].to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("transcript.csv"),
        &["n", "s_n", "rho_n", "sigma_n", "eps_n", "rho_gap", "cutoff", "contraction"],
        &rows,
    )?;
    let mut failures = Vec::new();
    if !inv.s_inf_positive {
        failures.push("s_inf > 0".to_string());
    }
    for (name, flags) in [("rho_gap", &inv.rho_gap), ("cutoff", &inv.cutoff), ("contraction", &inv.contraction)] {
        failures.extend(flags.iter().enumerate().filter(|(_, &ok)| !ok).map(|(n, _)| format!("{name} at n = {n}")));
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "command = schedule");
    let _ = writeln!(summary, "ln_s0 = {}", sched.ln_s0);
    let _ = writeln!(summary, "ln_s_inf = {}", sched.ln_s_inf);
    let _ = writeln!(summary, "ln_c_prime = {}", sched.ln_c_prime);
    let _ = writeln!(
        summary,
        "cutoff_n = {}",
        sched.cutoff_n.map_or("none".to_string(), |n| n.to_string())
    );
    Ok(Report { summary, failures })
}

fn exp_demo_cmd(params: &Params, out: &Path) -> Result<Report> {
    let degree = params.degree(32)?;
    let t_max = params.t.unwrap_or(0.1);
    let s = unit_scale("s", params.s.unwrap_or(0.4))?;
    let samples = params.samples.unwrap_or(100);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.unwrap_or(0));
    let mut rows = Vec::with_capacity(samples);
    let mut worst = 0.0f64;
    for i in 0..samples {
        let coeffs: Vec<Complex64> = (0..=degree)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let t = if t_max == 0.0 { 0.0 } else { rng.gen_range(-t_max..=t_max) };
        let u0 = CoeffSeries::new(coeffs)?;
        let (via_exp, via_shift) = shift_exp_demo(&u0, t, s)?;
        let gap = via_exp.max_abs_diff(&via_shift, degree);
        worst = worst.max(gap);
        rows.push(vec![i.to_string(), format!("{t:.17e}"), format!("{gap:.17e}")]);
    }
    write_csv(&out.join("transcript.csv"), &["sample", "t", "max_discrepancy"], &rows)?;
    let failures = if worst < 1e-12 {
        Vec::new()
    } else {
        vec![format!("max discrepancy {worst:e} >= 1e-12")]
    };
    let summary = format!("command = exp-demo\nsamples = {samples}\nmax_discrepancy = {worst:e}\n");
    Ok(Report { summary, failures })
}

fn product_cmd(params: &Params, out: &Path) -> Result<Report> {
    let degree = params.degree(16)?;
    let factors = params.factors.unwrap_or(40);
    let lambda = unit_scale("lambda", params.lambda.unwrap_or(0.5))?;
    let s = unit_scale("s", params.s.unwrap_or(0.5))?;
    let c = params.coeff.unwrap_or(0.04);
    let space = SpaceSpec::new(1.0, degree)?;
    let fam = constant_arnold(space, factors.max(1))?;
    let tau = Scale::new(s);
    // u_n = c 2^-n z^2 d/dz
    let us: Vec<ScaledOperator> = (0..factors)
        .map(|n| {
            let mut v = CoeffSeries::zero(degree);
            v.set_coeff(2, Complex64::new(c * 0.5f64.powi(n as i32), 0.0));
            ScaledOperator::vector_field(&v, tau)
        })
        .collect();
    let mut x = CoeffSeries::zero(degree);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.unwrap_or(0));
    for j in 1..=degree {
        x.set_coeff(j, Complex64::new(rng.gen_range(-1.0..1.0), 0.0));
    }
    let (_, diag) = product_apply(&us, &space.element(x, s, Level::Finite(0))?, tau, lambda, &fam)?;
    let rows: Vec<Vec<String>> = diag
        .gaps
        .iter()
        .enumerate()
        .map(|(n, g)| {
            vec![
                n.to_string(),
                g.to_sci(),
                diag.gap_bounds[n].to_sci(),
                diag.gap_bounds_ok[n].to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("transcript.csv"), &["n", "gap", "gap_bound", "gap_ok"], &rows)?;
    let mut failures = Vec::new();
    if diag.budget.status != BudgetStatus::WithinBudget {
        failures.push("budget".to_string());
    }
    if !diag.norm_bound_ok {
        failures.push(format!("|g x| = {} > C |x| = {}", diag.output_norm, Mag::new(diag.lemma_constant) * diag.input_norm));
    }
    failures.extend(diag.gap_bounds_ok.iter().enumerate().filter(|(_, &ok)| !ok).map(|(n, _)| format!("gap bound at n = {n}")));
    let small_gap = diag.gaps.iter().position(|g| *g < Mag::new(1e-10));
    let summary = format!(
        "command = product\nfactors = {factors}\nlemma_constant = {}\nk_constant = {}\nfirst_gap_below_1e-10 = {}\n",
        diag.lemma_constant,
        diag.k_constant.map_or("none".to_string(), |k| k.to_string()),
        small_gap.map_or("none".to_string(), |n| n.to_string()),
    );
    Ok(Report { summary, failures })
}

fn siegel_cmd(params: &Params, out: &Path) -> Result<Report> {
    let theta = parse_theta(params.theta.as_deref().unwrap_or("golden"))?;
    let degree = params.degree(64)?;
    let defaults = SiegelConfig::default();
    let config = SiegelConfig {
        a: params.a()?,
        steps: params.steps.unwrap_or(defaults.steps),
        c_tame: params.c_tame,
        comparison_degree: params.comparison_degree.unwrap_or(defaults.comparison_degree),
        inflate_beta: params.inflate_beta,
        ..defaults
    };
    let problem = SiegelProblem::quadratic(theta, params.coeff.unwrap_or(1e-3), degree)?;
    let rep = siegel_run(&problem, &config)?;
    let transcript = &rep.outcome.state.transcript;
    write_transcript(transcript, &out.join("transcript.csv"))?;

    let names = ["i", "ii", "iii", "star", "A", "B", "C"];
    let mut failures = Vec::new();
    for r in transcript {
        let b = r.bounds;
        for (name, ok) in names.iter().zip([b.i, b.ii, b.iii, b.star, b.a, b.b, b.c]) {
            if !ok {
                failures.push(format!("bound {name} at n = {}", r.n));
            }
        }
    }
    if !rep.outcome.residual_ok {
        failures.push(format!("final residual {} > {}", rep.outcome.residual, rep.outcome.residual_bound));
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "command = siegel");
    let _ = writeln!(summary, "theta = {theta:.17}");
    let _ = writeln!(summary, "degree = {degree}");
    let _ = writeln!(summary, "steps = {}", transcript.len());
    let _ = writeln!(summary, "ln_s0 = {}", rep.init.s0.ln());
    let _ = writeln!(summary, "c_tame = {}", rep.c_tame);
    let _ = writeln!(summary, "measured_c_tame = {}", rep.outcome.measured_c_tame);
    let _ = writeln!(summary, "final_residual = {}", rep.outcome.residual);
    let _ = writeln!(summary, "final_residual_bound = {}", rep.outcome.residual_bound);
    let _ = writeln!(summary, "deviation_through_degree_{} = {:e}", rep.comparison_degree, rep.deviation);
    let _ = writeln!(summary, "conjugacy_residual_decreasing = {}", rep.residual_monotone);
    let _ = writeln!(summary, "all_step_checks = {}", transcript.iter().all(|r| r.bounds.all_ok()));
    Ok(Report { summary, failures })
}

/// `x` rounded to 12 significant digits, printed without trailing zeros.
fn short(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    format!("{x:.11e}").parse::<f64>().map_or(x.to_string(), |r| r.to_string())
}

fn bruno_cmd(params: &Params, out: &Path) -> Result<Report> {
    let text = params.model.as_deref().unwrap_or("e^(1.5^n)");
    let p = parse_sequence(text)?;
    let sum = bruno_sum(&p);
    let rows: Vec<Vec<String>> = (0..=20)
        .map(|n| vec![n.to_string(), format!("{:.17e}", p.ln_at(n)), format!("{:.17e}", p.weighted_sum_from(n))])
        .collect();
    write_csv(&out.join("transcript.csv"), &["n", "ln_p_n", "tail_sum_from_n"], &rows)?;
    let failures = if sum.is_finite() {
        Vec::new()
    } else {
        vec!["Bruno sum diverges (NotTamed)".to_string()]
    };
    Ok(Report {
        summary: format!("command = bruno\nmodel = {text}\nbruno_sum = {}\n", short(sum)),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_rotation_numbers() {
        assert_eq!(parse_theta("golden").unwrap(), GOLDEN);
        assert!((parse_theta("silver").unwrap() - (2f64.sqrt() - 1.0)).abs() < 1e-16);
        assert_eq!(parse_theta("0.25").unwrap(), 0.25);
        assert!(parse_theta("1.5").is_err() && parse_theta("pi").is_err());
    }

    #[test]
    fn sequence_syntax() {
        assert_eq!(parse_sequence("e^(1.5^n)").unwrap(), TamedSequence::exp_power(1.5).unwrap());
        assert!(bruno_sum(&parse_sequence("non-tamed").unwrap()).is_infinite());
        assert_eq!(parse_sequence("1, 2, 4").unwrap().value_at(5), 4.0);
        assert!(parse_sequence("banana").is_err());
    }

    #[test]
    fn short_trims_rounding_noise() {
        assert_eq!(short(3.9999999999999996), "4");
        assert_eq!(short(f64::INFINITY), "inf");
    }
}
