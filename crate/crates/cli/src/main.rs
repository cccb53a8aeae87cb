//! `cfaid`: identifiability analysis for confirmatory factor models.
//!
//! Data goes to standard output, diagnostics to standard error. Exit codes:
//! 0 success, 1 malformed input, 2 precondition or assumption failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfaid_core::counterexample::{self, CounterexampleKind};
use cfaid_core::generator::{self, GeneratorSpec, PatternPolicy};
use cfaid_core::io::{self, ModelBundle};
use cfaid_core::oracle;
use cfaid_core::recovery;
use cfaid_core::{DesignMatrix, FactorModel, DEFAULT_TOL};
use clap::{Parser, Subcommand, ValueEnum};

/// Environment variable overriding the default tolerance.
const TOL_ENV: &str = "CFAID_TOL";

#[derive(Parser)]
#[command(name = "cfaid", version, about = "Identifiability of latent factors and loadings in confirmatory factor models")]
struct Cli {
    /// Relative rank tolerance (default 1e-8, or $CFAID_TOL).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Cross-check results against the brute-force reference implementations.
    #[arg(long, global = true)]
    paranoid: bool,
    /// Output format where a command supports both.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Identifiability report for a design matrix given as 0/1 CSV.
    Analyze { q: PathBuf },
    /// Check the model assumptions of a JSON model bundle.
    Check { bundle: PathBuf },
    /// Recover identifiable factors and loadings from M and Q (both CSV).
    Recover { m: PathBuf, q: PathBuf },
    /// Build an alternative factorization refuting identifiability of a column.
    Counterexample {
        bundle: PathBuf,
        /// 1-based column whose identifiability is refuted.
        #[arg(long)]
        column: usize,
        /// Refute the loading A_k instead of the latent factor Θ_k.
        #[arg(long)]
        loading: bool,
        /// Gauge step; defaults to the safe budget.
        #[arg(long)]
        eps: Option<f64>,
        /// 1-based partner column k'; defaults to the first applicable one.
        #[arg(long)]
        partner: Option<usize>,
    },
    /// Write a random valid model bundle.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        j: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Planted masking pairs, 1-based, e.g. "2>1,3>1" (2 masks 1, 3 masks 1).
        #[arg(long)]
        plant: Option<String>,
        /// Anchor the first K rows of Q to the identity.
        #[arg(long, conflicts_with = "plant")]
        identity: bool,
        /// Entries are drawn uniformly from (-scale, scale).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Demonstrations.
    Demo {
        #[command(subcommand)]
        demo: Demo,
    },
}

#[derive(Subcommand)]
enum Demo {
    /// Smallest singular value and Frobenius bound of the decaying two-column example.
    Decay {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
    },
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Precondition(String),
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Failure::Input(e.to_string())
    }

    fn precondition(e: impl std::fmt::Display) -> Self {
        Failure::Precondition(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_design(path: &Path) -> Result<DesignMatrix, Failure> {
    io::read_design_csv(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_bundle(path: &Path) -> Result<FactorModel, Failure> {
    ModelBundle::from_json(&read(path)?)
        .and_then(|b| b.to_model())
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn tolerance(flag: Option<f64>) -> Result<f64, Failure> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var(TOL_ENV) {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| Failure::Input(format!("{TOL_ENV}: cannot parse {s:?}")))?,
            Err(_) => DEFAULT_TOL,
        },
    };
    if !(tol.is_finite() && tol > 0.0 && tol < 1.0) {
        return Err(Failure::Input(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    Ok(tol)
}

fn paranoid_design(q: &DesignMatrix) -> Outcome {
    if q.n_factors() > oracle::MAX_ENUMERATED_FACTORS {
        eprintln!("paranoid: K = {} too large for subset enumeration, skipped", q.n_factors());
        return Ok(());
    }
    for f in 0..q.n_factors() {
        let fast = q.intersection_set(f).map_err(Failure::input)?;
        let slow = oracle::intersection_set_bruteforce(q, f).map_err(Failure::input)?;
        if fast != slow {
            return Err(Failure::Precondition(format!(
                "paranoid: intersection set of factor {} disagrees with subset enumeration",
                f + 1
            )));
        }
    }
    eprintln!("paranoid: {} intersection sets confirmed by subset enumeration", q.n_factors());
    Ok(())
}

fn paranoid_loadings(model: &FactorModel, tol: f64) -> Outcome {
    let q = model.design();
    let mut checked = 0;
    for f in 0..q.n_factors() {
        let Some(identifiable) = q.a_identifiable(f).map_err(Failure::input)?.as_bool() else {
            continue;
        };
        let witness = oracle::a_nonidentifiability_witness(model, f, tol).is_some();
        if witness == identifiable {
            return Err(Failure::Precondition(format!(
                "paranoid: loading verdict for factor {} disagrees with the coefficient witness",
                f + 1
            )));
        }
        checked += 1;
    }
    eprintln!("paranoid: {checked} loading verdicts confirmed by coefficient witnesses");
    Ok(())
}

fn analyze(path: &Path, format: Format, paranoid: bool) -> Outcome {
    let q = read_design(path)?;
    if paranoid {
        paranoid_design(&q)?;
    }
    let report = q.analyze();
    match format {
        Format::Json => println!("{}", io::report_to_json(&report)),
        Format::Csv => {
            println!("factor,theta_identifiable,a_identifiable");
            for f in 0..report.k {
                println!("{},{},{}", f + 1, report.theta_identifiable[f], report.a_identifiable[f]);
            }
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn check(path: &Path, tol: f64, paranoid: bool) -> Outcome {
    let model = read_bundle(path)?;
    let report = model.check_assumptions(tol);
    println!("{}", io::assumptions_to_json(&report));
    if paranoid {
        paranoid_design(model.design())?;
        if report.overall {
            paranoid_loadings(&model, tol)?;
        }
    }
    if report.overall {
        Ok(())
    } else {
        Err(Failure::Precondition("model violates the assumptions".into()))
    }
}

fn recover(m_path: &Path, q_path: &Path, tol: f64, format: Format, paranoid: bool) -> Outcome {
    let m = io::read_matrix_csv(&read(m_path)?).map_err(|e| Failure::Input(format!("{}: {e}", m_path.display())))?;
    let q = read_design(q_path)?;
    if m.ncols() != q.n_items() {
        return Err(Failure::Input(format!(
            "M has {} columns but Q has {} rows",
            m.ncols(),
            q.n_items()
        )));
    }
    if paranoid {
        paranoid_design(&q)?;
    }
    let result = recovery::recover(&m, &q, tol).map_err(Failure::precondition)?;
    for f in &result.skipped {
        eprintln!(
            "factor {}: not identifiable, intersected subspace has dimension {}",
            f + 1,
            result.intersection_dims[*f]
        );
    }
    match format {
        Format::Json => println!("{}", io::recovery_to_json(&result, tol)),
        Format::Csv => {
            if let Some(d) = io::directions_matrix(&result) {
                print!("{}", io::write_matrix_csv(&d));
            }
            if let Some(l) = &result.loadings {
                println!();
                print!("{}", io::write_matrix_csv(&l.loadings));
            }
            eprintln!("{}", io::recovery_diagnostics_json(&result, tol));
        }
    }
    Ok(())
}

fn counterexample(
    path: &Path,
    column: usize,
    loading: bool,
    eps: Option<f64>,
    partner: Option<usize>,
    tol: f64,
    paranoid: bool,
) -> Outcome {
    let model = read_bundle(path)?;
    let k = model.n_factors();
    let in_range = |c: usize| (1..=k).contains(&c);
    if !in_range(column) || partner.is_some_and(|p| !in_range(p)) {
        return Err(Failure::Input(format!("column indices must lie in 1..={k}")));
    }
    let kind = if loading {
        CounterexampleKind::Loading
    } else {
        CounterexampleKind::Theta
    };
    let target = column - 1;
    let other = match partner {
        Some(p) => p - 1,
        None => counterexample::default_partner(&model, target, kind).ok_or_else(|| {
            Failure::Precondition(format!(
                "no applicable partner: {} of factor {column} is identifiable",
                if loading { "the loading" } else { "the latent factor" }
            ))
        })?,
    };
    let alt = match kind {
        CounterexampleKind::Theta => counterexample::theta_counterexample(&model, target, other, eps),
        CounterexampleKind::Loading => counterexample::a_counterexample(&model, target, other, eps),
    }
    .map_err(Failure::precondition)?;
    if paranoid && loading && oracle::a_nonidentifiability_witness(&model, target, tol).is_none() {
        return Err(Failure::Precondition(format!(
            "paranoid: no coefficient witness for loading {column}"
        )));
    }
    let verification = alt.verify(&model, tol);
    println!("{}", io::counterexample_to_json(&model, &alt, &verification));
    if verification.recomposition_error > 1e-12 || !verification.assumptions.overall {
        return Err(Failure::Precondition(
            "alternative factorization failed verification".into(),
        ));
    }
    Ok(())
}

fn parse_plant(text: &str) -> Result<Vec<(usize, usize)>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (a, b) = pair
                .split_once('>')
                .ok_or_else(|| Failure::Input(format!("plant {pair:?}: expected \"a>b\"")))?;
            let parse = |s: &str| -> Result<usize, Failure> {
                match s.trim().parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(Failure::Input(format!("plant {pair:?}: bad factor index {s:?}"))),
                }
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn generate(
    n: usize,
    j: usize,
    k: usize,
    seed: u64,
    plant: Option<&str>,
    identity: bool,
    scale: f64,
    paranoid: bool,
    tol: f64,
) -> Outcome {
    let policy = match (plant, identity) {
        (Some(p), _) => PatternPolicy::PlantedMasking(parse_plant(p)?),
        (None, true) => PatternPolicy::IdentityAnchored,
        (None, false) => PatternPolicy::UniformRandom,
    };
    let mut spec = GeneratorSpec::new(n, j, k, seed, policy);
    spec.entry_scale = scale;
    let q = generator::random_design(&spec).map_err(Failure::precondition)?;
    let model = generator::random_model(&spec, &q).map_err(Failure::precondition)?;
    if paranoid {
        paranoid_design(&q)?;
        paranoid_loadings(&model, tol)?;
    }
    println!("{}", ModelBundle::from_model(&model).to_json());
    Ok(())
}

fn decay_table(n: usize) -> Outcome {
    if n < 2 {
        return Err(Failure::Input("decay demo needs n >= 2".into()));
    }
    let mut sizes: Vec<usize> = std::iter::successors(Some(10usize), |s| s.checked_mul(10))
        .take_while(|&s| s <= n)
        .collect();
    if sizes.last() != Some(&n) {
        sizes.push(n);
    }
    println!("n,m,sigma_min,frobenius_sq,bound,bound_holds");
    for size in sizes {
        let s = generator::decay_stats(size, None).map_err(Failure::precondition)?;
        println!(
            "{},{},{},{},{},{}",
            s.n,
            s.m,
            io::format_float(s.sigma_min),
            io::format_float(s.frobenius_sq),
            io::format_float(s.bound),
            s.bound_holds()
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let tol = tolerance(cli.tol)?;
    match &cli.command {
        Command::Analyze { q } => analyze(q, cli.format, cli.paranoid),
        Command::Check { bundle } => check(bundle, tol, cli.paranoid),
        Command::Recover { m, q } => recover(m, q, tol, cli.format, cli.paranoid),
        Command::Counterexample {
            bundle,
            column,
            loading,
            eps,
            partner,
        } => counterexample(bundle, *column, *loading, *eps, *partner, tol, cli.paranoid),
        Command::Generate {
            n,
            j,
            k,
            seed,
            plant,
            identity,
            scale,
        } => generate(*n, *j, *k, *seed, plant.as_deref(), *identity, *scale, cli.paranoid, tol),
        Command::Demo {
            demo: Demo::Decay { n },
        } => decay_table(*n),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Precondition(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plant_parsing() {
        assert!(matches!(parse_plant("2>1, 3>1").as_deref(), Ok([(1, 0), (2, 0)])));
        assert!(parse_plant("2-1").is_err());
        assert!(parse_plant("0>1").is_err());
        assert!(parse_plant("").unwrap().is_empty());
    }
}
