use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use cubelab::consistency::{consistency_target, consistent_subgroup, drop_affine_coordinate, is_consistent};
use cubelab::cubes::{complete_corner, cube_count, Corner};
use cubelab::exch::{
    check_affine_exchangeable, check_cubic_exchangeable, check_independence_property, uniform_cube_measure,
    WindowDistribution,
};
use cubelab::fib::{
    check_cube_surjective, check_fibration, check_morphism, default_nmax, enumerate_morphisms, CubeSurjectivity,
    GroupNilspaceMap,
};
use cubelab::measures::{
    convergence_report, sample_measure, zeta_marginal, EnumOptions, FiniteDistribution, FunctionTable, LimitObject,
    LinearFormSystem, Mode, Weights,
};
use cubelab::poly::calibrate_depth_convention;
use cubelab::{Error, FilteredGroup, GroupElement};

/// Exact computations on cube groups of filtered abelian groups.
#[derive(Parser, Debug)]
#[command(name = "cubelab", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Serialize)]
struct Common {
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Enumeration budget in iterations.
    #[arg(
        long,
        global = true,
        env = "CUBELAB_BUDGET",
        default_value_t = cubelab::DEFAULT_BUDGET,
        value_parser = clap::value_parser!(u64).range(1..)
    )]
    budget: u64,
    /// Shards for enumeration and sampling.
    #[arg(long, global = true, default_value_t = 1, value_parser = parse_jobs)]
    jobs: usize,
}

fn parse_jobs(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(j) => Ok(j),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Sampling measure of a function against a form system.
    SampleMeasure(SampleArgs),
    /// Marginal of a limit object on a form system.
    Zeta(ZetaArgs),
    /// Distances between sampling measures of a sequence of functions.
    Converge(ConvergeArgs),
    /// Exchangeability and independence checks on a window distribution.
    Exch(ExchArgs),
    /// Membership in the consistency subgroup.
    Consistency(ConsistencyArgs),
    /// Morphism, cube-surjectivity and fibration checks.
    Fib(FibArgs),
    /// The depth convention table.
    Calibrate,
    /// Number of n-cubes of a filtered group.
    CubeCount(CubeCountArgs),
    /// Completes a corner to a cube.
    CompleteCorner(CornerArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeKind {
    Exact,
    Mc,
}

#[derive(Args, Debug, Serialize)]
struct ModeArgs {
    #[arg(long, value_enum, default_value_t = ModeKind::Exact)]
    mode: ModeKind,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    /// Monte Carlo seed, required with `--mode mc`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ModeArgs {
    fn mode(&self) -> Result<Mode, Failure> {
        match self.mode {
            ModeKind::Exact => Ok(Mode::Exact),
            ModeKind::Mc => {
                let seed = self.seed.ok_or_else(|| Failure::Input("--mode mc needs --seed".into()))?;
                if self.samples == 0 {
                    return Err(Failure::Input("--samples must be positive".into()));
                }
                Ok(Mode::MonteCarlo {
                    samples: self.samples,
                    seed,
                })
            }
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SampleArgs {
    #[arg(long)]
    function: PathBuf,
    #[arg(long)]
    forms: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    mode: ModeArgs,
    /// Write the distribution as CSV.
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug, Serialize)]
struct ZetaArgs {
    #[arg(long)]
    limit: PathBuf,
    #[arg(long)]
    forms: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    mode: ModeArgs,
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug, Serialize)]
struct ConvergeArgs {
    /// Function tables in sequence order.
    #[arg(long = "function", required = true, num_args = 1..)]
    functions: Vec<PathBuf>,
    /// Form systems; each file holds one system or an array of them.
    #[arg(long = "forms", required = true, num_args = 1..)]
    forms: Vec<PathBuf>,
    /// Limit object to compare against.
    #[arg(long)]
    limit: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    mode: ModeArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ExchCheck {
    Affine,
    Cubic,
    Independence,
    All,
}

#[derive(Args, Debug, Serialize)]
struct ExchArgs {
    /// Window distribution on the 2^k vertices.
    #[arg(long, conflicts_with_all = ["group", "window"], required_unless_present = "group")]
    input: Option<PathBuf>,
    /// Filtered group whose uniform cube measure is checked.
    #[arg(long, requires = "window")]
    group: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, value_enum, default_value_t = ExchCheck::All)]
    check: ExchCheck,
    /// Dimension for the cubic check.
    #[arg(long, default_value_t = 2)]
    m: usize,
}

#[derive(Args, Debug, Serialize)]
struct ConsistencyArgs {
    #[arg(long)]
    forms: PathBuf,
    #[arg(long)]
    k: u32,
    #[arg(long)]
    r: u32,
    /// Residues modulo 2^(r+1), comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    tuple: Vec<u64>,
    /// Prepend the affine coordinate to every form.
    #[arg(long)]
    lift: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum FibCheck {
    Morphism,
    CubeSurjective,
    Fibration,
    All,
}

#[derive(Args, Debug, Serialize)]
struct FibArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    codomain: PathBuf,
    /// Map table; all morphisms are enumerated when absent.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FibCheck::All)]
    check: FibCheck,
    /// Largest cube dimension checked.
    #[arg(long)]
    nmax: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct CubeCountArgs {
    #[arg(long)]
    group: PathBuf,
    #[arg(long)]
    n: usize,
}

#[derive(Args, Debug, Serialize)]
struct CornerArgs {
    #[arg(long)]
    group: PathBuf,
    #[arg(long)]
    corner: PathBuf,
}

enum Failure {
    Io(String),
    Input(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Lib(Error::BudgetExceeded { .. }) => 2,
            Failure::Input(_) | Failure::Lib(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Io(m) | Failure::Input(m) => m.clone(),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

enum Output {
    Json(Value),
    Csv(String),
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<LinearFormSystem>),
    One(LinearFormSystem),
}

fn distribution_csv(d: &FiniteDistribution) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..d.arity()).map(|i| format!("x{i}")).collect();
    header.push("probability".into());
    let io = |e: csv::Error| Failure::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    let rows: Vec<(Vec<u32>, String)> = match d.weights() {
        Weights::Exact(m) => m.iter().map(|(t, p)| (t.clone(), p.to_string())).collect(),
        Weights::Estimated { probs, .. } => probs.iter().map(|(t, p)| (t.clone(), p.to_string())).collect(),
    };
    for (t, p) in rows {
        let mut rec: Vec<String> = t.iter().map(|&i| d.alphabet()[i as usize].clone()).collect();
        rec.push(p);
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Io(e.to_string()))
}

fn distribution_output(d: FiniteDistribution, csv: bool) -> Result<Output, Failure> {
    if csv {
        Ok(Output::Csv(distribution_csv(&d)?))
    } else {
        Ok(Output::Json(to_value(&d)))
    }
}

fn window_distribution(args: &ExchArgs, budget: u64) -> Result<WindowDistribution, Failure> {
    if let Some(path) = &args.input {
        let d: FiniteDistribution = read_json(path)?;
        return Ok(WindowDistribution::new(d)?);
    }
    let (Some(path), Some(k)) = (&args.group, args.window) else {
        return Err(Failure::Input("exch needs --input or --group with --window".into()));
    };
    let z: FilteredGroup = read_json(path)?;
    let count = cube_count(&z, k);
    if count > budget.into() {
        return Err(Error::BudgetExceeded {
            needed: count.to_string(),
            budget,
        }
        .into());
    }
    Ok(uniform_cube_measure(&z, k)?)
}

fn map_table(phi: &GroupNilspaceMap) -> Value {
    to_value(phi)["table"].clone()
}

fn fib_checks(
    phi: &GroupNilspaceMap,
    check: FibCheck,
    nmax: usize,
    surj: Option<&CubeSurjectivity>,
    budget: u64,
) -> Result<serde_json::Map<String, Value>, Failure> {
    let mut out = serde_json::Map::new();
    let morphism = check_morphism(phi, nmax, budget)?;
    let is_morphism = morphism.morphism;
    if matches!(check, FibCheck::Morphism | FibCheck::All) {
        out.insert("morphism".into(), to_value(&morphism));
    }
    if matches!(check, FibCheck::CubeSurjective | FibCheck::All) {
        let v = if !is_morphism && check == FibCheck::All {
            Value::Null
        } else if let Some(s) = surj {
            to_value(&s.check(phi)?)
        } else {
            to_value(&check_cube_surjective(phi, nmax, budget)?)
        };
        out.insert("cube_surjective".into(), v);
    }
    if matches!(check, FibCheck::Fibration | FibCheck::All) {
        out.insert("fibration".into(), to_value(&check_fibration(phi, budget)?));
    }
    Ok(out)
}

fn run_fib(args: &FibArgs, budget: u64) -> Result<Value, Failure> {
    let x: FilteredGroup = read_json(&args.domain)?;
    let y: FilteredGroup = read_json(&args.codomain)?;
    let nmax = args.nmax.unwrap_or_else(|| default_nmax(&x, &y));
    if let Some(path) = &args.map {
        let phi: GroupNilspaceMap = read_json(path)?;
        if phi.domain() != &x || phi.codomain() != &y {
            return Err(Error::MismatchedSpace("the map does not match --domain and --codomain".into()).into());
        }
        return Ok(Value::Object(fib_checks(&phi, args.check, nmax, None, budget)?));
    }
    let maps = enumerate_morphisms(&x, &y, budget)?;
    let surj = if matches!(args.check, FibCheck::CubeSurjective | FibCheck::All) {
        Some(CubeSurjectivity::new(&x, &y, nmax, budget)?)
    } else {
        None
    };
    let mut entries = Vec::with_capacity(maps.len());
    for phi in &maps {
        let mut entry = serde_json::Map::new();
        entry.insert("table".into(), map_table(phi));
        entry.extend(fib_checks(phi, args.check, nmax, surj.as_ref(), budget)?);
        entries.push(Value::Object(entry));
    }
    Ok(json!({ "count": maps.len(), "morphisms": entries }))
}

fn run_consistency(args: &ConsistencyArgs) -> Result<Value, Failure> {
    let mut forms: LinearFormSystem = read_json(&args.forms)?;
    if args.lift {
        forms = forms.lift_to_affine();
    }
    let verdict = is_consistent(&args.tuple, &forms, args.k, args.r)?;
    let target = consistency_target(args.k, args.r)?;
    let sub = consistent_subgroup(&drop_affine_coordinate(&forms)?, &target)?;
    let generators: Vec<Vec<u64>> = sub
        .generators()
        .iter()
        .map(|g| g.iter().map(|x| x.residues()[0]).collect())
        .collect();
    Ok(json!({
        "consistent": verdict.member,
        "forms": forms,
        "target": target,
        "membership": verdict,
        "generators": generators,
        "reduced": sub.reduced_rows(),
    }))
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    let budget = cli.common.budget;
    let opts = EnumOptions {
        budget,
        jobs: cli.common.jobs,
    };
    let result = match &cli.command {
        Command::SampleMeasure(a) => {
            let f: FunctionTable = read_json(&a.function)?;
            let sys: LinearFormSystem = read_json(&a.forms)?;
            let d = sample_measure(&f, &sys, a.mode.mode()?, &opts)?;
            return distribution_output(d, a.csv);
        }
        Command::Zeta(a) => {
            let lim: LimitObject = read_json(&a.limit)?;
            let sys: LinearFormSystem = read_json(&a.forms)?;
            let d = zeta_marginal(&lim, &sys, a.mode.mode()?, &opts)?;
            return distribution_output(d, a.csv);
        }
        Command::Converge(a) => {
            let mode = a.mode.mode()?;
            let fs = a
                .functions
                .iter()
                .map(|p| read_json::<FunctionTable>(p))
                .collect::<Result<Vec<_>, _>>()?;
            let mut systems = Vec::new();
            for p in &a.forms {
                match read_json::<OneOrMany>(p)? {
                    OneOrMany::One(s) => systems.push(s),
                    OneOrMany::Many(v) => systems.extend(v),
                }
            }
            let lim = a.limit.as_deref().map(read_json::<LimitObject>).transpose()?;
            let report = convergence_report(&fs, &systems, mode, lim.as_ref().map(|l| (l, mode)), &opts)?;
            to_value(&report)
        }
        Command::Exch(a) => {
            let d = window_distribution(a, budget)?;
            let mut out = serde_json::Map::new();
            out.insert("k".into(), json!(d.k()));
            if matches!(a.check, ExchCheck::Affine | ExchCheck::All) {
                out.insert("affine".into(), to_value(&check_affine_exchangeable(&d)?));
            }
            if matches!(a.check, ExchCheck::Cubic | ExchCheck::All) {
                out.insert("cubic".into(), to_value(&check_cubic_exchangeable(&d, a.m)?));
            }
            if matches!(a.check, ExchCheck::Independence | ExchCheck::All) {
                out.insert("independence".into(), to_value(&check_independence_property(&d)?));
            }
            Value::Object(out)
        }
        Command::Consistency(a) => run_consistency(a)?,
        Command::Fib(a) => run_fib(a, budget)?,
        Command::Calibrate => to_value(&calibrate_depth_convention()?),
        Command::CubeCount(a) => {
            let z: FilteredGroup = read_json(&a.group)?;
            let levels: Vec<u64> = (0..=z.effective_degree() + 1).map(|i| z.level_order(i)).collect();
            json!({
                "n": a.n,
                "count": cube_count(&z, a.n).to_string(),
                "level_orders": levels,
            })
        }
        Command::CompleteCorner(a) => {
            let z: FilteredGroup = read_json(&a.group)?;
            let corner: Corner = read_json(&a.corner)?;
            let missing = corner.missing()?;
            let cube = complete_corner(&z, &corner)?;
            let value: &GroupElement = &cube.values[missing];
            json!({ "missing": missing, "value": value.label(), "cube": cube })
        }
    };
    Ok(Output::Json(result))
}

fn envelope(cli: &Cli, out: Output) -> String {
    match out {
        Output::Csv(s) => s,
        Output::Json(result) => pretty(&json!({
            "cubelab": cubelab::VERSION,
            "config": {
                "common": to_value(&cli.common),
                "command": to_value(&cli.command),
            },
            "result": result,
        })),
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let res = match path {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    };
    res.map_err(Failure::Io)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = run(&cli).and_then(|out| emit(cli.common.out.as_deref(), &envelope(&cli, out)));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
