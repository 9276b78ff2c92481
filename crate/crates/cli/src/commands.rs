//! Subcommand bodies. Each returns a table or a classified failure.

use std::time::Instant;

use mgf_core::{
    cutoff_mode, eval_batch, eval_modal_green_with, eval_reference, modes_needed, params_from_geometry, Branch,
    Complex64, EvalConfig, EvalParams, GeometricInput, MgfError, ModalResult, OracleConfig, Scaling,
};

use crate::output::{Cell, Table};

/// Exit status 2 for `Usage`, 1 for `Compute`.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(s) | CliError::Compute(s) => s,
        }
    }
}

impl From<MgfError> for CliError {
    fn from(e: MgfError) -> Self {
        match e {
            MgfError::InvalidParameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub config: EvalConfig,
    pub oracle: OracleConfig,
    pub scaling: Scaling,
    pub threads: usize,
}

impl Context {
    fn params(&self, m: i64, kappa: f64, beta_minus: f64) -> EvalParams {
        EvalParams::new(m, kappa, beta_minus).with_scaling(self.scaling, 1.0)
    }

    fn timed(&self, p: &EvalParams) -> CliResult<(ModalResult, f64)> {
        let t = Instant::now();
        let r = eval_modal_green_with(p, &self.config)?;
        Ok((r, t.elapsed().as_secs_f64()))
    }

    /// `None` where the reference evaluator does not apply.
    fn oracle_error(&self, p: &EvalParams, value: Complex64) -> CliResult<Option<f64>> {
        match eval_reference(p, &self.oracle) {
            Ok(want) => Ok(Some((value - want).norm())),
            Err(MgfError::OracleLimit { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Smooth => "smooth",
        Branch::NearSingular => "near_singular",
    }
}

fn total_nodes(r: &ModalResult) -> usize {
    r.nodes_used.gamma1 + r.nodes_used.gamma2 + r.nodes_used.arc
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn check_repeats(repeats: usize) -> CliResult<()> {
    if repeats.is_multiple_of(2) {
        return Err(CliError::Usage(format!("repeats must be a positive odd integer, got {repeats}")));
    }
    Ok(())
}

/// Either `(κ, β₋)` directly or a geometry that determines both.
pub enum Point {
    Direct { kappa: f64, beta_minus: f64 },
    Geometry(GeometricInput),
}

pub fn eval(ctx: &Context, m: i64, point: Point, compare_oracle: bool) -> CliResult<Table> {
    let p = match point {
        Point::Direct { kappa, beta_minus } => ctx.params(m, kappa, beta_minus),
        Point::Geometry(g) => {
            let base = params_from_geometry(&g)?;
            EvalParams { m: m.unsigned_abs(), ..base }.with_scaling(ctx.scaling, base.r0)
        }
    };
    let (r, seconds) = ctx.timed(&p)?;
    let mut cols = vec!["m", "kappa", "beta_minus", "re", "im", "branch", "nodes", "seconds"];
    let mut row: Vec<Cell> = vec![
        p.m.into(),
        p.kappa.into(),
        p.beta_minus.into(),
        r.value.re.into(),
        r.value.im.into(),
        branch_name(r.branch).into(),
        total_nodes(&r).into(),
        seconds.into(),
    ];
    if compare_oracle {
        cols.push("abs_err");
        row.push(ctx.oracle_error(&p, r.value)?.into());
    }
    let mut t = Table::new(&cols);
    t.push(row);
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    #[value(name = "beta-minus", alias = "beta_minus")]
    BetaMinus,
    Kappa,
    M,
}

pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub m: Option<i64>,
    pub kappa: Option<f64>,
    pub beta_minus: Option<f64>,
    pub compare_oracle: bool,
    pub repeats: usize,
}

/// `points` values log-spaced from `start` to `stop`. Integral decades are
/// parsed from their decimal form so they are exact.
pub fn log_range(start: f64, stop: f64, points: usize) -> CliResult<Vec<f64>> {
    if !(start > 0.0 && stop > 0.0 && start.is_finite() && stop.is_finite()) || points == 0 {
        return Err(CliError::Usage(format!("log-range needs positive endpoints and points ≥ 1, got {start} {stop} {points}")));
    }
    let (lo, hi) = (start.log10(), stop.log10());
    Ok((0..points)
        .map(|i| {
            if points == 1 {
                return start;
            }
            let e = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            if (e - e.round()).abs() < 1e-9 {
                format!("1e{}", e.round() as i64).parse().unwrap()
            } else {
                10f64.powf(e)
            }
        })
        .collect())
}

pub fn sweep(ctx: &Context, spec: &SweepSpec) -> CliResult<Table> {
    check_repeats(spec.repeats)?;
    if spec.values.is_empty() {
        return Err(CliError::Usage("sweep values must be non-empty".into()));
    }
    let fixed_on_axis = match spec.axis {
        Axis::BetaMinus => spec.beta_minus.is_some(),
        Axis::Kappa => spec.kappa.is_some(),
        Axis::M => spec.m.is_some(),
    };
    if fixed_on_axis {
        return Err(CliError::Usage("the swept parameter must not also be fixed".into()));
    }
    let missing = |name: &str| CliError::Usage(format!("sweep needs --{name} held fixed"));
    let params: Vec<EvalParams> = match spec.axis {
        Axis::BetaMinus => {
            let (m, kappa) = (spec.m.ok_or_else(|| missing("m"))?, spec.kappa.ok_or_else(|| missing("kappa"))?);
            spec.values.iter().map(|&v| ctx.params(m, kappa, v)).collect()
        }
        Axis::Kappa => {
            let (m, beta) = (spec.m.ok_or_else(|| missing("m"))?, spec.beta_minus.ok_or_else(|| missing("beta-minus"))?);
            spec.values.iter().map(|&v| ctx.params(m, v, beta)).collect()
        }
        Axis::M => {
            let (kappa, beta) = (spec.kappa.ok_or_else(|| missing("kappa"))?, spec.beta_minus.ok_or_else(|| missing("beta-minus"))?);
            if spec.values.iter().any(|v| v.fract() != 0.0 || v.abs() > 9.0e15) {
                return Err(CliError::Usage("m values must be integers".into()));
            }
            spec.values.iter().map(|&v| ctx.params(v as i64, kappa, beta)).collect()
        }
    };

    let mut cols = vec!["axis_value", "re", "im", "seconds_median"];
    if spec.compare_oracle {
        cols.push("abs_err");
    }
    cols.push("error");
    let mut table = Table::new(&cols);
    let mut failures = 0;
    for (&v, p) in spec.values.iter().zip(&params) {
        let axis_value: Cell = if spec.axis == Axis::M { (v as i64).into() } else { v.into() };
        let mut row = vec![axis_value];
        let mut times = Vec::with_capacity(spec.repeats);
        let mut outcome = None;
        for _ in 0..spec.repeats {
            match ctx.timed(p) {
                Ok((r, s)) => {
                    times.push(s);
                    outcome = Some(Ok(r));
                }
                Err(e) => {
                    outcome = Some(Err(e));
                    break;
                }
            }
        }
        match outcome.expect("repeats ≥ 1") {
            Ok(r) => {
                row.extend([r.value.re.into(), r.value.im.into(), median(times).into()]);
                let mut note = String::new();
                if spec.compare_oracle {
                    match ctx.oracle_error(p, r.value) {
                        Ok(err) => row.push(err.into()),
                        Err(e) => {
                            row.push(Cell::Na);
                            note = format!("oracle: {}", e.message());
                        }
                    }
                }
                row.push(note.as_str().into());
            }
            Err(e) => {
                failures += 1;
                row.extend([Cell::Na, Cell::Na, Cell::Na]);
                if spec.compare_oracle {
                    row.push(Cell::Na);
                }
                row.push(e.message().into());
            }
        }
        table.push(row);
    }
    if failures == table.rows.len() {
        return Err(CliError::Compute(format!("all {failures} sweep rows failed")));
    }
    Ok(table)
}

/// Refuses spectra longer than this unless raised.
pub const DEFAULT_MAX_MODES: u64 = 1_000_000;

pub fn spectrum(ctx: &Context, kappa: f64, beta_minus: f64, eps: f64, max_modes: u64) -> CliResult<Table> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CliError::Usage(format!("eps must be finite and > 0, got {eps}")));
    }
    let base = ctx.params(0, kappa, beta_minus);
    base.validate()?;
    let r_plus = cutoff_mode(kappa, base.alpha());
    let floor_r = r_plus.floor() as u64;
    let at_cutoff = eval_modal_green_with(&EvalParams { m: floor_r, ..base }, &ctx.config)?;
    let top = modes_needed(eps, &base, at_cutoff.value.norm());
    if top > max_modes {
        return Err(CliError::Usage(format!("{} modes needed, above --max-modes {max_modes}", top + 1)));
    }
    let params: Vec<EvalParams> = (0..=top).map(|m| EvalParams { m, ..base }).collect();
    let results = eval_batch(&params, &ctx.config, ctx.threads);
    let mut t = Table::new(&["m", "re", "im", "abs", "r_plus", "modes"]);
    for (p, r) in params.iter().zip(results) {
        let v = r?.value;
        t.push(vec![p.m.into(), v.re.into(), v.im.into(), v.norm().into(), r_plus.into(), top.into()]);
    }
    Ok(t)
}

pub struct BenchSpec {
    pub ms: Vec<i64>,
    pub kappa: f64,
    pub beta_minus: f64,
    pub threads: Vec<usize>,
    pub batch: usize,
    pub repeats: usize,
}

fn same_bits(a: &[mgf_core::Result<ModalResult>], b: &[mgf_core::Result<ModalResult>]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| match (x, y) {
            (Ok(x), Ok(y)) => x.value.re.to_bits() == y.value.re.to_bits() && x.value.im.to_bits() == y.value.im.to_bits(),
            _ => false,
        })
}

/// A batch of `batch` evaluations at mode `m` with `κ` spread over
/// `[κ, 2κ)`. Results are compared bitwise across worker counts before any
/// timing.
pub fn bench(ctx: &Context, spec: &BenchSpec) -> CliResult<Table> {
    check_repeats(spec.repeats)?;
    if spec.ms.is_empty() || spec.threads.is_empty() || spec.batch == 0 {
        return Err(CliError::Usage("bench needs at least one m, one thread count and a non-empty batch".into()));
    }
    if spec.threads.contains(&0) {
        return Err(CliError::Usage("thread counts must be ≥ 1".into()));
    }
    let mut t = Table::new(&["m", "threads", "seconds_median", "speedup_vs_1"]);
    for &m in &spec.ms {
        let params: Vec<EvalParams> = (0..spec.batch)
            .map(|i| ctx.params(m, spec.kappa * (1.0 + i as f64 / spec.batch as f64), spec.beta_minus))
            .collect();
        let reference = eval_batch(&params, &ctx.config, 1);
        if let Some(Err(e)) = reference.iter().find(|r| r.is_err()) {
            return Err(CliError::from(e.clone()));
        }
        for &n in &spec.threads {
            if !same_bits(&reference, &eval_batch(&params, &ctx.config, n)) {
                return Err(CliError::Compute(format!("results at m={m} differ between 1 and {n} workers")));
            }
        }
        let time = |n: usize| {
            median(
                (0..spec.repeats)
                    .map(|_| {
                        let s = Instant::now();
                        eval_batch(&params, &ctx.config, n);
                        s.elapsed().as_secs_f64()
                    })
                    .collect(),
            )
        };
        let one = time(1);
        for &n in &spec.threads {
            let secs = if n == 1 { one } else { time(n) };
            let speedup = if n == 1 { 1.0 } else { one / secs };
            t.push(vec![m.into(), n.into(), secs.into(), speedup.into()]);
        }
    }
    Ok(t)
}

pub fn nodes(ctx: &Context, m: i64, kappa: f64, beta_minus: f64, factors: &[f64]) -> CliResult<Table> {
    if factors.is_empty() || factors.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(CliError::Usage("node factors must be a non-empty list of positive numbers".into()));
    }
    let p = ctx.params(m, kappa, beta_minus);
    let want = eval_reference(&p, &ctx.oracle).map_err(|e| match e {
        MgfError::OracleLimit { .. } => CliError::Usage(e.to_string()),
        e => e.into(),
    })?;
    let mut t = Table::new(&["node_factor", "arc_nodes", "abs_err_vs_oracle"]);
    for &f in factors {
        let cfg = EvalConfig { node_factor: f, ..ctx.config };
        let r = eval_modal_green_with(&p, &cfg)?;
        t.push(vec![f.into(), r.nodes_used.arc.into(), (r.value - want).norm().into()]);
    }
    Ok(t)
}
