use std::io::Write as _;
use std::path::PathBuf;

use clap::Args;

use mlti::exec::Execution;
use mlti::level1mc::{build_gadget, run as mc_run, McNoise};
use mlti::noise::PhysicalNoise;
use mlti::optimizer::{optimize_with, SearchOptions, SearchSpace};
use mlti::pipeline::{evaluate_plan_with, EvalOptions, Plan, Target};
use mlti::sweep::{plan_summary, sweep, Method, RowStatus, SweepConfig, SweepRow};
use mlti::Error;

use crate::config::{load_catalog, parse_dims, parse_levels, read_json, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{sink, write_json, write_mc, write_sweep, McRow};
use crate::verify::{self, VerifyConfig, SUITES};

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON file with default values for any of the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Magic-state catalog (JSON).
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Accept the shipped placeholder catalog.
    #[arg(long)]
    pub allow_placeholder: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run without the worker pool.
    #[arg(long)]
    pub sequential: bool,
}

impl Common {
    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConsumeK {
    /// Level r consumes k outputs of level r-1 (default).
    #[arg(long, overrides_with = "no_consume_k")]
    pub consume_k: bool,
    /// Count one lower-level output per level instead.
    #[arg(long, overrides_with = "consume_k")]
    pub no_consume_k: bool,
}

impl ConsumeK {
    fn resolve(&self, cfg: &RunConfig) -> bool {
        if self.consume_k {
            true
        } else if self.no_consume_k {
            false
        } else {
            cfg.consume_k.unwrap_or(true)
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    /// Plan file (JSON).
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub pphys: Option<f64>,
    #[command(flatten)]
    pub consume: ConsumeK,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SearchArgs {
    /// Physical error rate(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub pphys: Vec<f64>,
    /// Target infidelity(ies), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub target: Vec<f64>,
    /// Clifford level or inclusive range, e.g. 4..25.
    #[arg(long)]
    pub levels: Option<String>,
    /// MLTI level counts to try, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub r: Vec<usize>,
    #[command(flatten)]
    pub consume: ConsumeK,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SweepArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    /// Cost the full R_z(π/2^l) gate instead of the rotation state.
    #[arg(long)]
    pub gate: bool,
    /// Use V_l for every term of the gate sum.
    #[arg(long)]
    pub literal_s61: bool,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplies every tolerance; 0 makes any rounding error fail.
    #[arg(long, default_value_t = 1.0)]
    pub tolerance_scale: f64,
    /// Random spaces for the optimizer suite.
    #[arg(long, default_value_t = 20)]
    pub spaces: usize,
    /// Run only these suites (repeatable).
    #[arg(long)]
    pub suite: Vec<String>,
    /// Print the suite names and exit.
    #[arg(long)]
    pub list: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct McArgs {
    #[arg(long, value_delimiter = ',')]
    pub pphys: Vec<f64>,
    /// Patch sizes as DXxDZ, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<String>,
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

fn noise(p: f64) -> CliResult<PhysicalNoise> {
    Ok(PhysicalNoise::new(p)?)
}

fn or_config<T: Clone>(flag: Vec<T>, cfg: Option<&Vec<T>>, default: &[T]) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else if let Some(v) = cfg {
        v.clone()
    } else {
        default.to_vec()
    }
}

fn catalog_for(common: &Common, cfg: &RunConfig) -> CliResult<mlti::costs::MagicCatalog> {
    load_catalog(
        common.catalog.as_deref().or(cfg.catalog.as_deref()),
        common.allow_placeholder || cfg.allow_placeholder.unwrap_or(false),
    )
}

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let plan: Plan = read_json(&args.plan)?;
    let p = args
        .pphys
        .or(cfg.pphys.as_ref().and_then(|v| v.first().copied()))
        .unwrap_or(5e-4);
    // A single plan needs no realistic catalog; the placeholder is accepted.
    let catalog = load_catalog(
        args.common.catalog.as_deref().or(cfg.catalog.as_deref()),
        true,
    )?;
    let opts = EvalOptions {
        consume_k: args.consume.resolve(&cfg),
        level1: None,
    };
    let report = evaluate_plan_with(&plan, noise(p)?, &catalog, &opts)?;
    write_json(sink(args.common.out.as_deref())?, &report)
}

struct Grid {
    ps: Vec<f64>,
    targets: Vec<f64>,
    levels: (u32, u32),
    rs: Vec<usize>,
    consume_k: bool,
}

fn grid(args: &SearchArgs, cfg: &RunConfig, default_levels: &str) -> CliResult<Grid> {
    let levels = args
        .levels
        .clone()
        .or(cfg.levels.clone())
        .unwrap_or_else(|| default_levels.to_string());
    Ok(Grid {
        ps: or_config(args.pphys.clone(), cfg.pphys.as_ref(), &[5e-4]),
        targets: or_config(args.target.clone(), None, &[cfg.target.unwrap_or(1e-12)]),
        levels: parse_levels(&levels)?,
        rs: or_config(args.r.clone(), cfg.r.as_ref(), &[1, 2, 3, 4]),
        consume_k: args.consume.resolve(cfg),
    })
}

/// One row per (p, target, l, r); exits 2 when no row is feasible.
pub fn cmd_optimize(args: &SearchArgs) -> CliResult<()> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let g = grid(args, &cfg, "20")?;
    let catalog = catalog_for(&args.common, &cfg)?;
    let opts = SearchOptions {
        consume_k: g.consume_k,
        exec: args.common.exec(),
        ..SearchOptions::default()
    };
    let mut rows = Vec::new();
    for &p in &g.ps {
        let n = noise(p)?;
        for &eps in &g.targets {
            for l in g.levels.0..=g.levels.1 {
                let target = Target::Clifford(l);
                for &r in &g.rs {
                    let space = SearchSpace::standard(r, target, eps, &catalog)?;
                    let mut row = SweepRow {
                        l,
                        method: Method::Mlti,
                        target_infidelity: eps,
                        p_phy: p,
                        volume: None,
                        achieved_infidelity: None,
                        status: RowStatus::Infeasible,
                        plan: String::new(),
                    };
                    match optimize_with(eps, target, n, &catalog, &space, &opts) {
                        Ok(res) => {
                            row.volume = Some(res.volume.adjusted);
                            row.achieved_infidelity = Some(res.report.infidelity);
                            row.status = RowStatus::Ok;
                            row.plan = plan_summary(r, &res);
                        }
                        Err(Error::Infeasible {
                            reason,
                            best_infidelity,
                        }) => {
                            row.achieved_infidelity = best_infidelity;
                            row.plan = format!("r={r}: {reason}");
                        }
                        Err(e) if e.class() == mlti::error::ErrorClass::Infeasible => {
                            row.plan = format!("r={r}: {e}");
                        }
                        Err(e) => return Err(e.into()),
                    }
                    rows.push(row);
                }
            }
        }
    }
    write_sweep(sink(args.common.out.as_deref())?, &rows)?;
    if rows.iter().all(|r| r.status == RowStatus::Infeasible) {
        return Err(Error::Infeasible {
            reason: "no searched configuration reaches the target".into(),
            best_infidelity: rows
                .iter()
                .filter_map(|r| r.achieved_infidelity)
                .min_by(f64::total_cmp),
        }
        .into());
    }
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let s = &args.search;
    let cfg = RunConfig::load(s.common.config.as_deref())?;
    let g = grid(s, &cfg, "4..25")?;
    let catalog = catalog_for(&s.common, &cfg)?;
    let mut rows = Vec::new();
    for &p in &g.ps {
        for &eps in &g.targets {
            let sc = SweepConfig {
                l_min: g.levels.0,
                l_max: g.levels.1,
                target_infidelity: eps,
                levels: g.rs.clone(),
                gate_level: args.gate || cfg.gate.unwrap_or(false),
                literal: args.literal_s61 || cfg.literal_s61.unwrap_or(false),
                search: SearchOptions {
                    consume_k: g.consume_k,
                    exec: s.common.exec(),
                    ..SearchOptions::default()
                },
                ..SweepConfig::standard(noise(p)?)
            };
            rows.extend(sweep(&sc, &catalog)?);
        }
    }
    write_sweep(sink(s.common.out.as_deref())?, &rows)
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    if args.list {
        let mut out = sink(args.common.out.as_deref())?;
        for name in SUITES {
            writeln!(out, "{name}").map_err(|source| CliError::Io {
                path: "<output>".into(),
                source,
            })?;
        }
        return Ok(());
    }
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    if !(args.tolerance_scale >= 0.0 && args.tolerance_scale.is_finite()) {
        return Err(CliError::input(format!(
            "tolerance scale {} must be finite and >= 0",
            args.tolerance_scale
        )));
    }
    let vc = VerifyConfig {
        seed: args.seed.or(cfg.seed).unwrap_or(2024),
        tolerance_scale: args.tolerance_scale,
        spaces: args.spaces,
        exec: args.common.exec(),
    };
    let summary = verify::run(&vc, &args.suite).map_err(CliError::Input)?;
    write_json(sink(args.common.out.as_deref())?, &summary)?;
    if summary.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = summary
            .suites
            .iter()
            .filter(|s| !s.passed)
            .map(|s| s.name.as_str())
            .collect();
        Err(CliError::Verify(failed.join(", ")))
    }
}

pub fn cmd_mc(args: &McArgs) -> CliResult<()> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let ps = or_config(args.pphys.clone(), cfg.pphys.as_ref(), &[1e-3]);
    let dims = or_config(args.dims.clone(), cfg.dims.as_ref(), &["3x9".to_string()]);
    let shots = args.shots.or(cfg.shots).unwrap_or(100_000);
    let seed = args.seed.or(cfg.seed).unwrap_or(2024);
    if shots == 0 {
        return Err(CliError::input("--shots must be at least 1"));
    }
    let mut rows = Vec::new();
    for d in &dims {
        let (d_x, d_z) = parse_dims(d)?;
        let circuit = build_gadget(d_x, d_z)?;
        for &p in &ps {
            let summary = mc_run(
                &circuit,
                &McNoise::circuit_level(noise(p)?),
                shots,
                seed,
                args.common.exec(),
            )?;
            rows.push(McRow {
                d_x,
                d_z,
                p_phy: p,
                summary,
            });
        }
    }
    write_mc(sink(args.common.out.as_deref())?, &rows)
}
