//! Volume comparison over Clifford levels: MLTI, two-round distillation and
//! gate synthesis, either for the rotation state alone or for the full
//! R_z(π/2^l) gate built by sequential teleportation.
//!
//! Rows come out ordered by l, then method. Infeasible points stay in the
//! table with `status = infeasible`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::costs::{
    distill_states, gate_volume, synthesis_cost, DistillSearch, DistilledState, MagicCatalog,
};
use crate::error::{Error, ErrorClass, Result};
use crate::exec::map_reduce;
use crate::noise::PhysicalNoise;
use crate::optimizer::{optimize_with, SearchOptions, SearchResult, SearchSpace};
use crate::pipeline::{Target, MAX_LEVELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mlti,
    Distill,
    Synth,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mlti, Method::Distill, Method::Synth];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Mlti => "mlti",
            Method::Distill => "distill",
            Method::Synth => "synth",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Infeasible,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowStatus::Ok => "ok",
            RowStatus::Infeasible => "infeasible",
        })
    }
}

/// One (l, method) cell. `volume` is empty for infeasible rows;
/// `achieved_infidelity` then holds the best value seen, if any, and
/// `plan` the reason.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub l: u32,
    pub method: Method,
    pub target_infidelity: f64,
    pub p_phy: f64,
    pub volume: Option<f64>,
    pub achieved_infidelity: Option<f64>,
    pub status: RowStatus,
    pub plan: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub l_min: u32,
    pub l_max: u32,
    pub target_infidelity: f64,
    pub noise: PhysicalNoise,
    /// Level counts tried for MLTI; the cheapest feasible one wins.
    pub levels: Vec<usize>,
    /// Cost the whole gate instead of one rotation state.
    pub gate_level: bool,
    /// Use V_l for every term of the gate sum.
    pub literal: bool,
    pub search: SearchOptions,
    pub distill: DistillSearch,
}

impl SweepConfig {
    /// l = 4..=25 at target 1e-12, r = 1..=4.
    pub fn standard(noise: PhysicalNoise) -> Self {
        SweepConfig {
            l_min: 4,
            l_max: 25,
            target_infidelity: 1e-12,
            noise,
            levels: (1..=MAX_LEVELS).collect(),
            gate_level: false,
            literal: false,
            search: SearchOptions::default(),
            distill: DistillSearch::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_min < 3 || self.l_min > self.l_max {
            return Err(Error::invalid(format!(
                "level range {}..={} must satisfy 3 <= min <= max",
                self.l_min, self.l_max
            )));
        }
        if !(self.target_infidelity > 0.0 && self.target_infidelity < 1.0) {
            return Err(Error::invalid(format!(
                "target infidelity {} not in (0,1)",
                self.target_infidelity
            )));
        }
        if self.levels.is_empty() {
            return Err(Error::invalid("no MLTI level count given"));
        }
        if let Some(r) = self.levels.iter().find(|r| !(1..=MAX_LEVELS).contains(*r)) {
            return Err(Error::invalid(format!(
                "level count {r} outside 1..={MAX_LEVELS}"
            )));
        }
        Ok(())
    }
}

/// Cheapest MLTI plan for one state, or why there is none.
#[derive(Clone, Debug)]
struct MltiState {
    l: u32,
    best: std::result::Result<(usize, SearchResult), Miss>,
}

#[derive(Clone, Debug, PartialEq)]
struct Miss {
    reason: String,
    best_infidelity: Option<f64>,
}

impl Miss {
    fn from_error(e: &Error) -> Option<Miss> {
        match e {
            Error::Infeasible {
                reason,
                best_infidelity,
            } => Some(Miss {
                reason: reason.clone(),
                best_infidelity: *best_infidelity,
            }),
            other if other.class() == ErrorClass::Infeasible => Some(Miss {
                reason: other.to_string(),
                best_infidelity: None,
            }),
            _ => None,
        }
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn mlti_state(l: u32, cfg: &SweepConfig, catalog: &MagicCatalog) -> Result<MltiState> {
    let target = Target::Clifford(l);
    let mut best: Option<(usize, SearchResult)> = None;
    let mut misses: Vec<String> = Vec::new();
    let mut best_eps = None;
    for &r in &cfg.levels {
        let space = SearchSpace::standard(r, target, cfg.target_infidelity, catalog)?;
        match optimize_with(
            cfg.target_infidelity,
            target,
            cfg.noise,
            catalog,
            &space,
            &cfg.search,
        ) {
            Ok(res) => {
                // Strictly cheaper only, so ties keep the smaller r.
                if best
                    .as_ref()
                    .map_or(true, |(_, b)| res.volume.adjusted < b.volume.adjusted)
                {
                    best = Some((r, res));
                }
            }
            Err(e) => {
                let miss = Miss::from_error(&e).ok_or(e)?;
                best_eps = min_opt(best_eps, miss.best_infidelity);
                misses.push(format!("r={r}: {}", miss.reason));
            }
        }
    }
    Ok(MltiState {
        l,
        best: best.ok_or(Miss {
            reason: misses.join("; "),
            best_infidelity: best_eps,
        }),
    })
}

fn join<T: fmt::Display>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("/")
}

/// Compact plan description, e.g. `r=2 k=2/8 dx=3/5 dz=6/5 magic=-/ideal`.
pub fn plan_summary(r: usize, res: &SearchResult) -> String {
    let lv = &res.plan.levels;
    format!(
        "r={r} k={} dx={} dz={} magic={}",
        join(lv.iter().map(|s| s.k)),
        join(lv.iter().map(|s| s.d_x)),
        join(lv.iter().map(|s| s.d_z)),
        join(lv.iter().map(|s| s.magic_label.as_deref().unwrap_or("-"))),
    )
}

fn distill_summary(s: &DistilledState) -> String {
    if s.d == 0 {
        format!("catalog magic={}", s.magic_label)
    } else {
        format!("two-round d={} magic={}", s.d, s.magic_label)
    }
}

/// Per-level state costs used by gate rows.
#[derive(Clone, Copy, Debug)]
struct StateCost {
    volume: f64,
    infidelity: f64,
    tag: char,
}

struct Row<'a> {
    cfg: &'a SweepConfig,
    l: u32,
    method: Method,
}

impl Row<'_> {
    fn ok(self, volume: f64, achieved: f64, plan: String) -> SweepRow {
        SweepRow {
            l: self.l,
            method: self.method,
            target_infidelity: self.cfg.target_infidelity,
            p_phy: self.cfg.noise.p_phy(),
            volume: Some(volume),
            achieved_infidelity: Some(achieved),
            status: RowStatus::Ok,
            plan,
        }
    }

    fn infeasible(self, best: Option<f64>, reason: String) -> SweepRow {
        SweepRow {
            l: self.l,
            method: self.method,
            target_infidelity: self.cfg.target_infidelity,
            p_phy: self.cfg.noise.p_phy(),
            volume: None,
            achieved_infidelity: best,
            status: RowStatus::Infeasible,
            plan: reason,
        }
    }
}

/// Runs the comparison. MLTI searches for different l run through
/// `cfg.search.exec`; everything else is cheap and sequential.
pub fn sweep(cfg: &SweepConfig, catalog: &MagicCatalog) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let first = if cfg.gate_level { 3 } else { cfg.l_min };
    let ls: Vec<u32> = (first..=cfg.l_max).collect();

    let mlti: Vec<Result<MltiState>> = map_reduce(
        ls.len(),
        cfg.search.exec,
        Vec::new(),
        |i| vec![mlti_state(ls[i], cfg, catalog)],
        |mut a, b| {
            a.extend(b);
            a
        },
    );
    let mlti: BTreeMap<u32, MltiState> = mlti
        .into_iter()
        .map(|m| m.map(|m| (m.l, m)))
        .collect::<Result<_>>()?;

    let distill: BTreeMap<u32, Result<DistilledState>> = distill_states(
        cfg.l_max,
        cfg.target_infidelity,
        cfg.noise,
        catalog,
        cfg.distill,
    )
    .into_iter()
    .zip(3..)
    .map(|(d, l)| (l, d))
    .collect();
    for d in distill.values() {
        if let Err(e) = d {
            if Miss::from_error(e).is_none() {
                return Err(e.clone());
            }
        }
    }

    let synth = match synthesis_cost(cfg.target_infidelity, catalog) {
        Ok(s) => Ok(s),
        Err(e) => Err(Miss::from_error(&e).ok_or(e)?),
    };

    let mut rows = Vec::with_capacity(3 * (cfg.l_max - cfg.l_min + 1) as usize);
    for l in cfg.l_min..=cfg.l_max {
        let row = |method| Row { cfg, l, method };
        if cfg.gate_level {
            rows.push(gate_row(row(Method::Mlti), &mlti, &distill, true));
            rows.push(gate_row(row(Method::Distill), &mlti, &distill, false));
        } else {
            rows.push(match &mlti[&l].best {
                Ok((r, res)) => row(Method::Mlti).ok(
                    res.volume.adjusted,
                    res.report.infidelity,
                    plan_summary(*r, res),
                ),
                Err(m) => row(Method::Mlti).infeasible(m.best_infidelity, m.reason.clone()),
            });
            rows.push(match &distill[&l] {
                Ok(s) => row(Method::Distill).ok(s.volume, s.infidelity, distill_summary(s)),
                Err(e) => {
                    let m = Miss::from_error(e).expect("checked above");
                    row(Method::Distill).infeasible(m.best_infidelity, m.reason)
                }
            });
        }
        rows.push(match &synth {
            Ok(s) => {
                let plan = format!("n_t={} delta={:.3e} magic={}", s.n_t, s.delta, s.entry);
                // n_T·ε_T plus the squared precision that n_T gates buy.
                let eps_t = catalog.get(&s.entry)?.infidelity;
                let achieved = s.n_t as f64 * eps_t + 2f64.powf(-2.0 * s.n_t as f64 / 3.0);
                row(Method::Synth).ok(s.volume, achieved, plan)
            }
            Err(m) => row(Method::Synth).infeasible(m.best_infidelity, m.reason.clone()),
        });
    }
    Ok(rows)
}

/// Gate built from states of levels 3..=l; with `mixed` each level takes
/// the cheaper of MLTI and distillation, otherwise distillation only.
fn gate_row(
    row: Row<'_>,
    mlti: &BTreeMap<u32, MltiState>,
    distill: &BTreeMap<u32, Result<DistilledState>>,
    mixed: bool,
) -> SweepRow {
    let l = row.l;
    let levels: Vec<u32> = if row.cfg.literal {
        vec![l]
    } else {
        (3..=l).collect()
    };
    let mut states: BTreeMap<u32, StateCost> = BTreeMap::new();
    for &i in &levels {
        let d = distill[&i].as_ref().ok().map(|s| StateCost {
            volume: s.volume,
            infidelity: s.infidelity,
            tag: 'd',
        });
        let m = if mixed {
            mlti[&i].best.as_ref().ok().map(|(_, res)| StateCost {
                volume: res.volume.adjusted,
                infidelity: res.report.infidelity,
                tag: 'm',
            })
        } else {
            None
        };
        let pick = match (m, d) {
            (Some(m), Some(d)) => Some(if m.volume < d.volume { m } else { d }),
            (m, d) => m.or(d),
        };
        match pick {
            Some(s) => {
                states.insert(i, s);
            }
            None => return row.infeasible(None, format!("no state source for level {i}")),
        }
    }
    let volumes: BTreeMap<u32, f64> = states.iter().map(|(&i, s)| (i, s.volume)).collect();
    let volume = match gate_volume(l, &volumes, row.cfg.literal) {
        Ok(v) => v,
        Err(e) => return row.infeasible(None, e.to_string()),
    };
    // Level i is consumed with probability 2^{-(l-i)}.
    let achieved: f64 = (3..=l)
        .map(|i| {
            let s = if row.cfg.literal {
                &states[&l]
            } else {
                &states[&i]
            };
            s.infidelity / 2f64.powi((l - i) as i32)
        })
        .sum();
    let sources: String = states.values().map(|s| s.tag).collect();
    let plan = if row.cfg.literal {
        format!("literal sources={sources}")
    } else {
        format!("sources={sources}")
    };
    row.ok(volume, achieved, plan)
}

/// Volumes by l for one method, skipping infeasible rows.
pub fn volumes_of(rows: &[SweepRow], method: Method) -> Vec<(u32, f64)> {
    rows.iter()
        .filter(|r| r.method == method)
        .filter_map(|r| r.volume.map(|v| (r.l, v)))
        .collect()
}
