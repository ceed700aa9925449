//! Volume-minimizing search over MLTI plans.
//!
//! A search combination fixes every k and magic-state entry; its distances
//! form a lattice. Each combination is searched best-first from the smallest
//! distances, popping points in order of a volume lower bound that grows with
//! every distance. Feasibility is not monotone in d_x (the Z rate prefactor
//! grows with it), so there is no bracketing shortcut; instead a whole
//! combination is dropped when even the componentwise smallest logical rates
//! over its box miss the target. Combinations are processed in lower-bound
//! order, in parallel batches, against the best volume found so far.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::costs::{protocol_volume, LevelVolumeInput, MagicCatalog, MagicEntry, VolumeReport};
use crate::error::{Error, Result};
use crate::exec::{map_reduce, Execution};
use crate::injection::{accept_rate_ideal, input_angle};
use crate::level1mc::GROUP_SIZE;
use crate::noise::{is_valid_distance, LogicalRates, PhysicalNoise};
use crate::pipeline::{
    derive_angles, evaluate_plan_with, evaluate_with_rates, level1_memory_rates, pump_feasible_ks,
    pump_rates, surgery_rates, EvalOptions, EvalReport, Level1Rates, LevelAngles, LevelSpec, Plan,
    PlanRates, Target, MAX_LEVELS, PUMP_WINDOW,
};
use crate::qstate::Angle;

/// Default "sufficiently large" distance; the anchor point seeds each search.
pub const DEFAULT_ANCHOR: u32 = 31;

/// Largest enumeration exhaustive_oracle accepts.
pub const ORACLE_LIMIT: u128 = 1_000_000;

/// Combinations handed to the worker pool per round.
const BATCH: usize = 64;

/// All k ≥ 2 whose input angle for output `beta` lies within `window` of ±π/8.
pub fn k_candidates(beta: Angle, window: f64) -> Result<Vec<u32>> {
    let b = beta.radians();
    if b == 0.0 || b.abs() >= FRAC_PI_2 {
        return Err(Error::invalid(format!(
            "beta = {b} must be non-zero with |beta| < pi/2"
        )));
    }
    let ks = pump_feasible_ks(beta, window);
    if ks.is_empty() {
        return Err(Error::Infeasible {
            reason: format!("no k puts the input angle for beta = {b:e} within {window} of pi/8"),
            best_infidelity: None,
        });
    }
    Ok(ks)
}

/// Predicted contribution of magic-state error ε_T to a level with `k`
/// copies and output angle `beta`: k·ε_T·|β|^{2(1−1/k)}.
pub fn magic_contribution(eps_t: f64, k: u32, beta: Angle) -> f64 {
    let k = f64::from(k);
    k * eps_t * beta.radians().abs().powf(2.0 * (1.0 - 1.0 / k))
}

/// Catalog entries worth trying for a pump feeding a level with `k` copies and
/// output `beta`: those whose predicted contribution is within [0.01, 1]× the
/// target, the cheapest entry below that window, and the cleanest entry.
pub fn magic_targets<'a>(
    eps_target: f64,
    k: u32,
    beta: Angle,
    catalog: &'a MagicCatalog,
) -> Vec<&'a MagicEntry> {
    let lo = 0.01 * eps_target;
    let mut keep: BTreeSet<usize> = BTreeSet::new();
    let mut below: Option<usize> = None;
    for (i, e) in catalog.entries().iter().enumerate() {
        let c = magic_contribution(e.infidelity, k, beta);
        if c > eps_target {
            continue;
        }
        if c >= lo {
            keep.insert(i);
        } else if below.map_or(true, |j| e.volume < catalog.entries()[j].volume) {
            below = Some(i);
        }
    }
    keep.extend(below);
    let cleanest = catalog.cleanest();
    if let Some(i) = catalog
        .entries()
        .iter()
        .position(|e| e.label == cleanest.label)
    {
        keep.insert(i);
    }
    keep.into_iter().map(|i| &catalog.entries()[i]).collect()
}

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: u32,
    pub max: u32,
}

impl Bounds {
    pub fn new(min: u32, max: u32) -> Self {
        Bounds { min, max }
    }

    pub fn single(v: u32) -> Self {
        Bounds { min: v, max: v }
    }

    fn contains(&self, v: u32) -> bool {
        (self.min..=self.max).contains(&v)
    }

    fn distances(&self) -> Vec<u32> {
        (self.min..=self.max)
            .filter(|&d| is_valid_distance(d))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelBounds {
    pub k: Bounds,
    pub d_x: Bounds,
    /// At level 1, d_z = 3k; these bounds only filter k.
    pub d_z: Bounds,
    /// Magic labels for the pump feeding this level (ignored at level 1).
    #[serde(default)]
    pub magic: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub levels: Vec<LevelBounds>,
    #[serde(default = "default_anchor")]
    pub anchor: u32,
    /// Pump window used to prune k at levels ≥ 2.
    #[serde(default = "default_window")]
    pub k_window: f64,
}

fn default_anchor() -> u32 {
    DEFAULT_ANCHOR
}

fn default_window() -> f64 {
    PUMP_WINDOW
}

impl SearchSpace {
    pub fn validate(&self, catalog: &MagicCatalog) -> Result<()> {
        let r = self.levels.len();
        if !(1..=MAX_LEVELS).contains(&r) {
            return Err(Error::invalid(format!(
                "level count {r} outside 1..={MAX_LEVELS}"
            )));
        }
        if !(self.k_window > 0.0) {
            return Err(Error::invalid(format!(
                "k window {} must be positive",
                self.k_window
            )));
        }
        for (i, lv) in self.levels.iter().enumerate() {
            let n = i + 1;
            for (name, b) in [("k", lv.k), ("d_x", lv.d_x), ("d_z", lv.d_z)] {
                if b.min > b.max {
                    return Err(Error::invalid(format!(
                        "level {n}: empty {name} bounds {}..={}",
                        b.min, b.max
                    )));
                }
            }
            if lv.d_x.distances().is_empty() {
                return Err(Error::invalid(format!(
                    "level {n}: no supported d_x in bounds"
                )));
            }
            if i == 0 {
                if level1_ks(lv).is_empty() {
                    return Err(Error::invalid(
                        "level 1: no k with 3k inside the d_z bounds",
                    ));
                }
                continue;
            }
            if lv.d_z.distances().is_empty() {
                return Err(Error::invalid(format!(
                    "level {n}: no supported d_z in bounds"
                )));
            }
            if lv.k.max < 2 {
                return Err(Error::invalid(format!(
                    "level {n}: k bounds exclude every k >= 2"
                )));
            }
            if lv.magic.is_empty() {
                return Err(Error::invalid(format!(
                    "level {n}: no magic-state candidates"
                )));
            }
            for label in &lv.magic {
                catalog.get(label)?;
            }
        }
        Ok(())
    }

    /// Bounds used by the sweeps: k₁ ≤ 20 and distances up to 31 (k₁·3 up to
    /// 60), with magic candidates from [`magic_targets`] over every reachable k.
    pub fn standard(
        r: usize,
        target: Target,
        eps_target: f64,
        catalog: &MagicCatalog,
    ) -> Result<Self> {
        if !(1..=MAX_LEVELS).contains(&r) {
            return Err(Error::invalid(format!(
                "level count {r} outside 1..={MAX_LEVELS}"
            )));
        }
        let d = Bounds::new(3, DEFAULT_ANCHOR);
        let mut levels = vec![LevelBounds {
            k: Bounds::new(1, 20),
            d_x: d,
            d_z: Bounds::new(3, 60),
            magic: Vec::new(),
        }];
        for _ in 1..r {
            levels.push(LevelBounds {
                k: Bounds::new(2, crate::pipeline::MAX_K),
                d_x: d,
                d_z: d,
                magic: Vec::new(),
            });
        }
        let mut space = SearchSpace {
            levels,
            anchor: DEFAULT_ANCHOR,
            k_window: PUMP_WINDOW,
        };
        let mut labels: Vec<BTreeSet<String>> = vec![BTreeSet::new(); r];
        for upper in upper_tuples(&space, target.angle()) {
            for (i, &k) in upper.ks.iter().enumerate() {
                let level = i + 1;
                let beta = upper.betas[i];
                for e in magic_targets(eps_target, k, beta, catalog) {
                    labels[level].insert(e.label.clone());
                }
            }
        }
        for (lv, set) in space.levels.iter_mut().zip(labels).skip(1) {
            // Catalog order keeps tie-break indices stable.
            lv.magic = catalog
                .entries()
                .iter()
                .filter(|e| set.contains(&e.label))
                .map(|e| e.label.clone())
                .collect();
        }
        Ok(space)
    }
}

fn level1_ks(lv: &LevelBounds) -> Vec<u32> {
    (lv.k.min.max(1)..=lv.k.max)
        .filter(|&k| lv.d_z.contains(GROUP_SIZE * k))
        .collect()
}

/// Counters describing how much work a search did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Plans evaluated.
    pub evaluated: u64,
    /// k/magic combinations in the space with feasible angles.
    pub combinations: u64,
    /// Combinations skipped by the volume lower bound.
    pub pruned: u64,
    /// Feasible points with an evaluated infeasible successor.
    pub monotonicity_violations: u64,
    /// Evaluated acceptance rates above the bound used for pruning.
    pub bound_violations: u64,
}

impl SearchStats {
    fn merge(self, o: SearchStats) -> SearchStats {
        SearchStats {
            evaluated: self.evaluated + o.evaluated,
            combinations: self.combinations + o.combinations,
            pruned: self.pruned + o.pruned,
            monotonicity_violations: self.monotonicity_violations + o.monotonicity_violations,
            bound_violations: self.bound_violations + o.bound_violations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub plan: Plan,
    pub report: EvalReport,
    pub volume: VolumeReport,
    pub stats: SearchStats,
}

/// How each k/magic combination's distance lattice is searched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Exact when the whole space has at most [`ORACLE_LIMIT`] plans, local
    /// otherwise.
    #[default]
    Auto,
    /// Branch and bound; returns the same plan as [`exhaustive_oracle`].
    Exact,
    /// Greedy descent polished by radius-1 neighborhood scans.
    Local,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub consume_k: bool,
    pub exec: Execution,
    pub strategy: Strategy,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            consume_k: true,
            exec: Execution::Parallel,
            strategy: Strategy::Auto,
        }
    }
}

/// Parameter tuple for tie-breaks: (k, d_x, d_z, magic index) per level.
type Key = Vec<(u32, u32, u32, usize)>;

#[derive(Clone, Debug)]
struct Candidate {
    volume: f64,
    key: Key,
    plan: Plan,
    report: EvalReport,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    match a.volume.total_cmp(&b.volume) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.key < b.key,
    }
}

fn pick(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if better(&b, &a) { b } else { a }),
        (a, b) => a.or(b),
    }
}

#[derive(Clone, Debug, Default)]
struct Outcome {
    best: Option<Candidate>,
    best_infidelity: Option<f64>,
    stats: SearchStats,
}

impl Outcome {
    fn merge(self, o: Outcome) -> Outcome {
        Outcome {
            best: pick(self.best, o.best),
            best_infidelity: match (self.best_infidelity, o.best_infidelity) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
            stats: self.stats.merge(o.stats),
        }
    }

    fn saw(&mut self, infidelity: f64) {
        self.best_infidelity = Some(
            self.best_infidelity
                .map_or(infidelity, |b| b.min(infidelity)),
        );
    }
}

/// k values of levels 2..r with the output angle each one must reach.
struct Upper {
    ks: Vec<u32>,
    betas: Vec<Angle>,
}

/// Enumerates k₂..k_r top-down, keeping only pump-feasible choices.
fn upper_tuples(space: &SearchSpace, gamma: Angle) -> Vec<Upper> {
    let r = space.levels.len();
    let mut out = Vec::new();
    let mut ks = vec![0; r.saturating_sub(1)];
    let mut betas = vec![Angle::ZERO; r.saturating_sub(1)];
    fn rec(
        space: &SearchSpace,
        level: usize,
        beta: Angle,
        ks: &mut Vec<u32>,
        betas: &mut Vec<Angle>,
        out: &mut Vec<Upper>,
    ) {
        if level == 0 {
            out.push(Upper {
                ks: ks.clone(),
                betas: betas.clone(),
            });
            return;
        }
        let bounds = space.levels[level].k;
        let Ok(cands) = k_candidates(beta, space.k_window) else {
            return;
        };
        for k in cands.into_iter().filter(|&k| bounds.contains(k)) {
            let Ok(alpha) = input_angle(beta, k) else {
                continue;
            };
            let s = if alpha.radians() < 0.0 { -1.0 } else { 1.0 };
            let Ok(next) = Angle::new(s * PI / 8.0 - alpha.radians()) else {
                continue;
            };
            if next.radians().abs() >= PUMP_WINDOW || next.radians() == 0.0 {
                continue;
            }
            ks[level - 1] = k;
            betas[level - 1] = beta;
            rec(space, level - 1, next, ks, betas, out);
        }
    }
    rec(space, r - 1, gamma, &mut ks, &mut betas, &mut out);
    out
}

/// A fixed choice of every k and magic entry.
#[derive(Clone, Debug)]
struct Combo {
    ks: Vec<u32>,
    magic: Vec<usize>,
    /// Noiseless acceptance per level.
    accept: Vec<f64>,
    /// Upper bound on the noisy acceptance per level ≥ 2 over the whole
    /// box (index 0 unused); filled by [`Context::with_caps`].
    caps: Vec<f64>,
}

struct Context<'a> {
    space: &'a SearchSpace,
    target: Target,
    eps: f64,
    noise: PhysicalNoise,
    catalog: &'a MagicCatalog,
    consume_k: bool,
    /// Distance axes: d_x¹, then (d_x, d_z) for each level ≥ 2.
    axes: Vec<Vec<u32>>,
    level1: HashMap<(u32, u32), Level1Rates>,
    floors: RateBox,
    ceilings: RateBox,
}

/// Componentwise extreme (minimum or maximum) logical rates over the
/// distance box.
struct RateBox {
    /// Level-1 memory, keyed by d_z¹.
    memory1: HashMap<u32, LogicalRates>,
    /// Pump of the level-1 output, keyed by d_z¹.
    pump1: HashMap<u32, LogicalRates>,
    /// pump[r]: pump of level r+1's output (r ≥ 1); index 0 unused.
    pump: Vec<LogicalRates>,
    /// surgery[r]: surgery of level r+1 (r ≥ 1); index 0 unused.
    surgery: Vec<LogicalRates>,
}

fn extreme<I: IntoIterator<Item = Result<LogicalRates>>>(
    it: I,
    upper: bool,
) -> Result<LogicalRates> {
    let pick = |a: f64, b: f64| if upper { a.max(b) } else { a.min(b) };
    let start = if upper { 0.0 } else { f64::INFINITY };
    let mut m = LogicalRates {
        p_x: start,
        p_z: start,
    };
    for r in it {
        let r = r?;
        m.p_x = pick(m.p_x, r.p_x);
        m.p_z = pick(m.p_z, r.p_z);
    }
    Ok(m)
}

impl RateBox {
    fn new(axes: &[Vec<u32>], dz1s: &[u32], noise: PhysicalNoise, upper: bool) -> Result<Self> {
        let floor_of = |it: &mut dyn Iterator<Item = Result<LogicalRates>>| extreme(it, upper);
        let mut memory1 = HashMap::new();
        let mut pump1 = HashMap::new();
        for &dz in dz1s {
            memory1.insert(
                dz,
                floor_of(&mut axes[0].iter().map(|&dx| level1_memory_rates(dx, dz, noise)))?,
            );
            pump1.insert(
                dz,
                floor_of(&mut axes[0].iter().map(|&dx| pump_rates(dx, dz, noise)))?,
            );
        }
        let levels = (axes.len() + 1) / 2;
        let mut pump = vec![LogicalRates::ZERO];
        let mut surgery = vec![LogicalRates::ZERO];
        for r in 1..levels {
            let pairs = || {
                axes[2 * r - 1]
                    .iter()
                    .flat_map(move |&dx| axes[2 * r].iter().map(move |&dz| (dx, dz)))
            };
            pump.push(floor_of(
                &mut pairs().map(|(dx, dz)| pump_rates(dx, dz, noise)),
            )?);
            surgery.push(floor_of(
                &mut pairs().map(|(dx, dz)| surgery_rates(dx, dz, noise)),
            )?);
        }
        Ok(RateBox {
            memory1,
            pump1,
            pump,
            surgery,
        })
    }
}

fn combos(space: &SearchSpace, target: Target) -> Vec<Combo> {
    let gamma = target.angle();
    let mut out = Vec::new();
    let k1s = level1_ks(&space.levels[0]);
    for upper in upper_tuples(space, gamma) {
        for &k1 in &k1s {
            let mut ks = vec![k1];
            ks.extend(&upper.ks);
            let Ok(angles) = derive_angles(gamma, &ks) else {
                continue;
            };
            let accept = angles
                .iter()
                .zip(&ks)
                .map(|(a, &k): (&LevelAngles, _)| accept_rate_ideal(a.alpha, k))
                .collect::<Vec<_>>();
            let mut magic = vec![0usize; ks.len()];
            loop {
                out.push(Combo {
                    ks: ks.clone(),
                    magic: magic.clone(),
                    accept: accept.clone(),
                    caps: Vec::new(),
                });
                // Odometer over magic indices of levels ≥ 2.
                let mut i = 1;
                while i < ks.len() {
                    magic[i] += 1;
                    if magic[i] < space.levels[i].magic.len() {
                        break;
                    }
                    magic[i] = 0;
                    i += 1;
                }
                if i >= ks.len() {
                    break;
                }
            }
        }
    }
    out
}

impl<'a> Context<'a> {
    fn new(
        space: &'a SearchSpace,
        target: Target,
        eps: f64,
        noise: PhysicalNoise,
        catalog: &'a MagicCatalog,
        opts: &SearchOptions,
    ) -> Result<Self> {
        space.validate(catalog)?;
        if !(eps.is_finite() && eps > 0.0 && eps < 1.0) {
            return Err(Error::Probability(format!("target infidelity = {eps}")));
        }
        let mut axes = vec![space.levels[0].d_x.distances()];
        for lv in &space.levels[1..] {
            axes.push(lv.d_x.distances());
            axes.push(lv.d_z.distances());
        }
        let dz1s: Vec<u32> = level1_ks(&space.levels[0])
            .into_iter()
            .map(|k| GROUP_SIZE * k)
            .collect();
        let pairs: Vec<(u32, u32)> = dz1s
            .iter()
            .flat_map(|&dz| axes[0].iter().map(move |&d| (d, dz)))
            .collect();
        let rates = map_reduce(
            pairs.len(),
            opts.exec,
            Ok(Vec::new()),
            |i| Level1Rates::model(pairs[i].0, pairs[i].1, noise).map(|r| vec![(pairs[i], r)]),
            |a: Result<Vec<_>>, b| {
                let (mut a, b) = (a?, b?);
                a.extend(b);
                Ok(a)
            },
        )?;
        Ok(Context {
            space,
            target,
            eps,
            noise,
            catalog,
            consume_k: opts.consume_k,
            floors: RateBox::new(&axes, &dz1s, noise, false)?,
            ceilings: RateBox::new(&axes, &dz1s, noise, true)?,
            axes,
            level1: rates.into_iter().collect(),
        })
    }

    fn values(&self, point: &[usize]) -> Vec<u32> {
        point.iter().zip(&self.axes).map(|(&i, ax)| ax[i]).collect()
    }

    fn plan(&self, c: &Combo, point: &[usize]) -> (Plan, Key) {
        let v = self.values(point);
        let mut levels = Vec::with_capacity(c.ks.len());
        let mut key = Vec::with_capacity(c.ks.len());
        for (r, &k) in c.ks.iter().enumerate() {
            let (d_x, d_z) = if r == 0 {
                (v[0], GROUP_SIZE * k)
            } else {
                (v[2 * r - 1], v[2 * r])
            };
            let magic_label = (r > 0).then(|| self.space.levels[r].magic[c.magic[r]].clone());
            levels.push(LevelSpec {
                k,
                d_x,
                d_z,
                magic_label,
            });
            key.push((k, d_x, d_z, c.magic[r]));
        }
        (
            Plan {
                levels,
                target: self.target,
            },
            key,
        )
    }

    /// Volume with every acceptance replaced by an upper bound: noiseless
    /// at level 1 times the exact discard survival, noiseless with slack above.
    fn lower_bound(&self, c: &Combo, point: &[usize]) -> f64 {
        let v = self.values(point);
        let mut inputs = Vec::with_capacity(c.ks.len());
        for (r, &k) in c.ks.iter().enumerate() {
            let (d_x, d_z, accept, magic_volume) = if r == 0 {
                let dz = GROUP_SIZE * k;
                let keep = 1.0 - self.level1[&(v[0], dz)].p_discard;
                (v[0], dz, c.accept[0] * keep, 0.0)
            } else {
                let label = &self.space.levels[r].magic[c.magic[r]];
                let vol = self.catalog.get(label).map_or(0.0, |e| e.volume);
                (v[2 * r - 1], v[2 * r], c.caps[r], vol)
            };
            inputs.push(LevelVolumeInput {
                k,
                d_x,
                d_z,
                accept,
                magic_volume,
            });
        }
        protocol_volume(&inputs, self.consume_k).map_or(f64::INFINITY, |v| v.adjusted)
    }

    /// Evaluates one point; `None` when the plan is rejected by the model.
    fn evaluate(&self, c: &Combo, point: &[usize], out: &mut Outcome) -> Option<Candidate> {
        let (plan, key) = self.plan(c, point);
        let l1 = self.level1[&(plan.levels[0].d_x, plan.levels[0].d_z)];
        out.stats.evaluated += 1;
        let opts = EvalOptions {
            consume_k: self.consume_k,
            level1: Some(l1),
        };
        let report = evaluate_plan_with(&plan, self.noise, self.catalog, &opts).ok()?;
        for (r, lv) in report.levels.iter().enumerate().skip(1) {
            if lv.accept_rate > c.caps[r] {
                out.stats.bound_violations += 1;
                log::warn!(
                    "acceptance {} above pruning bound {} at level {}",
                    lv.accept_rate,
                    c.caps[r],
                    r + 1
                );
            }
        }
        out.saw(report.infidelity);
        Some(Candidate {
            volume: report.volume.adjusted,
            key,
            plan,
            report,
        })
    }

    fn feasible(&self, c: &Option<Candidate>) -> bool {
        c.as_ref().is_some_and(|c| c.report.infidelity <= self.eps)
    }

    /// Evaluates the combination with every logical rate replaced by its
    /// extreme over the distance box.
    fn evaluate_extreme(&self, c: &Combo, b: &RateBox) -> Result<(EvalReport, PlanRates)> {
        let origin = vec![0usize; self.axes.len()];
        let (plan, _) = self.plan(c, &origin);
        let dz1 = GROUP_SIZE * c.ks[0];
        let mut rates = PlanRates {
            memory1: b.memory1[&dz1],
            pump: vec![LogicalRates::ZERO],
            surgery: vec![LogicalRates::ZERO],
        };
        for r in 1..c.ks.len() {
            rates
                .pump
                .push(if r == 1 { b.pump1[&dz1] } else { b.pump[r - 1] });
            rates.surgery.push(b.surgery[r]);
        }
        let opts = EvalOptions {
            consume_k: self.consume_k,
            level1: Some(self.level1[&(plan.levels[0].d_x, dz1)]),
        };
        let report = evaluate_with_rates(&plan, self.noise, self.catalog, &opts, &rates)?;
        Ok((report, rates))
    }

    /// Lower bound on the infidelity of any point of the combination.
    fn infidelity_floor(&self, c: &Combo) -> f64 {
        // An evaluation error gives no bound; never prune on it.
        self.evaluate_extreme(c, &self.floors)
            .map_or(0.0, |(r, _)| r.infidelity)
    }

    /// Fills the acceptance caps. Acceptance at level r is f(ρ₊₊) =
    /// ρ₊₊^k + ρ₋₋^k, and ρ₊₊ differs from the noiseless cos²α by at most the
    /// trace distance √ε_in, where ε_in is bounded by the level r−1
    /// infidelity at the largest rates plus every Pauli flip rate in between.
    fn with_caps(&self, mut c: Combo) -> Combo {
        let r_count = c.ks.len();
        c.caps = vec![1.0; r_count];
        let Ok((rep, rates)) = self.evaluate_extreme(&c, &self.ceilings) else {
            return c;
        };
        for r in 1..r_count {
            let label = &self.space.levels[r].magic[c.magic[r]];
            let magic = self.catalog.get(label).map_or(1.0, |e| e.infidelity);
            let flips = |x: LogicalRates| x.p_x.min(0.5) + x.p_z.min(0.5);
            let eps_in = rep.levels[r - 1].infidelity
                + magic
                + flips(rates.pump[r])
                + flips(rates.surgery[r]);
            let delta = eps_in.min(1.0).sqrt();
            let cos2 = rep.levels[r].alpha.radians().cos().powi(2);
            let k = c.ks[r] as i32;
            let f = |x: f64| {
                let x = x.clamp(0.0, 1.0);
                x.powi(k) + (1.0 - x).powi(k)
            };
            // The margin absorbs rounding between cos²α and the pumped state.
            c.caps[r] = (f(cos2 - delta).max(f(cos2 + delta)) * (1.0 + 1e-9)).min(1.0);
        }
        c
    }

    fn anchor_point(&self) -> Vec<usize> {
        self.axes
            .iter()
            .map(|ax| {
                ax.iter()
                    .rposition(|&d| d <= self.space.anchor)
                    .unwrap_or(0)
            })
            .collect()
    }

    /// Feasible starting point: the anchor, else all distances at their
    /// maximum, else smallest d_x with largest d_z.
    fn start_point(&self, c: &Combo, out: &mut Outcome) -> Option<(Vec<usize>, Candidate)> {
        let top: Vec<usize> = self.axes.iter().map(|ax| ax.len() - 1).collect();
        let mut favorable = top.clone();
        favorable[0] = 0;
        for r in 1..c.ks.len() {
            favorable[2 * r - 1] = 0;
        }
        for p in [self.anchor_point(), top, favorable] {
            let cand = self.evaluate(c, &p, out);
            if self.feasible(&cand) {
                return cand.map(|x| (p, x));
            }
        }
        None
    }

    /// Greedy descent from the start point: repeatedly takes the single
    /// one-step decrease that keeps the plan feasible and lowers the volume
    /// most. Cheap and usually close to the optimum; used only to seed the
    /// exact search.
    fn descend_from_start(&self, c: &Combo, out: &mut Outcome) -> Option<(Vec<usize>, Candidate)> {
        let (point, best) = self.start_point(c, out)?;
        Some(self.descend(c, point, best, out))
    }

    fn descend(
        &self,
        c: &Combo,
        mut point: Vec<usize>,
        mut best: Candidate,
        out: &mut Outcome,
    ) -> (Vec<usize>, Candidate) {
        loop {
            let mut step: Option<(Vec<usize>, Candidate)> = None;
            for a in 0..point.len() {
                if point[a] == 0 {
                    continue;
                }
                let mut p = point.clone();
                p[a] -= 1;
                let cand = self.evaluate(c, &p, out);
                if !self.feasible(&cand) {
                    continue;
                }
                let cand = cand.expect("feasible");
                let current = step.as_ref().map_or(&best, |s| &s.1);
                if better(&cand, current) {
                    step = Some((p, cand));
                }
            }
            match step {
                Some((p, cand)) => {
                    point = p;
                    best = cand;
                }
                None => return (point, best),
            }
        }
    }

    /// Local search of one combination: greedy descent, then radius-1
    /// product neighborhoods around the incumbent until nothing improves.
    fn search_local(&self, c: &Combo, bound: f64) -> Outcome {
        let mut out = Outcome::default();
        out.stats.combinations = 1;
        if self.infidelity_floor(c) > self.eps {
            out.stats.pruned = 1;
            self.evaluate(c, &self.anchor_point(), &mut out);
            return out;
        }
        let Some((mut point, mut best)) = self.descend_from_start(c, &mut out) else {
            return out;
        };
        let n = point.len();
        loop {
            let mut improved = None;
            // Offsets in {-1, 0, 1}^n, enumerated in base 3.
            for code in 0..3usize.pow(n as u32) {
                let mut p = point.clone();
                let mut rest = code;
                let mut valid = true;
                for (a, slot) in p.iter_mut().enumerate() {
                    let off = (rest % 3) as isize - 1;
                    rest /= 3;
                    let v = *slot as isize + off;
                    if v < 0 || v as usize >= self.axes[a].len() {
                        valid = false;
                        break;
                    }
                    *slot = v as usize;
                }
                if !valid || p == point || self.lower_bound(c, &p) > best.volume {
                    continue;
                }
                let cand = self.evaluate(c, &p, &mut out);
                if self.feasible(&cand) {
                    let cand = cand.expect("feasible");
                    let current = improved
                        .as_ref()
                        .map_or(&best, |(_, b): &(Vec<usize>, Candidate)| b);
                    if better(&cand, current) {
                        improved = Some((p, cand));
                    }
                }
            }
            match improved {
                Some((p, cand)) => {
                    let (p2, c2) = self.descend(c, p, cand, &mut out);
                    point = p2;
                    best = c2;
                }
                None => break,
            }
        }
        out.best = Some(best).filter(|b| b.volume <= bound);
        out
    }

    /// Searches one combination exactly: best-first over the distance lattice
    /// in lower-bound order from the smallest distances, stopping once the
    /// bound exceeds the incumbent (or `bound`).
    fn search(&self, c: &Combo, bound: f64) -> Outcome {
        let mut out = Outcome::default();
        out.stats.combinations = 1;
        if self.infidelity_floor(c) > self.eps {
            out.stats.pruned = 1;
            return out;
        }
        let mut best: Option<Candidate> = None;

        let origin = vec![0usize; self.axes.len()];
        let mut heap = BinaryHeap::new();
        let mut seen: HashMap<Vec<usize>, Option<bool>> = HashMap::new();
        heap.push(Node {
            lb: self.lower_bound(c, &origin),
            point: origin.clone(),
        });
        seen.insert(origin, None);
        while let Some(Node { lb, point }) = heap.pop() {
            let limit = best.as_ref().map_or(bound, |b| b.volume.min(bound));
            if lb > limit {
                break;
            }
            let cand = self.evaluate(c, &point, &mut out);
            let ok = self.feasible(&cand);
            if !ok {
                let pred_ok = (0..point.len()).any(|a| {
                    point[a] > 0 && {
                        let mut p = point.clone();
                        p[a] -= 1;
                        seen.get(&p) == Some(&Some(true))
                    }
                });
                if pred_ok {
                    out.stats.monotonicity_violations += 1;
                    log::debug!(
                        "feasibility lost when increasing a distance at {:?}",
                        self.values(&point)
                    );
                }
            } else if let Some(cand) = cand {
                if cand.volume <= bound && best.as_ref().map_or(true, |b| better(&cand, b)) {
                    best = Some(cand);
                }
            }
            seen.insert(point.clone(), Some(ok));
            for a in 0..point.len() {
                if point[a] + 1 < self.axes[a].len() {
                    let mut p = point.clone();
                    p[a] += 1;
                    if !seen.contains_key(&p) {
                        heap.push(Node {
                            lb: self.lower_bound(c, &p),
                            point: p.clone(),
                        });
                        seen.insert(p, None);
                    }
                }
            }
        }
        out.best = best;
        out
    }

    fn lattice_size(&self) -> u128 {
        self.axes.iter().map(|a| a.len() as u128).product()
    }
}

/// Min-heap entry ordered by lower bound, then point.
#[derive(PartialEq)]
struct Node {
    lb: f64,
    point: Vec<usize>,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        o.lb.total_cmp(&self.lb)
            .then_with(|| o.point.cmp(&self.point))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn finish(out: Outcome, eps: f64) -> Result<SearchResult> {
    match out.best {
        Some(c) => Ok(SearchResult {
            volume: c.report.volume,
            plan: c.plan,
            report: c.report,
            stats: out.stats,
        }),
        None => Err(Error::Infeasible {
            reason: match out.best_infidelity {
                Some(b) => format!("target {eps:e} not reached; best infidelity {b:e}"),
                None => format!("target {eps:e} not reached; no evaluable plan"),
            },
            best_infidelity: out.best_infidelity,
        }),
    }
}

/// Volume-minimal plan in `space` with infidelity ≤ `eps_target`.
pub fn optimize(
    eps_target: f64,
    target: Target,
    noise: PhysicalNoise,
    catalog: &MagicCatalog,
    space: &SearchSpace,
) -> Result<SearchResult> {
    optimize_with(
        eps_target,
        target,
        noise,
        catalog,
        space,
        &SearchOptions::default(),
    )
}

pub fn optimize_with(
    eps_target: f64,
    target: Target,
    noise: PhysicalNoise,
    catalog: &MagicCatalog,
    space: &SearchSpace,
    opts: &SearchOptions,
) -> Result<SearchResult> {
    let ctx = Context::new(space, target, eps_target, noise, catalog, opts)?;
    let origin = vec![0usize; ctx.axes.len()];
    let all = combos(space, target);
    let exact = match opts.strategy {
        Strategy::Exact => true,
        Strategy::Local => false,
        Strategy::Auto => ctx.lattice_size() * all.len() as u128 <= ORACLE_LIMIT,
    };
    let mut order: Vec<(f64, Combo)> = map_reduce(
        all.len(),
        opts.exec,
        Vec::new(),
        |i| {
            let c = ctx.with_caps(all[i].clone());
            vec![(ctx.lower_bound(&c, &origin), c)]
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    );
    // Stable on ties, and map_reduce preserves order, so batches are
    // identical under both strategies.
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Seed the exact search: greedy descent on every combination that can
    // reach the target.
    let mut total = if !exact {
        Outcome::default()
    } else {
        map_reduce(
            order.len(),
            opts.exec,
            Outcome::default(),
            |i| {
                let c = &order[i].1;
                let mut o = Outcome::default();
                let at = ctx.anchor_point();
                ctx.evaluate(c, &at, &mut o);
                if ctx.infidelity_floor(c) <= eps_target {
                    o.best = ctx.descend_from_start(c, &mut o).map(|(_, b)| b);
                }
                o
            },
            Outcome::merge,
        )
    };
    let mut start = 0;
    while start < order.len() {
        let bound = total.best.as_ref().map_or(f64::INFINITY, |b| b.volume);
        if order[start].0 > bound {
            total.stats.pruned += (order.len() - start) as u64;
            break;
        }
        let end = (start + BATCH).min(order.len());
        let batch = &order[start..end];
        let got = map_reduce(
            batch.len(),
            opts.exec,
            Outcome::default(),
            |i| {
                if batch[i].0 > bound {
                    let mut o = Outcome::default();
                    o.stats.pruned = 1;
                    return o;
                }
                if exact {
                    ctx.search(&batch[i].1, bound)
                } else {
                    ctx.search_local(&batch[i].1, bound)
                }
            },
            Outcome::merge,
        );
        total = total.merge(got);
        start = end;
    }
    total.stats.combinations = order.len() as u64;
    finish(total, eps_target)
}

/// Evaluates every plan in `space`; refuses spaces above [`ORACLE_LIMIT`].
pub fn exhaustive_oracle(
    eps_target: f64,
    target: Target,
    noise: PhysicalNoise,
    catalog: &MagicCatalog,
    space: &SearchSpace,
    opts: &SearchOptions,
) -> Result<SearchResult> {
    let ctx = Context::new(space, target, eps_target, noise, catalog, opts)?;
    let all: Vec<Combo> = combos(space, target)
        .into_iter()
        .map(|c| ctx.with_caps(c))
        .collect();
    let n = ctx.lattice_size() * all.len() as u128;
    if n > ORACLE_LIMIT {
        return Err(Error::SpaceTooLarge(n));
    }
    let dims: Vec<usize> = ctx.axes.iter().map(Vec::len).collect();
    let per = ctx.lattice_size() as usize;
    let mut total = map_reduce(
        all.len() * per,
        opts.exec,
        Outcome::default(),
        |i| {
            let c = &all[i / per];
            let mut rest = i % per;
            let mut point = vec![0; dims.len()];
            for a in (0..dims.len()).rev() {
                point[a] = rest % dims[a];
                rest /= dims[a];
            }
            let mut out = Outcome::default();
            let cand = ctx.evaluate(c, &point, &mut out);
            if ctx.feasible(&cand) {
                out.best = cand;
            }
            out
        },
        Outcome::merge,
    );
    total.stats.combinations = all.len() as u64;
    finish(total, eps_target)
}
