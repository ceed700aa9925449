use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;

use mlti::costs::{gate_volume, MagicCatalog, IDEAL_LABEL, IDEAL_MAGIC_VOLUME};
use mlti::exec::{map_reduce, Execution};
use mlti::level1mc::{build_gadget, run, McNoise};
use mlti::noise::PhysicalNoise;
use mlti::optimizer::{optimize_with, SearchOptions, SearchSpace};
use mlti::pipeline::{evaluate_plan, evaluate_plan_with, EvalOptions, Plan, Target};

fn data(rel: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel);
    std::fs::read_to_string(p).unwrap()
}

fn n(p: f64) -> PhysicalNoise {
    PhysicalNoise::new(p).unwrap()
}

#[test]
fn shipped_catalog_is_the_placeholder() {
    let cat: MagicCatalog = serde_json::from_str(&data("placeholder_catalog.json")).unwrap();
    assert!(cat.is_placeholder());
    assert_eq!(cat.entries().len(), 1);
    let e = cat.get(IDEAL_LABEL).unwrap();
    assert_eq!((e.infidelity, e.volume), (0.0, IDEAL_MAGIC_VOLUME));
    assert_eq!(cat, MagicCatalog::placeholder().clone_with_note_of(&cat));
}

trait NoteOf {
    fn clone_with_note_of(self, other: &MagicCatalog) -> MagicCatalog;
}

impl NoteOf for MagicCatalog {
    /// Same entries and flag; the free-text note may differ.
    fn clone_with_note_of(self, other: &MagicCatalog) -> MagicCatalog {
        let mut v = serde_json::to_value(&self).unwrap();
        v["note"] = serde_json::to_value(other).unwrap()["note"].clone();
        serde_json::from_value(v).unwrap()
    }
}

#[test]
fn shipped_plan_evaluates() {
    let plan: Plan = serde_json::from_str(&data("plans/two_level.json")).unwrap();
    let rep = evaluate_plan(&plan, n(5e-4), &MagicCatalog::placeholder(), None).unwrap();
    assert_eq!(rep.levels.len(), 2);
    assert!(rep.infidelity > 0.0 && rep.infidelity < 1e-6);
    assert!(rep.volume.adjusted >= rep.volume.total);
}

#[test]
fn optimized_plan_survives_a_json_round_trip() {
    let cat = MagicCatalog::placeholder();
    let target = Target::Clifford(20);
    let space = SearchSpace::standard(2, target, 1e-12, &cat).unwrap();
    let res = optimize_with(
        1e-12,
        target,
        n(5e-4),
        &cat,
        &space,
        &SearchOptions::default(),
    )
    .unwrap();
    let text = serde_json::to_string(&res.plan).unwrap();
    let plan: Plan = serde_json::from_str(&text).unwrap();
    let rep = evaluate_plan_with(&plan, n(5e-4), &cat, &EvalOptions::default()).unwrap();
    assert_eq!(rep, res.report);
    assert!(rep.infidelity <= 1e-12);
}

#[test]
fn monte_carlo_is_strategy_independent() {
    let c = build_gadget(3, 9).unwrap();
    let noise = McNoise::circuit_level(n(1e-3));
    let a = run(&c, &noise, 20_000, 11, Execution::Parallel).unwrap();
    let b = run(&c, &noise, 20_000, 11, Execution::Sequential).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn map_reduce_matches_a_plain_fold(len in 0usize..500, seed in any::<u64>()) {
        let f = |i: usize| (i as u64).wrapping_mul(seed | 1) % 1009;
        let want: u64 = (0..len).map(f).sum();
        for exec in [Execution::Parallel, Execution::Sequential] {
            prop_assert_eq!(map_reduce(len, exec, 0u64, f, |a, b| a + b), want);
        }
    }

    #[test]
    fn gate_volume_is_monotone(vs in prop::collection::vec(1.0..1e9f64, 1..20), bump in 0usize..20, by in 0.0..1e6f64) {
        let l = 2 + vs.len() as u32;
        let mut map: BTreeMap<u32, f64> = (3..=l).zip(vs.iter().copied()).collect();
        let before = gate_volume(l, &map, false).unwrap();
        let key = 3 + (bump % vs.len()) as u32;
        *map.get_mut(&key).unwrap() += by;
        prop_assert!(gate_volume(l, &map, false).unwrap() >= before);
        // Literal mode with equal volumes matches the sum form.
        let flat: BTreeMap<u32, f64> = (3..=l).map(|i| (i, vs[0])).collect();
        let a = gate_volume(l, &flat, false).unwrap();
        let b = gate_volume(l, &flat, true).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }
}
