//! Property suites run by `mlti verify`.
//!
//! Every tolerance is multiplied by the user's scale, so a scale of 0 turns
//! rounding noise into failures.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use mlti::costs::{distill_closed_form, distill_oracle, MagicCatalog, MagicEntry};
use mlti::exec::Execution;
use mlti::injection::{output_angle, theorem1_bound, theorem1_exact, ti_channel};
use mlti::noise::PhysicalNoise;
use mlti::optimizer::{
    exhaustive_oracle, optimize_with, Bounds, LevelBounds, SearchOptions, SearchSpace,
};
use mlti::pipeline::{Target, PUMP_WINDOW};
use mlti::qstate::{
    fidelity_with, make_rotation_density, rz, trace_distance_to, Angle, DensityMatrix2,
};
use mlti::teleport::randomized_teleport;
use mlti::Error;

pub const SUITES: [&str; 5] = [
    "injection_purity",
    "theorem1",
    "teleport_cancellation",
    "distill_oracle",
    "optimizer_vs_exhaustive",
];

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub seed: u64,
    pub tolerance_scale: f64,
    pub spaces: usize,
    pub exec: Execution,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    pub failures: usize,
    /// Largest error normalized by its tolerance; > 1 fails.
    pub worst_ratio: f64,
    pub seconds: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifySummary {
    pub passed: bool,
    pub seed: u64,
    pub tolerance_scale: f64,
    pub suites: Vec<SuiteReport>,
}

#[derive(Default)]
struct Tally {
    checks: usize,
    failures: usize,
    worst: f64,
    first_failure: Option<String>,
}

impl Tally {
    /// Records `err <= tol`.
    fn check(&mut self, err: f64, tol: f64, what: impl FnOnce() -> String) {
        self.checks += 1;
        let ratio = if err == 0.0 {
            0.0
        } else if tol > 0.0 {
            err / tol
        } else {
            f64::INFINITY
        };
        if ratio.is_nan() || ratio > 1.0 {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(what());
            }
        }
        self.worst = self
            .worst
            .max(if ratio.is_nan() { f64::INFINITY } else { ratio });
    }

    fn fail(&mut self, what: String) {
        self.checks += 1;
        self.failures += 1;
        self.worst = f64::INFINITY;
        self.first_failure.get_or_insert(what);
    }

    fn finish(self, name: &str, t0: Instant) -> SuiteReport {
        SuiteReport {
            name: name.into(),
            passed: self.failures == 0 && self.checks > 0,
            checks: self.checks,
            failures: self.failures,
            worst_ratio: self.worst,
            seconds: t0.elapsed().as_secs_f64(),
            detail: self.first_failure.unwrap_or_default(),
        }
    }
}

fn angle(x: f64) -> Angle {
    Angle::new(x).expect("finite")
}

/// Pure |α> through the k-copy channel lands on |arctan(tan^k α)>.
fn injection_purity(cfg: &VerifyConfig) -> SuiteReport {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = Tally::default();
    for _ in 0..1000 {
        let alpha = angle(rng.gen_range(-1.4..1.4));
        let k = rng.gen_range(1..=8);
        let res = ti_channel(&make_rotation_density(alpha), k)
            .and_then(|out| Ok((out, output_angle(alpha, k)?)));
        match res {
            Ok((out, beta)) => {
                let inf = (1.0 - fidelity_with(&out.state, beta)).abs();
                t.check(inf, 1e-12 * cfg.tolerance_scale, || {
                    format!("alpha={alpha} k={k}: infidelity {inf:e}")
                });
            }
            Err(e) => t.fail(format!("alpha={alpha} k={k}: {e}")),
        }
    }
    t.finish("injection_purity", t0)
}

/// Dephased (b = 0) half of the level-1 bound grid.
fn theorem1(cfg: &VerifyConfig) -> SuiteReport {
    let t0 = Instant::now();
    let mut t = Tally::default();
    for k in 2..=8u32 {
        for beta in [1e-3, 1e-2, 0.1, 0.3] {
            for eps in [1e-6, 1e-5, 1e-4, 1e-3] {
                let bound = theorem1_bound(k, angle(beta), eps);
                match theorem1_exact(k, angle(beta), eps, 0.0) {
                    Ok(exact) => {
                        let slack = bound * 10.0 * eps.sqrt() * cfg.tolerance_scale;
                        t.check((exact - bound).max(0.0), slack, || {
                            format!("k={k} beta={beta} eps={eps}: {exact:e} > {bound:e}")
                        });
                    }
                    Err(e) => t.fail(format!("k={k} beta={beta} eps={eps}: {e}")),
                }
            }
        }
    }
    t.finish("theorem1", t0)
}

/// Coherent resource errors are removed: the output is (1-ε)ρ + εZρZ and
/// its infidelity equals its trace distance.
fn teleport_cancellation(cfg: &VerifyConfig) -> SuiteReport {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut t = Tally::default();
    let tol = 1e-12 * cfg.tolerance_scale;
    for _ in 0..1000 {
        let phi = rng.gen_range(-3.1..3.1);
        let theta = angle(rng.gen_range(-1.5..1.5));
        let eps: f64 = rng.gen_range(0.0..=0.05);
        let bmax = (eps - eps * eps).sqrt();
        let b = Complex64::from_polar(rng.gen_range(0.0..=1.0) * bmax, rng.gen_range(-3.1..3.1));
        let run = || -> mlti::Result<(DensityMatrix2, DensityMatrix2)> {
            let rho = make_rotation_density(angle(phi));
            let anc = DensityMatrix2::from_frame(theta, eps, b)?;
            let out = randomized_teleport(&rho, &anc, theta)?;
            let ideal = rho.apply_unitary(&rz(theta.radians()))?;
            Ok((out, ideal.mix(&ideal.conj_z(), eps)?))
        };
        match run() {
            Ok((out, expect)) => {
                let diff = (out.rho_pp() - expect.rho_pp())
                    .abs()
                    .max((out.rho_pm() - expect.rho_pm()).norm());
                t.check(diff, tol, || {
                    format!("phi={phi} theta={theta} eps={eps}: {diff:e}")
                });
                let target = angle(phi + theta.radians());
                let gap =
                    ((1.0 - fidelity_with(&out, target)) - trace_distance_to(&out, target)).abs();
                t.check(gap, tol, || {
                    format!("phi={phi} theta={theta} eps={eps}: infidelity vs distance {gap:e}")
                });
            }
            Err(e) => t.fail(format!("phi={phi} theta={theta} eps={eps}: {e}")),
        }
    }
    t.finish("teleport_cancellation", t0)
}

fn distill(cfg: &VerifyConfig) -> SuiteReport {
    let t0 = Instant::now();
    let mut t = Tally::default();
    for eps in [1e-4, 3e-4, 1e-3, 3e-3, 1e-2] {
        match distill_oracle(eps, 0.0) {
            Ok(v) => {
                let err = (v - distill_closed_form(eps)).abs();
                t.check(err, 1e-12 * cfg.tolerance_scale, || {
                    format!("eps={eps}: oracle {v:e} vs model off by {err:e}")
                });
            }
            Err(e) => t.fail(format!("eps={eps}: {e}")),
        }
    }
    t.finish("distill_oracle", t0)
}

fn small_catalog() -> MagicCatalog {
    let e = |label: &str, infidelity, volume| MagicEntry {
        label: label.into(),
        infidelity,
        volume,
    };
    MagicCatalog::new(vec![e("cheap", 1e-9, 2e4), e("clean", 1e-12, 6e4)]).expect("valid")
}

/// Random bounded space with r = 2, k ≤ 8, d ≤ 9.
fn random_space(rng: &mut ChaCha8Rng) -> (SearchSpace, Target, f64, f64) {
    let dmax = rng.gen_range(5..=9);
    let k2lo = rng.gen_range(2..=5);
    let magic: Vec<String> = match rng.gen_range(0..3) {
        0 => vec!["cheap".into()],
        1 => vec!["clean".into()],
        _ => vec!["cheap".into(), "clean".into()],
    };
    let space = SearchSpace {
        levels: vec![
            LevelBounds {
                k: Bounds::new(1, rng.gen_range(2..=8)),
                d_x: Bounds::new(3, dmax),
                d_z: Bounds::new(3, 24),
                magic: vec![],
            },
            LevelBounds {
                k: Bounds::new(k2lo, rng.gen_range(k2lo..=8)),
                d_x: Bounds::new(3, dmax),
                d_z: Bounds::new(3, dmax),
                magic,
            },
        ],
        anchor: 31,
        k_window: PUMP_WINDOW,
    };
    let target = Target::Clifford(rng.gen_range(4..=9));
    let p = [2e-4, 5e-4, 1e-3][rng.gen_range(0..3)];
    let eps = 10f64.powf(rng.gen_range(-6.5..-4.0));
    (space, target, p, eps)
}

fn optimizer(cfg: &VerifyConfig) -> SuiteReport {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let cat = small_catalog();
    let opts = SearchOptions {
        exec: cfg.exec,
        ..SearchOptions::default()
    };
    let mut t = Tally::default();
    for i in 0..cfg.spaces {
        let (space, target, p, eps) = random_space(&mut rng);
        let noise = PhysicalNoise::new(p).expect("valid p");
        let o = optimize_with(eps, target, noise, &cat, &space, &opts);
        let x = exhaustive_oracle(eps, target, noise, &cat, &space, &opts);
        match (o, x) {
            (Ok(o), Ok(x)) => {
                if o.plan != x.plan {
                    t.fail(format!("space {i}: plans differ"));
                    continue;
                }
                let rel = (o.volume.adjusted - x.volume.adjusted).abs() / x.volume.adjusted;
                t.check(rel, 1e-15 * cfg.tolerance_scale, || {
                    format!("space {i}: volume differs by {rel:e}")
                });
            }
            (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => t.checks += 1,
            (o, x) => t.fail(format!(
                "space {i}: optimize {:?} vs exhaustive {:?}",
                o.map(|r| r.volume.adjusted),
                x.map(|r| r.volume.adjusted)
            )),
        }
    }
    t.finish("optimizer_vs_exhaustive", t0)
}

/// Runs the named suites (all when `only` is empty).
pub fn run(cfg: &VerifyConfig, only: &[String]) -> Result<VerifySummary, String> {
    if let Some(bad) = only.iter().find(|s| !SUITES.contains(&s.as_str())) {
        return Err(format!(
            "unknown suite `{bad}`; known suites: {}",
            SUITES.join(", ")
        ));
    }
    let mut suites = Vec::new();
    for name in SUITES {
        if !only.is_empty() && !only.iter().any(|s| s == name) {
            continue;
        }
        let report = match name {
            "injection_purity" => injection_purity(cfg),
            "theorem1" => theorem1(cfg),
            "teleport_cancellation" => teleport_cancellation(cfg),
            "distill_oracle" => distill(cfg),
            _ => optimizer(cfg),
        };
        log::info!(
            "{}: {} ({} checks)",
            report.name,
            if report.passed { "pass" } else { "FAIL" },
            report.checks
        );
        suites.push(report);
    }
    Ok(VerifySummary {
        passed: suites.iter().all(|s| s.passed),
        seed: cfg.seed,
        tolerance_scale: cfg.tolerance_scale,
        suites,
    })
}
