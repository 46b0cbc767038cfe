//! One pass/fail line per acceptance criterion. Runs the full 100-replicate
//! factorial at seed 42, so build with optimizations.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ara_core::adversary::{AdversaryConfig, AdversaryKind};
use ara_core::belief::{
    assess_neighbors, type_posterior_gamma, update_type_belief, Candidate, MixtureBelief,
    PayoffLikelihood,
};
use ara_core::engine::{
    build_prior, prior_mean_path, run_episode_with_prior, run_fixed_path, BeliefMode, EpisodeConfig,
};
use ara_core::experiment::{
    anova, run_factorial, summary::median, write_rows_file, AnovaTable, FactorialSpec, ResultRow,
    Strategy,
};
use ara_core::network::{build_grid_moments, sample_truth, EdgeId, GridGenSpec, NodeId};
use ara_core::niw::{condition_niw, niw_to_mvt, Coord, NiwParams};
use ara_core::policy::{PolicyConfig, PolicyKind};
use ara_core::seed::{derive, Stream};
use ara_core::special::student_t_ln_pdf;
use common::{brute_force_q, integrate_line, three_neighbour_prior};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TABLE_DF: [usize; 16] = [2, 2, 2, 1, 4, 4, 4, 2, 2, 2, 8, 4, 4, 4, 8, 5346];
const RUNTIME_BUDGET: Duration = Duration::from_secs(30 * 60);
const ADAPTIVITY_NETWORKS: u64 = 200;
const ADAPTIVITY_SEED: u64 = 4_242;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

struct Factorial {
    rows: Vec<ResultRow>,
    table: Option<AnovaTable>,
    failures: Vec<String>,
    elapsed: Duration,
}

fn run_shared_factorial() -> Factorial {
    let spec = FactorialSpec::default();
    let started = Instant::now();
    let outcome = run_factorial(&spec).expect("factorial spec is valid");
    let table = anova(&outcome.rows);
    let elapsed = started.elapsed();
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR"));
    let _ = write_rows_file(&outcome.rows, &dir.join("acceptance_rows.csv"));
    if let Ok(t) = &table {
        let _ = t.write_csv_file(&dir.join("acceptance_anova.csv"));
    }
    let mut failures = outcome.errors;
    let table = match table {
        Ok(t) => Some(t),
        Err(e) => {
            failures.push(e.to_string());
            None
        }
    };
    Factorial { rows: outcome.rows, table, failures, elapsed }
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a ResultRow>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for r in rows {
        s += r.net_reward;
        n += 1;
    }
    s / n as f64
}

fn criterion_1(f: &Factorial) -> Verdict {
    let Some(table) = &f.table else {
        return Verdict::new(false, format!("no ANOVA table: {:?}", f.failures));
    };
    let df = table.df_column();
    let closure = table.closure_error();
    let pass = df == TABLE_DF && closure < 1e-6 && f.elapsed < RUNTIME_BUDGET && f.failures.is_empty();
    Verdict::new(
        pass,
        format!(
            "df {:?}, closure {closure:.2e}, {} episodes + ANOVA in {:.1} s",
            df,
            f.rows.len(),
            f.elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(f: &Factorial) -> Verdict {
    let rows = &f.rows;
    let by_adv = |a: AdversaryKind| mean_of(rows.iter().filter(move |r| r.adversary == a));
    let none = by_adv(AdversaryKind::None);
    let (t0, t1) = (by_adv(AdversaryKind::Type0), by_adv(AdversaryKind::Type1));
    let a = none - t0 >= 20.0 && none - t1 >= 20.0;

    let mut violations = Vec::new();
    for p in PolicyKind::ALL {
        for b in BeliefMode::ALL {
            for s in Strategy::ALL {
                let cell = |adv: AdversaryKind| {
                    mean_of(rows.iter().filter(|r| r.policy == p && r.belief == b && r.strategy == s && r.adversary == adv))
                };
                let (m0, m1) = (cell(AdversaryKind::Type0), cell(AdversaryKind::Type1));
                if m1 < m0 {
                    violations.push(format!("{}/{}/{} {m1:.2}<{m0:.2}", p.label(), b.label(), s.label()));
                }
            }
        }
    }
    let b = violations.is_empty();

    let mut c = true;
    let mut gaps = Vec::new();
    for adv in AdversaryKind::ALL {
        let pm = |p: PolicyKind| mean_of(rows.iter().filter(|r| r.adversary == adv && r.policy == p));
        let (u, m) = (pm(PolicyKind::Uncertainty), pm(PolicyKind::Myopic));
        c &= u > m;
        gaps.push(format!("{} {u:.2} vs {m:.2}", adv.label()));
    }
    Verdict::new(
        a && b && c,
        format!(
            "(a) {} none {none:.2}, type0 {t0:.2}, type1 {t1:.2}; (b) {} {} cells with type1 < type0 {:?}; (c) {} uncertainty vs myopic: {}",
            ok(a),
            ok(b),
            violations.len(),
            violations,
            ok(c),
            gaps.join(", ")
        ),
    )
}

fn account_gap<'a>(rows: impl Iterator<Item = &'a ResultRow> + Clone) -> f64 {
    mean_of(rows.clone().filter(|r| r.strategy == Strategy::Account)) - mean_of(rows.filter(|r| r.strategy == Strategy::Ignore))
}

fn criterion_3(f: &Factorial) -> Verdict {
    let present = account_gap(f.rows.iter().filter(|r| r.adversary != AdversaryKind::None));
    let absent = account_gap(f.rows.iter().filter(|r| r.adversary == AdversaryKind::None));
    let band = |g: f64| (1.0..=10.0).contains(&g.abs());
    let pass = present > 0.0 && absent < 0.0 && band(present) && band(absent);
    Verdict::new(pass, format!("account - ignore: adversary present {present:+.2}, no adversary {absent:+.2}"))
}

fn criterion_4(f: &Factorial) -> Verdict {
    let med = |p: PolicyKind| {
        let v: Vec<f64> =
            f.rows.iter().filter(|r| r.adversary != AdversaryKind::None && r.policy == p).map(|r| r.runtime_ms).collect();
        median(&v)
    };
    let (m, h, u) = (med(PolicyKind::Myopic), med(PolicyKind::HPath), med(PolicyKind::Uncertainty));
    Verdict::new(
        u < h && m < u && m < h,
        format!("median ms with adversary present: myopic {m:.3}, hpath {h:.3}, uncertainty {u:.3}"),
    )
}

fn random_spd(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(p, p) * p as f64
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1.0)
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut notes = Vec::new();

    // Closure and sequential coherence.
    let mut worst = 0.0f64;
    let mut closed = true;
    let mut dof_ok = true;
    for _ in 0..1_000 {
        let p = rng.random_range(3..=7);
        let coords: Vec<Coord> = (0..p).map(|i| Coord::Payoff(NodeId(i))).collect();
        let mu = DVector::from_fn(p, |_, _| rng.random_range(-5.0..5.0));
        let nu = p as f64 + rng.random_range(2.0..12.0);
        let prior = NiwParams::new(mu, random_spd(p, &mut rng), nu, coords.clone()).unwrap();
        let k = rng.random_range(1..p);
        let mut order: Vec<usize> = (0..p).collect();
        for i in (1..p).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let obs: Vec<(Coord, f64)> = order[..k].iter().map(|&i| (coords[i], rng.random_range(-6.0..6.0))).collect();
        let split = rng.random_range(0..=k);
        let joint = condition_niw(&prior, &obs).unwrap();
        let seq = condition_niw(&condition_niw(&prior, &obs[..split]).unwrap(), &obs[split..]).unwrap();
        closed &= joint.dim() == p - k && joint.nu() == nu - k as f64 && joint.is_positive_definite();
        closed &= seq.index().coords() == joint.index().coords() && seq.nu() == joint.nu();
        let m = |x: &NiwParams| DMatrix::from_column_slice(x.dim(), 1, x.mu().as_slice());
        worst = worst.max(rel_diff(&m(&joint), &m(&seq))).max(rel_diff(joint.psi(), seq.psi()));
        for b in [&prior, &joint] {
            dof_ok &= niw_to_mvt(b).unwrap().dof() == b.nu() - b.dim() as f64 + 1.0;
        }
    }
    let coherent = closed && worst < 1e-10;
    notes.push(format!("conditioning {} (worst {worst:.1e})", ok(coherent)));
    notes.push(format!("dof identity {}", ok(dof_ok)));

    let mut norm_err = 0.0f64;
    for &(loc, scale, dof) in &[(0.0, 1.0, 5.0), (3.0, 0.4, 2.5), (12.0, 1.7, 1.0)] {
        let total = integrate_line(|x| student_t_ln_pdf(x, loc, scale, dof).exp(), loc, scale);
        norm_err = norm_err.max((total - 1.0).abs());
    }
    let normalized = norm_err < 1e-6;
    notes.push(format!("t normalization {} ({norm_err:.1e})", ok(normalized)));

    let prior = three_neighbour_prior(&[6.0, 2.0, 5.5, 1.0, 7.0, 3.2], 14.0);
    let belief = MixtureBelief::new(prior.clone(), 1.0, 1.0, 1e-3).unwrap();
    let cands: Vec<Candidate> = (0..3).map(|i| Candidate { node: NodeId(i + 1), edge: EdgeId(i) }).collect();
    let m = 200_000;
    let got = assess_neighbors(&belief, &cands, 0.3, m, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    let n = 1_000_000;
    let (o1, o2) = brute_force_q(&[(1.0, prior)], 0.3, n, 2024);
    let mut worst_z = 0.0f64;
    for (i, a) in got.iter().enumerate() {
        for (est, oracle) in [(a.q1, o1[i]), (a.q2, o2[i])] {
            let se = (oracle * (1.0 - oracle) * (1.0 / m as f64 + 1.0 / n as f64)).sqrt();
            worst_z = worst_z.max((est - oracle).abs() / se);
        }
    }
    let q_ok = worst_z <= 3.0;
    notes.push(format!("q vs brute force {} (max {worst_z:.2} s.e.)", ok(q_ok)));

    let mut gamma_ok = true;
    let mut beta_ok = true;
    let base = MixtureBelief::new(three_neighbour_prior(&[0.0; 6], 14.0), 1.0, 1.0, 1e-3).unwrap();
    for _ in 0..100 {
        let (q1, pi): (f64, f64) = (rng.random(), rng.random());
        let q2 = (1.0 - q1) * rng.random::<f64>();
        let ln_f = rng.random_range(-50.0..2.0);
        let part = [PayoffLikelihood { weight: 1.0, ln_f_x: ln_f, ln_f_x_star: ln_f }];
        gamma_ok &= type_posterior_gamma(q1, q2, pi, &part).value == pi;
        let gamma: f64 = rng.random();
        let u = update_type_belief(&base, gamma).unwrap();
        let grown = (u.alpha() + u.beta()) - (base.alpha() + base.beta());
        beta_ok &= u.alpha() == base.alpha() + gamma && u.beta() == base.beta() + (1.0 - gamma) && (grown - 1.0).abs() <= 1e-15;
    }
    notes.push(format!("gamma = pi {}", ok(gamma_ok)));
    notes.push(format!("beta increment {}", ok(beta_ok)));

    Verdict::new(coherent && dof_ok && normalized && q_ok && gamma_ok && beta_ok, notes.join(", "))
}

fn criterion_6() -> Verdict {
    let moments = build_grid_moments(&GridGenSpec::default()).unwrap();
    let prior = build_prior(&moments, BeliefMode::Accurate).unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for policy in PolicyKind::ALL {
        let mut cfg = EpisodeConfig::new(
            PolicyConfig::new(policy),
            AdversaryConfig { kind: AdversaryKind::None, delta: 0.3 },
            BeliefMode::Accurate,
            false,
        );
        let fixed_path = prior_mean_path(&cfg, &moments.graph, &prior).unwrap();
        let mut diffs = Vec::new();
        let (mut sa, mut sf) = (0.0, 0.0);
        for i in 0..ADAPTIVITY_NETWORKS {
            let net = sample_truth(&moments, derive(ADAPTIVITY_SEED, Stream::Network, i));
            cfg.traveler_seed = derive(ADAPTIVITY_SEED, Stream::Traveler, i);
            let a = run_episode_with_prior(&cfg, &net, &prior).unwrap().net_reward;
            let f = run_fixed_path(&cfg, &net, &fixed_path).unwrap().net_reward;
            sa += a;
            sf += f;
            diffs.push(a - f);
        }
        let n = ADAPTIVITY_NETWORKS as f64;
        let mean_diff = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let holds = sa / n >= sf / n - 2.0 * se;
        pass &= holds;
        notes.push(format!(
            "{} {} adaptive {:.2} vs fixed {:.2} (s.e. {se:.2}, fixed path {} steps)",
            policy.label(),
            ok(holds),
            sa / n,
            sf / n,
            fixed_path.len() - 1
        ));
    }
    Verdict::new(pass, notes.join("; "))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn report(id: u8, title: &str, v: &Verdict) {
    println!("{} criterion {id} {title}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters from the harness are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let math = criterion_5();
    let adaptivity = criterion_6();
    let factorial = run_shared_factorial();
    let verdicts = [
        (1, "anova structure and runtime", criterion_1(&factorial)),
        (2, "reward orderings", criterion_2(&factorial)),
        (3, "account vs ignore signs", criterion_3(&factorial)),
        (4, "runtime ordering", criterion_4(&factorial)),
        (5, "math core", math),
        (6, "adaptive vs fixed path", adaptivity),
    ];
    for (id, title, v) in &verdicts {
        report(*id, title, v);
    }
    println!("SKIP criterion 7 seed-dependent published values: not compared by design");
    let failed = verdicts.iter().filter(|(_, _, v)| !v.pass).count();
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
