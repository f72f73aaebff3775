use anyhow::{bail, Context, Result};
use ftl_core::appendix::{corpus_sweep, worked_examples, DominationResult};
use ftl_core::bergman::{herbort_reading, kernel_sweep, star_ball_volume, star_volume_with};
use ftl_core::coords::{adapted_coords, adapted_report, ball_equivalence_check, ball_volume, PseudoBall};
use ftl_core::fit::{loglog_fit, LineFit};
use ftl_core::homog::{doubling_constant, engulfing_constant, gamma, FrameProvider};
use ftl_core::localization::{localization_sweep, localized_eb1, LocalizedDomain};
use ftl_core::psh::{assemble_h, verify_adapted, PshAssembly, PshConfig, ScheduleEntry};
use ftl_core::weights::{check_balpha, check_eb1, check_eb2, separation_certificate, weight, Combination, ExtremalityCertificate, Verdict};
use ftl_core::{ModelDomain, Point, C64};
use serde::Serialize;
use serde_json::json;

use crate::report::{num, opt_num, point, Outcome, Table};
use crate::spec::{boundary_from_input, load_domain, parse_direction, parse_frame, parse_grid, to_input};
use crate::{Command, PshArgs, Target};

pub fn name(c: &Command) -> &'static str {
    match c {
        Command::Weights { .. } => "weights",
        Command::EbCheck { .. } => "eb-check",
        Command::Balpha { .. } => "balpha",
        Command::Coords { .. } => "coords",
        Command::Ball { .. } => "ball",
        Command::Gamma { .. } => "gamma",
        Command::Doubling { .. } => "doubling",
        Command::Bergman { .. } => "bergman",
        Command::StarVolume { .. } => "star-volume",
        Command::HerbortCert { .. } => "herbort-cert",
        Command::PshBuild { .. } => "psh-build",
        Command::PshVerify { .. } => "psh-verify",
        Command::Localize { .. } => "localize",
        Command::Appendix { .. } => "appendix",
    }
}

struct Setup {
    d: ModelDomain,
    p: Point,
    m: usize,
    provider: FrameProvider,
}

impl Setup {
    fn new(t: &Target) -> Result<Setup> {
        let d = load_domain(&t.domain)?;
        let p = boundary_from_input(&d, t.point.as_deref())?;
        let m = t.m.unwrap_or(d.m);
        if m < 2 {
            bail!("list length must be at least 2");
        }
        let provider = parse_frame(&t.frame)?;
        Ok(Setup { d, p, m, provider })
    }

    /// The base point in input order.
    fn input_point(&self) -> String {
        point(&to_input(&self.d, &self.p))
    }
}

pub fn run(c: &Command, seed: u64) -> Result<Outcome> {
    match c {
        Command::Weights { target, delta, dirs, certify, samples, summary } => {
            weights(target, delta, dirs, *certify, *samples, summary.as_deref(), seed)
        }
        Command::EbCheck { target, delta, kind, samples, max_k } => eb_check(target, delta, kind, *samples, *max_k, seed),
        Command::Balpha { target, delta, max_alpha } => balpha(target, delta, *max_alpha),
        Command::Coords { target, delta, max_k_prime } => coords(target, delta, *max_k_prime),
        Command::Ball { target, delta, c, kind, samples, mc } => ball(target, *delta, *c, kind, *samples, *mc, seed),
        Command::Gamma { target, q, c, tol } => gamma_cmd(target, q, *c, *tol),
        Command::Doubling { target, delta, c, mc, engulfing, max_ratio } => {
            doubling(target, delta, *c, *mc, *engulfing, *max_ratio, seed)
        }
        Command::Bergman { target, delta, sweep: _, reading, c, star_samples, tol } => {
            bergman(target, delta, *reading, *c, *star_samples, *tol, seed)
        }
        Command::StarVolume { target, delta, c, samples, isotropic } => star_volume(target, *delta, *c, *samples, *isotropic, seed),
        Command::HerbortCert { target, delta, k, assert_separable } => herbort_cert(target, delta, *k, *assert_separable),
        Command::PshBuild { target, psh } => psh_build(target, psh, seed),
        Command::PshVerify { target, psh, points, directions, beta_max } => {
            psh_verify(target, psh, *points, *directions, *beta_max, seed)
        }
        Command::Localize { target, d, origin, delta, factors, combos, eb1, levi_samples, max_ratio } => {
            localize(target, *d, *origin, delta, factors, *combos, *eb1, *levi_samples, *max_ratio, seed)
        }
        Command::Appendix { count, max_order, examples } => appendix(*count, *max_order, *examples, seed),
    }
}

#[derive(Serialize)]
struct WeightRow {
    p: Point,
    delta: f64,
    direction: String,
    value: f64,
    dominant: Option<String>,
    eb1: Option<f64>,
    eb2: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Serialize)]
struct DirectionSlope {
    direction: String,
    fit: Option<LineFit>,
}

fn weights(
    t: &Target,
    delta: &str,
    dirs: &[String],
    certify: bool,
    samples: usize,
    summary: Option<&std::path::Path>,
    seed: u64,
) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let grid = parse_grid(delta)?;
    let names: Vec<String> = if dirs.is_empty() {
        (1..=s.d.n)
            .filter(|&k| s.d.internal_slot(k).map(|j| j != s.d.n - 1).unwrap_or(false))
            .map(|k| format!("e{k}"))
            .collect()
    } else {
        dirs.to_vec()
    };
    let parsed: Vec<(String, Vec<C64>)> =
        names.iter().map(|n| parse_direction(&s.d, n).map(|a| (n.clone(), a))).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &dl in &grid {
        let frame = s.provider.frame(&s.d, &s.p, dl);
        let certs = if certify {
            Some((
                check_eb1(&frame, &s.p, dl, s.m, samples, seed)?.estimate,
                check_eb2(&frame, &s.p, dl, s.m)?.estimate,
                check_balpha(&frame, &s.p, dl, s.m)?.estimate,
            ))
        } else {
            None
        };
        for (label, a) in &parsed {
            let w = weight(&Combination::tangent(a.clone()), &frame, &s.p, dl, s.m)?;
            rows.push(WeightRow {
                p: to_input(&s.d, &s.p),
                delta: dl,
                direction: label.clone(),
                value: w.value,
                dominant: w.dominant.map(|l| l.to_string()),
                eb1: certs.map(|c| c.0),
                eb2: certs.map(|c| c.1),
                alpha: certs.map(|c| c.2),
            });
        }
    }
    let slopes: Vec<DirectionSlope> = parsed
        .iter()
        .map(|(label, _)| {
            let pts: Vec<&WeightRow> = rows.iter().filter(|r| &r.direction == label).collect();
            let x: Vec<f64> = pts.iter().map(|r| r.delta).collect();
            let y: Vec<f64> = pts.iter().map(|r| r.value).collect();
            DirectionSlope { direction: label.clone(), fit: if x.len() >= 2 { loglog_fit(&x, &y) } else { None } }
        })
        .collect();
    for sl in &slopes {
        if let Some(f) = &sl.fit {
            eprintln!("{} {}: slope {:.4} (R^2 {:.4})", s.d.name, sl.direction, f.slope, f.r2);
        }
    }
    if let Some(path) = summary {
        let text = serde_json::to_string_pretty(&json!({ "domain": s.d.name, "slopes": slopes }))?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut table = Table::new(&[
        "domain",
        "p",
        "delta",
        "direction",
        "F_value",
        "dominant_list",
        "K_est_EB1",
        "K_est_EB2",
        "alpha_est",
    ]);
    for r in &rows {
        table.push(vec![
            s.d.name.clone(),
            point(&r.p),
            num(r.delta),
            r.direction.clone(),
            num(r.value),
            r.dominant.clone().unwrap_or_default(),
            opt_num(r.eb1),
            opt_num(r.eb2),
            opt_num(r.alpha),
        ]);
    }
    Outcome::new(&s.d.name, &json!({ "rows": rows, "slopes": slopes }), table)
}

fn cert_table(name: &str, certs: &[ExtremalityCertificate]) -> Table {
    let mut t = Table::new(&["domain", "delta", "kind", "estimate", "witness", "degenerate", "samples"]);
    for c in certs {
        t.push(vec![
            name.to_string(),
            num(c.delta),
            format!("{:?}", c.kind),
            num(c.estimate),
            c.witness.clone(),
            c.degenerate.to_string(),
            c.sample_size.to_string(),
        ]);
    }
    t
}

fn eb_check(t: &Target, delta: &str, kind: &str, samples: usize, max_k: Option<f64>, seed: u64) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let grid = parse_grid(delta)?;
    let (eb1, eb2, ba) = match kind {
        "eb1" => (true, false, false),
        "eb2" => (false, true, false),
        "balpha" => (false, false, true),
        "all" => (true, true, true),
        _ => bail!("unknown kind {kind:?} (eb1, eb2, balpha or all)"),
    };
    let mut certs = Vec::new();
    for &dl in &grid {
        let frame = s.provider.frame(&s.d, &s.p, dl);
        if eb1 {
            certs.push(check_eb1(&frame, &s.p, dl, s.m, samples, seed)?);
        }
        if eb2 {
            certs.push(check_eb2(&frame, &s.p, dl, s.m)?);
        }
        if ba {
            certs.push(check_balpha(&frame, &s.p, dl, s.m)?);
        }
    }
    let worst = certs.iter().map(|c| c.estimate).fold(0.0, f64::max);
    let ok = max_k.map_or(true, |k| worst <= k);
    let table = cert_table(&s.d.name, &certs);
    Ok(Outcome::new(&s.d.name, &json!({ "point": s.input_point(), "certificates": certs, "max_estimate": worst }), table)?
        .require(ok))
}

fn balpha(t: &Target, delta: &str, max_alpha: Option<f64>) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let grid = parse_grid(delta)?;
    let certs: Vec<ExtremalityCertificate> = grid
        .iter()
        .map(|&dl| check_balpha(&s.provider.frame(&s.d, &s.p, dl), &s.p, dl, s.m))
        .collect::<ftl_core::Result<_>>()?;
    let worst = certs.iter().map(|c| c.estimate).fold(0.0, f64::max);
    let ok = max_alpha.map_or(true, |a| worst <= a);
    let table = cert_table(&s.d.name, &certs);
    Ok(Outcome::new(&s.d.name, &json!({ "point": s.input_point(), "certificates": certs, "alpha": worst }), table)?.require(ok))
}

fn coords(t: &Target, delta: &str, max_k_prime: Option<f64>) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let grid = parse_grid(delta)?;
    let mut reports = Vec::new();
    let mut table =
        Table::new(&["domain", "delta", "k_prime", "pure_residual", "triangular_defect", "max_coefficient", "round_trip"]);
    for &dl in &grid {
        let frame = s.provider.frame(&s.d, &s.p, dl);
        let map = adapted_coords(&frame, &s.d, &s.p, s.m)?;
        let r = adapted_report(&frame, &s.d, &s.p, dl, s.m, &map)?;
        table.push(vec![
            s.d.name.clone(),
            num(dl),
            num(r.k_prime),
            num(r.pure_residual),
            num(r.triangular_defect),
            num(r.max_coefficient),
            num(r.round_trip_residual),
        ]);
        reports.push(json!({ "delta": dl, "report": r }));
    }
    let worst = reports.iter().filter_map(|r| r["report"]["k_prime"].as_f64()).fold(0.0, f64::max);
    let ok = max_k_prime.map_or(true, |k| worst <= k);
    Ok(Outcome::new(&s.d.name, &json!({ "point": s.input_point(), "reports": reports, "k_prime": worst }), table)?.require(ok))
}

fn ball(t: &Target, delta: f64, c: f64, kind: &str, samples: usize, mc: usize, seed: u64) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let frame = s.provider.frame(&s.d, &s.p, delta);
    let b = match kind {
        "polydisc" => PseudoBall::polydisc(&frame, &s.d, &s.p, delta, c)?,
        "exp" => PseudoBall::exp(&frame, &s.d, &s.p, delta, c)?,
        _ => bail!("unknown ball kind {kind:?} (polydisc or exp)"),
    };
    let eq = ball_equivalence_check(&b, samples, seed)?;
    let vol = ball_volume(&b, mc, seed);
    let table = Table::pairs(&[
        ("alpha", num(eq.alpha)),
        ("beta", num(eq.beta)),
        ("failures", eq.failures.to_string()),
        ("volume", num(vol.value)),
        ("volume_std_error", num(vol.std_error)),
    ]);
    Outcome::new(
        &s.d.name,
        &json!({ "point": s.input_point(), "delta": delta, "c": c, "kind": kind, "equivalence": eq, "volume": vol }),
        table,
    )
}

fn gamma_cmd(t: &Target, q: &str, c: f64, tol: f64) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let qb = boundary_from_input(&s.d, Some(q))?;
    let g = gamma(&s.d, s.provider, &s.p, &qb, c, tol)?;
    let table = Table::pairs(&[("gamma", num(g.value)), ("non_monotone", g.non_monotone.to_string())]);
    Outcome::new(&s.d.name, &json!({ "p": s.input_point(), "q": point(&to_input(&s.d, &qb)), "gamma": g }), table)
}

fn doubling(
    t: &Target,
    delta: &str,
    c: f64,
    mc: usize,
    engulfing: Option<usize>,
    max_ratio: Option<f64>,
    seed: u64,
) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let grid = parse_grid(delta)?;
    let mut table = Table::new(&["domain", "delta", "doubling", "small_volume", "large_volume", "engulfing"]);
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &dl in &grid {
        let r = doubling_constant(&s.d, s.provider, &s.p, dl, c, mc, seed)?;
        let e = match engulfing {
            Some(k) => Some(engulfing_constant(&s.d, s.provider, &s.p, dl, c, k, 32, seed)?),
            None => None,
        };
        worst = worst.max(r.ratio);
        table.push(vec![
            s.d.name.clone(),
            num(dl),
            num(r.ratio),
            num(r.small.value),
            num(r.large.value),
            opt_num(e.as_ref().map(|e| e.constant)),
        ]);
        rows.push(json!({ "delta": dl, "doubling": r, "engulfing": e }));
    }
    let ok = max_ratio.map_or(true, |m| worst <= m);
    Ok(Outcome::new(&s.d.name, &json!({ "point": s.input_point(), "rows": rows, "max_doubling": worst }), table)?.require(ok))
}

fn bergman(t: &Target, delta: &str, reading: bool, c: f64, star_samples: usize, tol: f64, seed: u64) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let grid = parse_grid(delta)?;
    if reading {
        let v = herbort_reading(&s.d, &grid, tol)?;
        let table = Table::pairs(&[
            ("winner", format!("{:?}", v.winner)),
            ("definitive", v.definitive.to_string()),
            ("r2_as_printed", num(v.as_printed.r2)),
            ("r2_inverse", num(v.inverse.r2)),
        ]);
        return Outcome::new(&s.d.name, &v, table);
    }
    let sw = kernel_sweep(&s.d, &grid, s.provider, c, star_samples, tol, seed)?;
    let mut table = Table::new(&["domain", "delta", "estimate", "oracle", "oracle_error", "star_volume", "star_std_error"]);
    for r in &sw.rows {
        table.push(vec![
            s.d.name.clone(),
            num(r.delta),
            num(r.estimate),
            opt_num(r.oracle),
            opt_num(r.oracle_error),
            num(r.star_volume),
            num(r.star_std_error),
        ]);
    }
    for (label, f) in [("estimate", &sw.estimate_fit), ("oracle", &sw.oracle_fit), ("star", &sw.star_fit)] {
        if let Some(f) = f {
            eprintln!("{} {label}: slope {:.4} (R^2 {:.4})", s.d.name, f.slope, f.r2);
        }
    }
    Outcome::new(&s.d.name, &sw, table)
}

fn star_volume(t: &Target, delta: f64, c: f64, samples: usize, isotropic: Option<f64>, seed: u64) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let v = match isotropic {
        Some(f0) => {
            if !(f0 > 0.0) {
                bail!("isotropic weight must be positive");
            }
            star_volume_with(s.d.n, |_| f0, c, samples, seed)
        }
        None => {
            let frame = s.provider.frame(&s.d, &s.p, delta);
            star_ball_volume(&frame, &s.p, delta, c, s.m, samples, seed)?
        }
    };
    let table = Table::pairs(&[("volume", num(v.value)), ("std_error", num(v.std_error)), ("samples", v.samples.to_string())]);
    Outcome::new(&s.d.name, &json!({ "point": s.input_point(), "delta": delta, "c": c, "isotropic": isotropic, "volume": v }), table)
}

fn herbort_cert(t: &Target, delta: &str, k: f64, assert_separable: bool) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let grid = parse_grid(delta)?;
    let r = separation_certificate(&s.d, &s.p, &grid, k)?;
    eprintln!("{}: {}", s.d.name, r.verdict);
    let mut table = Table::new(&["domain", "delta", "f_first", "f_second", "f_sum", "s", "threshold"]);
    for row in &r.rows {
        table.push(vec![
            s.d.name.clone(),
            num(row.delta),
            num(row.f_first),
            num(row.f_second),
            num(row.f_sum),
            num(row.s),
            num(r.threshold),
        ]);
    }
    let ok = !assert_separable || r.verdict == Verdict::NoObstructionFound;
    Ok(Outcome::new(&s.d.name, &r, table)?.require(ok))
}

#[derive(Serialize)]
struct PshSummary {
    point: String,
    delta: f64,
    a: f64,
    b_const: f64,
    d_const: f64,
    eb_constant: f64,
    gamma1: f64,
    bound: f64,
    pieces: usize,
    cover: usize,
    schedule: Vec<ScheduleEntry>,
}

fn assemble(s: &Setup, a: &PshArgs, seed: u64) -> Result<PshAssembly> {
    let cfg = PshConfig {
        c: a.c,
        lambda: a.lambda,
        a: a.a,
        lattice: a.lattice,
        cover_cap: a.cover_cap,
        seed,
        ..PshConfig::default()
    };
    Ok(assemble_h(&s.d, s.provider, &s.p, a.delta, &cfg)?)
}

fn psh_summary(s: &Setup, asm: &PshAssembly) -> PshSummary {
    PshSummary {
        point: s.input_point(),
        delta: asm.delta,
        a: asm.a,
        b_const: asm.b_const,
        d_const: asm.d_const,
        eb_constant: asm.eb_constant,
        gamma1: asm.gamma1,
        bound: asm.bound,
        pieces: asm.pieces.len(),
        cover: asm.cover.len(),
        schedule: asm.schedule.clone(),
    }
}

fn psh_build(t: &Target, a: &PshArgs, seed: u64) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let asm = assemble(&s, a, seed)?;
    let sm = psh_summary(&s, &asm);
    let mut table = Table::new(&["domain", "tuple", "a_f", "b_f", "eps_f", "pieces"]);
    for e in &sm.schedule {
        table.push(vec![s.d.name.clone(), e.tuple.join(" "), num(e.a_f), num(e.b_f), num(e.eps_f), e.pieces.to_string()]);
    }
    Outcome::new(&s.d.name, &sm, table)
}

fn psh_verify(t: &Target, a: &PshArgs, points: usize, directions: usize, beta_max: Option<f64>, seed: u64) -> Result<Outcome> {
    let s = Setup::new(t)?;
    let asm = assemble(&s, a, seed)?;
    let grid = asm.strip_grid(&s.d, points, seed);
    let r = verify_adapted(&asm, &asm.frame, s.m, a.delta, &grid, directions, seed)?;
    let table = Table::pairs(&[
        ("beta", num(r.beta)),
        ("condition1", num(r.condition1.ratio)),
        ("condition2", num(r.condition2.ratio)),
        ("condition3", num(r.condition3.ratio)),
        ("min_hessian_eigenvalue", num(r.min_hessian_eigenvalue)),
        ("points", r.points.to_string()),
    ]);
    let ok = r.beta.is_finite() && beta_max.map_or(true, |b| r.beta <= b);
    Ok(Outcome::new(&s.d.name, &json!({ "assembly": psh_summary(&s, &asm), "beta": r }), table)?.require(ok))
}

#[allow(clippy::too_many_arguments)]
fn localize(
    t: &Target,
    d: f64,
    origin: f64,
    delta: &str,
    factors: &str,
    combos: usize,
    eb1: Option<usize>,
    levi_samples: usize,
    max_ratio: Option<f64>,
    seed: u64,
) -> Result<Outcome> {
    let base = load_domain(&t.domain)?;
    let grid = parse_grid(delta)?;
    let factors: Vec<f64> = factors
        .split(',')
        .map(|f| f.trim().parse::<f64>().with_context(|| format!("bad factor {f:?}")))
        .collect::<Result<_>>()?;
    let ld = LocalizedDomain::new(base, d, origin, levi_samples, seed)?;
    let rows = localization_sweep(&ld, &grid, &factors, combos, seed)?;
    let certs = match eb1 {
        Some(k) => localized_eb1(&ld, *grid.last().expect("nonempty grid"), k, 2000, seed)?,
        None => Vec::new(),
    };
    let mut table = Table::new(&["domain", "delta", "dist", "max_ratio", "comparisons"]);
    for r in &rows {
        for rep in &r.reports {
            table.push(vec![
                ld.base.name.clone(),
                num(r.delta),
                num(rep.dist),
                num(rep.max_ratio),
                rep.comparisons.len().to_string(),
            ]);
        }
    }
    let worst = rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    let ok = ld.levi.passed && max_ratio.map_or(true, |m| worst <= m);
    let result = json!({
        "mu": ld.mu,
        "k0": ld.k0,
        "k0_trials": ld.k0_trials,
        "levi": ld.levi,
        "rows": rows,
        "max_ratio": worst,
        "eb1": certs,
    });
    Ok(Outcome::new(&ld.base.name, &result, table)?.require(ok))
}

fn domination_label(r: &DominationResult) -> String {
    let f = |v: &[u8]| v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("");
    format!("a{}b{}L{}", f(&r.alpha0), f(&r.beta0), f(&r.a))
}

fn appendix(count: usize, max_order: usize, examples: bool, seed: u64) -> Result<Outcome> {
    let rep = corpus_sweep(count, max_order, seed)?;
    let mut table = Table::new(&["log10_k1", "cases", "max_constant", "median_constant"]);
    for b in &rep.buckets {
        table.push(vec![b.log10_k1.to_string(), b.cases.to_string(), num(b.max_constant), num(b.median_constant)]);
    }
    for v in &rep.violations {
        eprintln!("violation: {} value {} target {}", domination_label(v), v.value, v.target);
    }
    let ex: Vec<_> = if examples {
        worked_examples().into_iter().map(|(n, r)| json!({ "name": n, "result": r })).collect()
    } else {
        Vec::new()
    };
    let ok = rep.violations.is_empty();
    Ok(Outcome::new("none", &json!({ "corpus": rep, "examples": ex }), table)?.require(ok))
}
