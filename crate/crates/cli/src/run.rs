//! Experiment runners. Each returns its output files in memory; writing
//! and the manifest are handled by the caller.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use walklab_core::bounds::{
    corollary17_bound, edge_orbit_constant, empirical_domination, lamplighter_models, line_models,
    small_ball_grid, theorem11_bound, transform_agreement, MonotoneFunction,
};
use walklab_core::group::{
    enumerate_ball, growth_table, load_segment, save_segment, BallGraph, BallOptions, CayleyBall,
    GroupSpec,
};
use walklab_core::occupation::{
    counterexample_walk, occupation_exponent_fit, occupation_moment, OccupationOptions,
};
use walklab_core::profiles::{
    cheeger_consistency, csc_lower, csc_scale, lambda_lower_from_phi, profile_exact_small,
    profile_upper, structured_candidates, Kind, ProfileTable, Quantity, UpperOptions,
};
use walklab_core::prooflab::{
    first_moment_identity_check, markov_step_check, prop21_verify, wall_chi,
    wall_normalization_check, Chi, FiniteChain, Verdict, WallMetric,
};
use walklab_core::regularity::{
    doubling_diagnostic, growth_product_check, slowly_varying_diagnostic, tilde_interpolate,
};
use walklab_core::walk::{exit_time_series, monte_carlo_small_ball, Evolver};

use crate::config::*;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, fmt_opt, to_json, Table};

/// Soft flags: the run succeeded but a result needs attention.
pub const FLAG_EXTRAPOLATED: &str = "EXTRAPOLATED";
pub const FLAG_VACUOUS: &str = "VACUOUS";
pub const FLAG_VIOLATIONS: &str = "VIOLATIONS";

#[derive(Clone, Debug, Default)]
pub struct Outputs {
    /// File name and contents, in emission order.
    pub files: Vec<(String, Vec<u8>)>,
    pub flags: Vec<String>,
    /// Provenance kinds appearing in each file.
    pub kinds: BTreeMap<String, Vec<String>>,
    /// External inputs read, with their SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Ball cache hits and misses, for the manifest.
    pub cache: Vec<String>,
}

impl Outputs {
    fn text(&mut self, name: &str, body: String, kinds: &[&str]) {
        self.files.push((name.into(), body.into_bytes()));
        if !kinds.is_empty() {
            self.kinds
                .insert(name.into(), kinds.iter().map(|s| s.to_string()).collect());
        }
    }

    fn table(&mut self, name: &str, t: &Table) -> CliResult<()> {
        let mut kinds: Vec<String> = match t.column("kind") {
            Some(c) => t
                .rows
                .iter()
                .flat_map(|r| r[c].split('+').map(str::to_string).collect::<Vec<_>>())
                .collect(),
            None => Vec::new(),
        };
        kinds.sort();
        kinds.dedup();
        self.files.push((name.into(), t.to_csv()?.into_bytes()));
        if !kinds.is_empty() {
            self.kinds.insert(name.into(), kinds);
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T, kinds: &[&str]) -> CliResult<()> {
        let body = to_json(v)?;
        self.text(name, body, kinds);
        Ok(())
    }

    fn flag(&mut self, f: &str) {
        if !self.flags.iter().any(|x| x == f) {
            self.flags.push(f.into());
        }
    }
}

/// Where configs resolve relative paths and the ball cache lives.
#[derive(Clone, Debug, Default)]
pub struct Context {
    pub base_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

impl Context {
    pub fn from_env(base_dir: PathBuf) -> Self {
        let cache_dir = std::env::var_os("WALKLAB_CACHE_DIR")
            .filter(|v| !v.is_empty())
            .map(PathBuf::from);
        Self {
            base_dir,
            cache_dir,
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Ball graph, through the segment cache when one is configured.
    fn graph(&self, group: &GroupName, radius: u32, out: &mut Outputs) -> CliResult<BallGraph> {
        let Some(dir) = &self.cache_dir else {
            return Ok(enumerate_ball(&group.spec, radius, BallOptions::default())?.into_graph());
        };
        let file = dir.join(format!(
            "{}_r{radius}.wlkb",
            group.spec.name().replace(':', "_")
        ));
        if file.exists() {
            if let Ok(g) = load_segment(&file) {
                if g.radius() == radius && g.degree() == group.spec.degree() {
                    out.cache.push(format!("hit {}", file.display()));
                    return Ok(g);
                }
            }
        }
        let g = enumerate_ball(&group.spec, radius, BallOptions::default())?.into_graph();
        std::fs::create_dir_all(dir)?;
        // Write then rename so a concurrent reader never sees a partial file.
        let tmp = file.with_extension(format!("tmp{}", std::process::id()));
        save_segment(&g, &tmp)?;
        std::fs::rename(&tmp, &file)?;
        out.cache.push(format!("miss {}", file.display()));
        Ok(g)
    }
}

fn ball(group: &GroupSpec, radius: u32) -> CliResult<CayleyBall> {
    Ok(enumerate_ball(group, radius, BallOptions::default())?)
}

pub fn run(exp: &Experiment, ctx: &Context) -> CliResult<Outputs> {
    let mut out = Outputs::default();
    match exp {
        Experiment::Ball(c) => run_ball(c, ctx, &mut out)?,
        Experiment::Walk(c) => run_walk(c, ctx, &mut out)?,
        Experiment::Profile(c) => run_profile(c, &mut out)?,
        Experiment::Bound(c) => run_bound(c, ctx, &mut out)?,
        Experiment::Domination(c) => run_domination(c, ctx, &mut out)?,
        Experiment::Prooflab(c) => run_prooflab(c, &mut out)?,
        Experiment::Regularity(c) => run_regularity(c, &mut out)?,
        Experiment::Occupation(c) => run_occupation(c, &mut out)?,
    }
    Ok(out)
}

#[derive(Serialize)]
struct BallSummary<'a> {
    group: &'a str,
    radius: u32,
    size: usize,
    degree: usize,
    growth: Vec<u64>,
    edge_orbit_constant: String,
}

fn run_ball(c: &BallConfig, ctx: &Context, out: &mut Outputs) -> CliResult<()> {
    let g = ctx.graph(&c.group, c.radius, out)?;
    let growth = g.growth();
    let mut t = Table::new(&["r", "volume", "kind"]);
    for (r, v) in growth.iter().enumerate() {
        t.push(vec![r.to_string(), v.to_string(), "EXACT".into()]);
    }
    let summary = BallSummary {
        group: &c.group.text,
        radius: c.radius,
        size: g.len(),
        degree: g.degree(),
        growth,
        edge_orbit_constant: edge_orbit_constant(&c.group.spec).to_string(),
    };
    out.json("ball.json", &summary, &["EXACT"])?;
    out.table("growth.csv", &t)?;
    let mut seg = Vec::new();
    walklab_core::group::write_segment(&g, &mut seg)?;
    out.files.push(("ball.wlkb".into(), seg));
    Ok(())
}

/// Ball graph from a segment file, checked against the group and radii.
fn segment(c: &WalkConfig, path: &Path, ctx: &Context, out: &mut Outputs) -> CliResult<BallGraph> {
    let full = ctx.resolve(path);
    let bytes = std::fs::read(&full)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", full.display())))?;
    out.inputs.insert(
        path.display().to_string(),
        crate::output::sha256_hex(&bytes),
    );
    let g = walklab_core::group::read_segment(bytes.as_slice())
        .map_err(|e| CliError::invalid("/ball", format!("{}: {e}", full.display())))?;
    if g.degree() != c.group.spec.degree() {
        return Err(CliError::invalid(
            "/ball",
            format!(
                "segment has degree {} but {} has {} generators",
                g.degree(),
                c.group.text,
                c.group.spec.degree()
            ),
        ));
    }
    for (ptr, rs) in [("/rs", &c.rs), ("/exit_radii", &c.exit_radii)] {
        if let Some((i, r)) = rs.iter().enumerate().find(|(_, &r)| r > g.radius()) {
            return Err(CliError::invalid(
                &format!("{ptr}/{i}"),
                format!("radius {r} exceeds segment radius {}", g.radius()),
            ));
        }
    }
    Ok(g)
}

fn run_walk(c: &WalkConfig, ctx: &Context, out: &mut Outputs) -> CliResult<()> {
    let kernel = c.kernel.build(&c.group.spec)?;
    let g = match (&c.ball, c.radius) {
        (Some(path), _) => segment(c, path, ctx, out)?,
        (None, Some(radius)) => ctx.graph(&c.group, radius, out)?,
        (None, None) => return Err(CliError::invalid("/radius", "need `radius` or `ball`")),
    };
    let mut steps = c.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let mut t = Table::new(&[
        "k", "r", "lo", "hi", "estimate", "ci_lo", "ci_hi", "leaked", "kind",
    ]);
    let mut ev = Evolver::<f64>::new(&g, &kernel)?;
    let mut rows = Vec::new();
    for &k in &steps {
        ev.run(k as usize);
        let d = ev.distribution();
        for &r in &c.rs {
            rows.push((k, r, d.refined_interval(&g, r), d.leaked));
        }
    }
    // Sampling only needs states out to the largest small-ball radius.
    let mc_ball = match &c.monte_carlo {
        Some(_) => Some(ball(
            &c.group.spec,
            c.rs.iter().copied().max().unwrap_or(0),
        )?),
        None => None,
    };
    for (k, r, iv, leaked) in rows {
        let mut kind = if iv.lo == iv.hi {
            "EXACT".to_string()
        } else {
            "LOWER+UPPER".to_string()
        };
        let (mut est, mut ci_lo, mut ci_hi) = (String::new(), String::new(), String::new());
        if let (Some(mc), Some(b)) = (&c.monte_carlo, &mc_ball) {
            // Distinct streams per (k, r) so that rows are independent.
            let seed = mc.seed ^ (k << 20) ^ r as u64;
            let e = monte_carlo_small_ball(b, &kernel, k as usize, r, mc.samples, seed)?;
            (est, ci_lo, ci_hi) = (fmt_f64(e.estimate), fmt_f64(e.ci.lo), fmt_f64(e.ci.hi));
            kind.push_str("+MC");
        }
        t.push(vec![
            k.to_string(),
            r.to_string(),
            fmt_f64(iv.lo),
            fmt_f64(iv.hi),
            est,
            ci_lo,
            ci_hi,
            fmt_f64(leaked),
            kind,
        ]);
    }
    out.table("walk.csv", &t)?;
    if !c.exit_radii.is_empty() {
        let k_max = *steps.last().unwrap() as usize;
        let mut e = Table::new(&["r", "k", "survival", "kind"]);
        for &r in &c.exit_radii {
            let series = exit_time_series::<f64>(&g, &kernel, r, k_max)?;
            for &k in &steps {
                e.push(vec![
                    r.to_string(),
                    k.to_string(),
                    fmt_f64(series[k as usize]),
                    "EXACT".into(),
                ]);
            }
        }
        out.table("exit.csv", &e)?;
    }
    Ok(())
}

fn profile_rows(t: &mut Table, table: &ProfileTable) {
    let q = match table.quantity {
        Quantity::Phi => "phi",
        Quantity::Lambda => "lambda",
    };
    for p in &table.points {
        let kind = serde_json::to_value(p.kind)
            .unwrap()
            .as_str()
            .unwrap()
            .to_string();
        t.push(vec![
            q.into(),
            p.n.to_string(),
            fmt_f64(p.value),
            kind,
            p.witness.clone(),
        ]);
    }
}

#[derive(Serialize)]
struct ProfileOutput<'a> {
    group: &'a str,
    radius: u32,
    phi: ProfileTable,
    lambda: ProfileTable,
    cheeger: walklab_core::profiles::CheegerReport,
}

fn run_profile(c: &ProfileConfig, out: &mut Outputs) -> CliResult<()> {
    let kernel = c.kernel.build(&c.group.spec)?;
    let b = ball(&c.group.spec, c.radius)?;
    let g = b.graph();
    let mut phi = ProfileTable::new(Quantity::Phi);
    let mut lambda = ProfileTable::new(Quantity::Lambda);
    if c.exact_n > 0 {
        let (p, l) = profile_exact_small(g, &kernel, c.exact_n)?;
        phi = p;
        lambda = l;
    }
    if !c.grid.is_empty() {
        let mut opts = UpperOptions {
            seed: c.seed,
            ..UpperOptions::default()
        };
        if let Some(it) = c.iterations {
            opts.iterations = it;
        }
        let max_n = *c.grid.iter().max().unwrap() as usize;
        let extra = structured_candidates(&b, max_n);
        let up = profile_upper(g, &kernel, &c.grid, c.strategy()?, &opts, &extra)?;
        phi.points.extend(up.phi.points);
        phi.witnesses.extend(up.phi.witnesses);
        phi.notes.extend(up.phi.notes);
        lambda.points.extend(up.lambda.points);
        lambda.witnesses.extend(up.lambda.witnesses);
        lambda.notes.extend(up.lambda.notes);
    }
    if c.csc {
        let mut ns: Vec<u64> = (1..=c.exact_n as u64)
            .chain(c.grid.iter().copied())
            .collect();
        ns.sort_unstable();
        ns.dedup();
        let growth = g.growth();
        // The growth bound at n reads Gr up to 2n.
        let top = *growth.last().unwrap();
        ns.retain(|&n| 2 * n <= top);
        let low = csc_lower(&growth, g.degree(), csc_scale(&kernel), &ns)?;
        let low_lambda = lambda_lower_from_phi(&low);
        phi.points.extend(low.points);
        lambda.points.extend(low_lambda.points);
    }
    let cheeger = cheeger_consistency(&phi, &lambda, 1e-9);
    if !cheeger.violations.is_empty() {
        out.flag(FLAG_VIOLATIONS);
    }
    let mut t = Table::new(&["quantity", "n", "value", "kind", "witness"]);
    profile_rows(&mut t, &phi);
    profile_rows(&mut t, &lambda);
    let res = ProfileOutput {
        group: &c.group.text,
        radius: c.radius,
        phi,
        lambda,
        cheeger,
    };
    out.json("profile.json", &res, &["EXACT", "LOWER", "UPPER"])?;
    out.table("profile.csv", &t)?;
    Ok(())
}

/// `(Φ upper, Λ lower, provenance kind of the resulting bound)`.
fn models(
    m: &ModelConfig,
    ctx: &Context,
    out: &mut Outputs,
) -> CliResult<(MonotoneFunction, MonotoneFunction, &'static str)> {
    match m {
        ModelConfig::Line => {
            let (p, l) = line_models();
            Ok((p, l, "UPPER"))
        }
        ModelConfig::Lamplighter { radius } => {
            let growth = growth_table(
                &GroupSpec::lamplighter(2, 1),
                *radius,
                BallOptions::default(),
            )?;
            let (p, l) = lamplighter_models(&growth);
            Ok((p, l, "UPPER"))
        }
        ModelConfig::PowerLog { phi, lambda } => {
            let p = MonotoneFunction::power_log(phi[0], phi[1], phi[2])
                .map_err(|e| CliError::invalid("/models/phi", e.to_string()))?;
            let l = MonotoneFunction::power_log(lambda[0], lambda[1], lambda[2])
                .map_err(|e| CliError::invalid("/models/lambda", e.to_string()))?;
            Ok((p, l, "MODEL"))
        }
        ModelConfig::Table { path } => {
            let full = ctx.resolve(path);
            let bytes = std::fs::read(&full)
                .map_err(|e| CliError::MissingInput(format!("{}: {e}", full.display())))?;
            out.inputs.insert(
                path.display().to_string(),
                crate::output::sha256_hex(&bytes),
            );
            let v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| {
                CliError::invalid("/models/path", format!("{}: {e}", full.display()))
            })?;
            let table = |key: &str| -> CliResult<ProfileTable> {
                serde_json::from_value(v[key].clone()).map_err(|e| {
                    CliError::invalid(
                        "/models/path",
                        format!("{}: bad `{key}` table: {e}", full.display()),
                    )
                })
            };
            let p = MonotoneFunction::from_table(&table("phi")?, &[Kind::Exact, Kind::Upper])?;
            let l = MonotoneFunction::from_table(&table("lambda")?, &[Kind::Exact, Kind::Lower])?;
            Ok((p, l, "UPPER"))
        }
    }
}

fn run_bound(c: &BoundConfig, ctx: &Context, out: &mut Outputs) -> CliResult<()> {
    let (phi, lambda, kind) = models(&c.models, ctx, out)?;
    let mut t = Table::new(&[
        "k",
        "r",
        "ell_star",
        "rhs",
        "volume",
        "regime",
        "extrapolated",
        "kind",
    ]);
    let mut all_vacuous = true;
    for &k in &c.ks {
        for &r in &c.rs {
            let b = theorem11_bound(k, r, &lambda, &phi, c.c)?;
            all_vacuous &= b.ell_star == 0;
            if b.extrapolated {
                out.flag(FLAG_EXTRAPOLATED);
            }
            t.push(vec![
                k.to_string(),
                r.to_string(),
                b.ell_star.to_string(),
                fmt_f64(b.rhs),
                fmt_opt(b.volume),
                b.regime,
                b.extrapolated.to_string(),
                kind.into(),
            ]);
        }
    }
    if all_vacuous {
        out.flag(FLAG_VACUOUS);
    }
    out.table("bound.csv", &t)?;
    if let Some(tr) = &c.transforms {
        let agree = transform_agreement(&lambda, &tr.ns)?;
        let mut t = Table::new(&["n", "psi_exponent", "doubling_exponent", "ratio", "kind"]);
        for r in &agree.rows {
            t.push(vec![
                fmt_f64(r.n),
                fmt_f64(r.psi_exponent),
                fmt_f64(r.doubling_exponent),
                fmt_f64(r.ratio),
                "MODEL".into(),
            ]);
        }
        out.table("transforms.csv", &t)?;
    }
    if let Some(cc) = &c.cor17 {
        let mut t = Table::new(&[
            "k",
            "r",
            "diffusive",
            "return_exponent",
            "value",
            "regime",
            "crossover",
            "kind",
        ]);
        for &k in &cc.ks {
            let rep = corollary17_bound(
                k,
                cc.r,
                cc.beta,
                cc.c,
                &lambda,
                walklab_core::bounds::DOUBLING_THRESHOLD,
            )?;
            t.push(vec![
                fmt_f64(k),
                fmt_f64(cc.r),
                fmt_f64(rep.diffusive),
                fmt_f64(rep.return_exponent),
                fmt_f64(rep.value),
                rep.regime,
                fmt_opt(rep.crossover),
                "MODEL".into(),
            ]);
        }
        out.table("cor17.csv", &t)?;
    }
    Ok(())
}

fn run_domination(c: &DominationConfig, ctx: &Context, out: &mut Outputs) -> CliResult<()> {
    let kernel = c.kernel.build(&c.group.spec)?;
    let g = ctx.graph(&c.group, c.radius, out)?;
    let (phi, lambda, _) = models(&c.models, ctx, out)?;
    let measured = small_ball_grid(&g, &kernel, &c.ks, &c.rs)?;
    let rep = empirical_domination(&measured, &phi, &lambda, c.c)?;
    let mut t = Table::new(&[
        "k",
        "r",
        "measured_lo",
        "measured_hi",
        "ell_star",
        "rhs",
        "ok",
        "kind",
    ]);
    for p in &rep.points {
        t.push(vec![
            p.k.to_string(),
            p.r.to_string(),
            fmt_f64(p.measured.lo),
            fmt_f64(p.measured.hi),
            p.ell_star.to_string(),
            fmt_f64(p.rhs),
            p.ok.to_string(),
            "UPPER".into(),
        ]);
    }
    if rep.violations > 0 {
        out.flag(FLAG_VIOLATIONS);
    }
    if rep.points.iter().all(|p| p.ell_star == 0) {
        out.flag(FLAG_VACUOUS);
    }
    out.table("domination.csv", &t)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        group: &'a str,
        points: usize,
        non_vacuous: usize,
        violations: usize,
        phi: String,
        lambda: String,
        c: f64,
    }
    let s = Summary {
        group: &c.group.text,
        points: rep.points.len(),
        non_vacuous: rep.points.iter().filter(|p| p.ell_star > 0).count(),
        violations: rep.violations,
        phi: rep.phi.clone(),
        lambda: rep.lambda.clone(),
        c: c.c,
    };
    out.json("domination.json", &s, &[])?;
    Ok(())
}

fn chi_text(c: &Option<Chi>) -> String {
    match c {
        Some(Chi::Finite(k)) => k.to_string(),
        Some(Chi::Infinite) => "INFINITE".into(),
        None => String::new(),
    }
}

#[derive(Serialize)]
struct WallOutput {
    group: String,
    set_size: usize,
    normalization: walklab_core::prooflab::NormalizationReport,
    first_moment: Vec<walklab_core::prooflab::FirstMomentReport>,
    /// `χ_W(ℓ)`; `None` when not reached within half the ball radius.
    chi: Vec<(u32, Option<usize>)>,
    markov: Vec<walklab_core::prooflab::MarkovReport>,
}

fn run_prooflab(c: &ProoflabConfig, out: &mut Outputs) -> CliResult<()> {
    if let Some(ch) = &c.chains {
        let mut t = Table::new(&[
            "chain", "n", "ell", "m", "chi", "lambda", "rhs", "slack", "verdict", "kind",
        ]);
        let (mut fails, mut real) = (0, 0);
        for i in 0..ch.count {
            let chain = FiniteChain::random(ch.size, ch.density, ch.seed.wrapping_add(i as u64))?;
            for &n in &c.ns {
                for &ell in &c.ells {
                    let rep = prop21_verify(&chain, n, ell)?;
                    let verdict = match rep.verdict {
                        Verdict::Pass => "PASS",
                        Verdict::Fail => "FAIL",
                        Verdict::Vacuous => "VACUOUS",
                    };
                    fails += (rep.verdict == Verdict::Fail) as usize;
                    real += (rep.verdict != Verdict::Vacuous) as usize;
                    t.push(vec![
                        i.to_string(),
                        n.to_string(),
                        ell.to_string(),
                        rep.m.to_string(),
                        chi_text(&rep.chi),
                        fmt_opt(rep.lambda),
                        fmt_opt(rep.rhs),
                        fmt_opt(rep.slack),
                        verdict.into(),
                        "EXACT".into(),
                    ]);
                }
            }
        }
        if fails > 0 {
            out.flag(FLAG_VIOLATIONS);
        }
        if real == 0 {
            out.flag(FLAG_VACUOUS);
        }
        out.table("prop21.csv", &t)?;
    }
    if let Some(w) = &c.wall {
        let b = ball(&w.group.spec, w.radius)?;
        let members: Vec<u32> = (0..b.volume(w.set_radius) as u32).collect();
        let ctx = WallMetric::from_ball(&b, &members)?;
        let kernel = walklab_core::walk::Kernel::uniform(w.group.spec.degree());
        let normalization = wall_normalization_check(&ctx);
        let mut first_moment = Vec::new();
        for &k in &w.ks {
            first_moment.push(first_moment_identity_check(&ctx, &b, &kernel, k)?);
        }
        // The Markov step applies from k = χ_W(ℓ) on; test there and beyond.
        let mut markov = Vec::new();
        let mut chi = Vec::new();
        for &ell in &w.ells {
            let c = wall_chi(&ctx, &b, &kernel, ell, w.radius as usize / 2)?;
            chi.push((ell, c));
            if let Some(c) = c {
                let mut ks = vec![c, c + 1, 2 * c];
                ks.dedup();
                for k in ks.into_iter().filter(|&k| k <= w.radius as usize) {
                    markov.push(markov_step_check(
                        &ctx,
                        &b,
                        &kernel,
                        ell,
                        k,
                        Some(c as f64),
                    )?);
                }
            }
        }
        if !w.ells.is_empty() && markov.is_empty() {
            out.flag(FLAG_VACUOUS);
        }
        if !normalization.pass
            || first_moment.iter().any(|r| !r.pass)
            || markov.iter().any(|r| !r.pass)
        {
            out.flag(FLAG_VIOLATIONS);
        }
        let res = WallOutput {
            group: w.group.text.clone(),
            set_size: ctx.size(),
            normalization,
            first_moment,
            chi,
            markov,
        };
        out.json("wall.json", &res, &["EXACT"])?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RegularityEntry {
    name: String,
    power_log: [f64; 3],
    doubling: walklab_core::regularity::DoublingReport,
    slow: walklab_core::regularity::SlowVaryReport,
    tilde: Result<walklab_core::regularity::TildeReport, String>,
}

fn run_regularity(c: &RegularityConfig, out: &mut Outputs) -> CliResult<()> {
    let mut entries = Vec::new();
    let mut t = Table::new(&[
        "name",
        "doubling_min_ratio",
        "doubling",
        "slow_top_sup",
        "slow_top_inf",
        "slowly_varying",
        "tilde",
        "tilde_slowly_varying",
        "sandwich",
        "kind",
    ]);
    for (i, p) in c.profiles.iter().enumerate() {
        let [a, pp, q] = p.power_log;
        let f = MonotoneFunction::power_log(a, pp, q)
            .map_err(|e| CliError::invalid(&format!("/profiles/{i}/power_log"), e.to_string()))?;
        let doubling = doubling_diagnostic(&f, c.m_lo.max(1)..=c.m_hi / 2, c.threshold)?;
        let t_lo = 2f64.powi(c.m_lo.max(1) as i32);
        let slow = slowly_varying_diagnostic(&|x| f.eval(x), t_lo, 2f64.powi(c.m_hi as i32))?;
        let tilde = match tilde_interpolate(&f, c.m_lo, c.m_hi, c.variant, c.threshold) {
            Ok(r) => Ok(r),
            Err(e @ walklab_core::Error::NotDoubling { .. }) => Err(e.code().to_string()),
            Err(e) => return Err(e.into()),
        };
        let pf = |b: bool| if b { "PASS" } else { "FAIL" }.to_string();
        let (tilde_status, tilde_slow, sandwich) = match &tilde {
            Ok(r) => (
                "OK".to_string(),
                pf(r.primary().slow.pass),
                pf(r.primary().sandwich_holds),
            ),
            Err(code) => (code.clone(), String::new(), String::new()),
        };
        t.push(vec![
            p.name.clone(),
            fmt_f64(doubling.min_ratio),
            pf(doubling.pass),
            fmt_f64(slow.top_sup),
            fmt_f64(slow.top_inf),
            pf(slow.pass),
            tilde_status,
            tilde_slow,
            sandwich,
            "EXACT".into(),
        ]);
        entries.push(RegularityEntry {
            name: p.name.clone(),
            power_log: p.power_log,
            doubling,
            slow,
            tilde,
        });
    }
    out.table("regularity.csv", &t)?;
    out.json("regularity.json", &entries, &["EXACT"])?;
    if let Some(pc) = &c.product {
        let g = growth_table(&GroupSpec::zd(1), pc.radius, BallOptions::default())?;
        let gm = growth_table(&GroupSpec::zd(pc.m), pc.radius, BallOptions::default())?;
        let rep = growth_product_check(&g, &gm, pc.m, 2)?;
        if !rep.pass {
            out.flag(FLAG_VIOLATIONS);
        }
        out.json("product.json", &rep, &["EXACT"])?;
    }
    Ok(())
}

fn run_occupation(c: &OccupationConfig, out: &mut Outputs) -> CliResult<()> {
    let kernel = c.kernel.build(&c.group.spec)?;
    let b = ball(&c.group.spec, c.radius())?;
    let opts = OccupationOptions {
        horizon: c.horizon,
        leak_budget: c.leak_budget,
        tail: c.tail(),
    };
    let rep = occupation_moment(&b, &kernel, &c.r, &c.p, &opts)?;
    let mut t = Table::new(&[
        "r", "p", "horizon", "partial", "error", "tail", "total", "status", "kind",
    ]);
    for row in &rep.rows {
        let status = serde_json::to_value(row.status)
            .unwrap()
            .as_str()
            .unwrap()
            .to_string();
        let kind = if row.total.is_some() {
            "MODEL"
        } else {
            "LOWER"
        };
        t.push(vec![
            row.r.to_string(),
            row.p.to_string(),
            row.horizon.to_string(),
            fmt_f64(row.partial),
            fmt_f64(row.error),
            fmt_opt(row.tail),
            fmt_opt(row.total),
            status,
            kind.into(),
        ]);
    }
    out.table("occupation.csv", &t)?;
    let mut fits = Vec::new();
    for &p in &c.p {
        match occupation_exponent_fit(&rep, p) {
            Ok(f) => fits.push(f),
            Err(walklab_core::Error::InsufficientData { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        report: &'a walklab_core::occupation::OccupationReport,
        fits: Vec<walklab_core::occupation::OccupationFit>,
    }
    out.json(
        "occupation.json",
        &Summary { report: &rep, fits },
        &["MODEL", "LOWER"],
    )?;
    if let Some(cx) = &c.counterexample {
        let rep = counterexample_walk(&cx.law, cx.n, cx.samples, cx.seed)?;
        let mut t = Table::new(&[
            "step",
            "mean_distance",
            "max_distance",
            "mean_window",
            "formula",
            "simulated",
            "z",
            "kind",
        ]);
        for s in &rep.steps {
            t.push(vec![
                s.step.to_string(),
                fmt_f64(s.mean_distance),
                s.max_distance.to_string(),
                fmt_f64(s.mean_window),
                fmt_f64(s.formula),
                fmt_f64(s.simulated),
                fmt_f64(s.z),
                "MC".into(),
            ]);
        }
        out.table("counterexample.csv", &t)?;
    }
    Ok(())
}
