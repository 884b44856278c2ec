use crate::config::{Experiment, RunConfig, SetKind};
use crate::error::Result;
use crate::record::{Provenance, RunContext, Table};
use crate::row;
use pamlab::constants::{c_d, constants_report, spatial_dimension, spatiotemporal_dimension, kappa_d};
use pamlab::evolution::{evolve_crank_nicolson, evolve_krylov, evolve_spectral, tiled_solution, write_snapshot, InitialData, TileConfig};
use pamlab::fk::{fk_estimate, simulate_paths, DriftPackage, ResolventOptions};
use pamlab::fractal::{block_lemma_fixture, default_rho_grid, dim_estimate, skeleton, AxisLine, CoverReport, FullLattice, IntCloud};
use pamlab::seed::{label_hash, SeedRegistry};
use pamlab::spectrum::{dense_eigenpairs, eigenvalue_tail_mc, growth_study, StudyGrid};
use pamlab::{assemble, make_box, renorm_constant, sample_noise, top_eigenpairs, HamiltonianOperator, LatticeBox, PamError, Spectrum};
use serde_json::json;

/// Dense cross-checks are run on grids up to this many unknowns.
const DENSE_LIMIT: usize = 400;

pub fn dispatch(cfg: &RunConfig, ctx: &mut RunContext) -> Result<()> {
    match cfg.experiment() {
        Experiment::Spectrum => spectrum(cfg, ctx),
        Experiment::Tails => tails(cfg, ctx),
        Experiment::Growth => growth(cfg, ctx),
        Experiment::EvolveCompare => evolve_compare(cfg, ctx),
        Experiment::FkCompare => fk_compare(cfg, ctx),
        Experiment::FractalDim => fractal_dim(cfg, ctx),
        Experiment::Constants => constants(cfg, ctx),
    }
}

fn provenance(cfg: &RunConfig) -> Provenance {
    Provenance {
        seed: cfg.seed(),
        side: cfg.geometry.side,
        h: cfg.geometry.h,
        epsilon: cfg.geometry.epsilon,
        t: cfg.physics.t,
    }
}

fn grid(cfg: &RunConfig) -> Result<LatticeBox> {
    let d = cfg.dim();
    Ok(make_box(&vec![0.0; d], cfg.geometry.side.unwrap_or(1.0), cfg.geometry.h.unwrap_or(1.0), d)?)
}

fn study_grid(cfg: &RunConfig) -> StudyGrid {
    let h = cfg.geometry.h.unwrap_or(0.5);
    StudyGrid {
        h,
        epsilon: cfg.geometry.epsilon.unwrap_or(h),
        d: cfg.dim(),
    }
}

fn spectrum(cfg: &RunConfig, ctx: &mut RunContext) -> Result<()> {
    let g = grid(cfg)?;
    let eps = cfg.geometry.epsilon.unwrap_or(g.spacing());
    let seed = cfg.seed();
    let nf = sample_noise(&g, eps, seed)?;
    ctx.blob("noise.bin", |w| nf.write_binary(w))?;
    let op = assemble(&nf);
    let k = cfg.physics.k.unwrap_or(5).min(g.len());
    let spec = top_eigenpairs(&op, k, None)?;
    let prov = provenance(cfg);
    let mut t = Table::new("eigenvalues", &["index", "lambda", "residual"]);
    for (i, (l, r)) in spec.eigenvalues.iter().zip(&spec.residuals).enumerate() {
        t.push(prov, row![i + 1, l, r]);
    }
    ctx.table(&t)?;
    ctx.blob("eigvec_1.bin", |w| spec.write_eigenvector(0, w, eps, seed))?;
    ctx.check_le("orthonormality_defect", spec.orthonormality_defect(), 1e-8);
    ctx.check("eigenvalues_descending", spec.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    let mut summary = spec.to_json();
    if g.len() <= DENSE_LIMIT {
        let dense = dense_eigenpairs(&op, k)?;
        let gap = spec
            .eigenvalues
            .iter()
            .zip(&dense.eigenvalues)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        ctx.check_le("dense_oracle_gap", gap, 1e-8);
        summary["dense_gap"] = json!(gap);
    }
    summary["renorm_constant"] = json!(renorm_constant(eps, g.dim()));
    ctx.summary(&summary)
}

fn tails(cfg: &RunConfig, ctx: &mut RunContext) -> Result<()> {
    let sg = study_grid(cfg);
    let side = cfg.geometry.side.unwrap_or(8.0);
    let rep = eigenvalue_tail_mc(side, &sg, None, cfg.physics.n_samples.unwrap_or(400), cfg.seed())?;
    let prov = provenance(cfg);
    let mut t = Table::new("tail", &["s", "survival", "count"]);
    for ((s, p), c) in rep.s_grid.iter().zip(&rep.survival).zip(&rep.counts) {
        t.push(prov, row![s, p, c]);
    }
    ctx.table(&t)?;
    let mut samples = Table::new("samples", &["index", "lambda1"]);
    for (i, l) in rep.samples.iter().enumerate() {
        samples.push(prov, row![i, l]);
    }
    ctx.table(&samples)?;
    ctx.check("survival_nonincreasing", rep.survival.windows(2).all(|w| w[1] <= w[0]));
    ctx.check("tail_slope_negative", rep.slope.is_some_and(|s| s < 0.0));
    let c2 = c_d(kappa_d(2, 1024)?.kappa, 2)?;
    ctx.summary(&json!({
        "slope": rep.slope,
        "window": rep.window,
        "fit": rep.fit,
        "c_hat": c2,
        "slope_over_c_hat": rep.slope.map(|s| s.abs() / c2),
        "n_samples": rep.n_samples,
    }))
}

fn growth(cfg: &RunConfig, ctx: &mut RunContext) -> Result<()> {
    let sg = study_grid(cfg);
    let sides = cfg.geometry.sides.clone().unwrap_or_default();
    let rep = growth_study(&sides, &sg, cfg.physics.n_samples.unwrap_or(20), cfg.seed())?;
    let prov = provenance(cfg);
    let mut t = Table::new("growth", &["mean_lambda1", "stderr", "n"]);
    for r in &rep.rows {
        t.push(prov.with_side(r.side), row![r.mean, r.stderr, r.n]);
    }
    ctx.table(&t)?;
    let r2 = rep.fit.as_ref().map_or(f64::NAN, |f| f.r2);
    ctx.check_le("growth_fit_r2_shortfall", 0.9 - r2, 0.0);
    ctx.summary(&json!({ "fit": rep.fit, "fit_alt": rep.fit_alt }))
}

/// Spectral solution with K grown until the truncation bound is met.
fn spectral_solution(op: &HamiltonianOperator, k0: usize, t: f64) -> Result<(pamlab::GridField, usize)> {
    let n = op.grid().len();
    if n <= DENSE_LIMIT {
        let s = dense_eigenpairs(op, n)?;
        return Ok((evolve_spectral(&s, &InitialData::Flat, t)?, n));
    }
    let mut k = k0.min(n);
    loop {
        let s: Spectrum = top_eigenpairs(op, k, None)?;
        match evolve_spectral(&s, &InitialData::Flat, t) {
            Ok(u) => return Ok((u, k)),
            Err(PamError::Truncation { .. }) if k < n => k = (k * 3 / 2).min(n),
            Err(e) => return Err(e.into()),
        }
    }
}

fn evolve_compare(cfg: &RunConfig, ctx: &mut RunContext) -> Result<()> {
    let g = grid(cfg)?;
    let eps = cfg.geometry.epsilon.unwrap_or(g.spacing());
    let (t, dt) = (cfg.physics.t.unwrap_or(1.0), cfg.physics.dt.unwrap_or(1e-3));
    let op = assemble(&sample_noise(&g, eps, cfg.seed())?);
    let (spectral, k_used) = spectral_solution(&op, cfg.physics.k.unwrap_or(160), t)?;
    ctx.blob("u_spectral.bin", |w| write_snapshot(&spectral, t, eps, cfg.seed(), w))?;
    let cn = evolve_crank_nicolson(&op, &InitialData::Flat, t, dt)?;
    let kr = evolve_krylov(&op, &InitialData::Flat, t, 1e-10)?;
    let scale = spectral.sup_norm();
    let prov = provenance(cfg);
    let mut table = Table::new("compare", &["method", "dt", "sup_rel_err", "min", "max"]);
    table.push(prov, row!["spectral", "", 0.0, spectral.min(), spectral.max()]);
    let mut errs = Vec::new();
    for (name, u, step) in [("crank-nicolson", &cn, dt.to_string()), ("krylov", &kr, String::new())] {
        let err = spectral.sub(u)?.sup_norm() / scale;
        errs.push(err);
        table.push(prov, row![name, step, err, u.min(), u.max()]);
    }
    ctx.table(&table)?;
    ctx.check_le("crank_nicolson_rel_err", errs[0], 1e-3);
    ctx.check_le("krylov_rel_err", errs[1], 1e-6);
    ctx.check_le("spectral_negativity", -spectral.min() / scale, 1e-8);
    ctx.summary(&json!({ "K": k_used, "sup": scale, "cn_rel_err": errs[0], "krylov_rel_err": errs[1] }))
}

fn fk_compare(cfg: &RunConfig, ctx: &mut RunContext) -> Result<()> {
    let g = grid(cfg)?;
    let eps = cfg.geometry.epsilon.unwrap_or(g.spacing());
    let p = &cfg.physics;
    let (t, dt, n_paths, refine) = (p.t.unwrap_or(0.5), p.dt.unwrap_or(2.5e-4), p.n_paths.unwrap_or(10_000), p.refine.unwrap_or(4));
    let probes = p.probes.clone().unwrap_or_default();
    let nf = sample_noise(&g, eps, cfg.seed())?;
    let fine = g.refined(refine)?;
    let potential = nf.realize_on(&fine)?.shifted(-renorm_constant(eps, g.dim()));
    let reference = evolve_krylov(&HamiltonianOperator::new(potential), &InitialData::Flat, t, 1e-10)?;
    let dp = DriftPackage::from_noise(&nf, refine, 1.0, &ResolventOptions::default())?;
    let mut seeds = SeedRegistry::new(cfg.seed());
    let prov = provenance(cfg);
    let mut table = Table::new("fk", &["probe", "x", "y", "fk_mean", "fk_stderr", "reference", "z", "exit_fraction"]);
    let mut worst: f64 = 0.0;
    for (i, x) in probes.iter().enumerate() {
        let s = seeds.derive(&[label_hash("fk-probe"), i as u64])?;
        let ens = simulate_paths(&dp, x, t, dt, n_paths, s)?;
        let est = fk_estimate(&dp, &InitialData::Flat, x, &ens)?;
        let r = reference.interpolate(x);
        let z = (est.mean - r) / est.stderr;
        worst = worst.max(z.abs());
        table.push(prov, row![i, x[0], x[1], est.mean, est.stderr, r, z, est.exit_fraction]);
    }
    ctx.table(&table)?;
    ctx.check_le("fk_vs_spectral_max_z", worst, 3.0);
    ctx.summary(&json!({
        "reference": "krylov on the refined lattice",
        "max_abs_z": worst,
        "drift": dp.summary_json(),
        "verdict": if worst <= 3.0 { "within 3 sigma" } else { "outside 3 sigma" },
    }))
}

fn cover_rows(table: &mut Table, prov: Provenance, tag: &str, rep: &CoverReport) {
    for (i, n) in rep.shells.iter().enumerate() {
        for (j, rho) in rep.rho_grid.iter().enumerate() {
            table.push(prov, row![tag, n, rho, rep.nu[i][j]]);
        }
    }
}

fn fractal_dim(cfg: &RunConfig, ctx: &mut RunContext) -> Result<()> {
    let f = &cfg.fractal;
    let [lo, hi] = cfg.geometry.shells.unwrap_or([3, 10]);
    let rhos = default_rho_grid(2);
    let mut table = Table::new("cover", &["set", "shell", "rho", "nu"]);
    let set = f.set.unwrap_or(SetKind::Skeleton);
    if set == SetKind::Peaks {
        let tile = TileConfig {
            d: 2,
            side: cfg.geometry.side.unwrap_or(4.0),
            h: cfg.geometry.h.unwrap_or(0.5),
            epsilon: cfg.geometry.epsilon.unwrap_or(0.5),
            t: cfg.physics.t.unwrap_or(1.0),
            extent: f.extent.unwrap_or(150),
            seed: cfg.seed(),
        };
        let samples = tiled_solution(&tile)?;
        let alphas = cfg.physics.alpha.clone().unwrap_or_default();
        let prov = provenance(cfg);
        let mut est = Vec::new();
        let mut per_alpha = Table::new("peak_dimension", &["alpha", "points", "estimate"]);
        for &a in &alphas {
            let cloud = IntCloud::new(2, samples.peak_set(tile.t, a));
            let rep = dim_estimate(&cloud, &rhos, lo..=hi);
            cover_rows(&mut table, prov, &format!("peaks@{a}"), &rep);
            per_alpha.push(prov, row![a, cloud.len(), rep.estimate.map(|e| e.to_string()).unwrap_or_default()]);
            est.push(rep.estimate);
        }
        ctx.table(&table)?;
        ctx.table(&per_alpha)?;
        let vals: Vec<f64> = est.iter().map(|e| e.unwrap_or(0.0)).collect();
        ctx.check("estimates_present", est.iter().all(Option::is_some));
        ctx.check("dimension_nonincreasing_in_alpha", vals.windows(2).all(|w| w[1] <= w[0]));
        return ctx.summary(&json!({ "alpha": alphas, "estimates": est, "tile": tile }));
    }
    let prov = Provenance {
        seed: cfg.seed(),
        ..Default::default()
    };
    let (tag, rep, expected) = match set {
        SetKind::Full => ("full", dim_estimate(&FullLattice { d: 2 }, &rhos, lo..=hi), Some(2.0)),
        SetKind::Axis => ("axis", dim_estimate(&AxisLine { d: 2, axis: 0 }, &rhos, lo..=hi), Some(1.0)),
        SetKind::Skeleton => {
            let theta = f.theta.unwrap_or(0.5);
            let sk = skeleton(theta, 2, 1..=hi)?;
            ("skeleton", dim_estimate(&sk, &rhos, lo..=hi), Some(2.0 * (1.0 - theta)))
        }
        SetKind::Block => {
            let b = block_lemma_fixture(f.q.unwrap_or(2.0), f.k.unwrap_or(1), 2, lo..=hi)?;
            ("block", dim_estimate(&b, &rhos, lo..=hi), None)
        }
        SetKind::Peaks => unreachable!(),
    };
    cover_rows(&mut table, prov, tag, &rep);
    ctx.table(&table)?;
    ctx.check("estimate_present", rep.estimate.is_some());
    if let (Some(want), Some(got)) = (expected, rep.estimate) {
        ctx.check_le("calibration_error", (got - want).abs(), 0.1);
    }
    let mut summary = rep.summary_json();
    summary["expected"] = json!(expected);
    ctx.summary(&summary)
}

fn constants(cfg: &RunConfig, ctx: &mut RunContext) -> Result<()> {
    let d = cfg.dim();
    let alphas = cfg.physics.alpha.clone().unwrap_or_default();
    let rep = constants_report(d, cfg.physics.kappa_grid.unwrap_or(1024), &alphas)?;
    let prov = Provenance {
        seed: cfg.seed(),
        ..Default::default()
    };
    let mut t = Table::new("constants", &["d", "grid", "kappa", "kappa_refined", "c_d", "alpha_zero"]);
    t.push(prov, row![d, rep.grid, rep.kappa, rep.kappa_refined, rep.c_d, rep.alpha_zero]);
    ctx.table(&t)?;
    let mut s = Table::new("spatial_dimension", &["alpha", "dimension"]);
    for (a, dim) in &rep.spatial {
        s.push(prov, row![a, dim]);
    }
    ctx.table(&s)?;
    if let (Some(betas), Some(vs)) = (&cfg.physics.beta, &cfg.physics.v) {
        let mut st = Table::new("spatiotemporal_dimension", &["beta", "v", "dimension"]);
        for (b, v) in betas.iter().zip(vs) {
            st.push(prov, row![b, v, spatiotemporal_dimension(*b, *v, d, rep.c_d)]);
        }
        ctx.table(&st)?;
    }
    ctx.check_le("kappa_grid_drift", (rep.kappa - rep.kappa_refined).abs(), 1e-3);
    ctx.check_le("vanishing_alpha_root", spatial_dimension(rep.alpha_zero, d, rep.c_d), 0.0);
    ctx.summary(&serde_json::to_value(&rep)?)
}
