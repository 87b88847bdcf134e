use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use cmps::bethe::{mu_for_gamma, oracle_table, solve_ground, BetheOptions};
use cmps::cmps::io::StateRecord;
use cmps::cmps::{density, energy_density, observables, CmpsState, ModelParams};
use cmps::excitation::composite::cloud_minimum;
use cmps::excitation::spectrum::write_spectrum_csv;
use cmps::excitation::{
    combine_topological, pair_cloud, scan_dispersion, BranchSample, ExcitationOptions, ExcitationSector,
    SpectrumOptions,
};
use cmps::ground::{optimize, tune_c_for_gamma, tune_mu_for_gamma, GroundStateResult, OptimizerConfig};
use cmps::linalg::C64;
use cmps::studies::{bound_state_row, compare_composites, hole_delta_n, linear_fit, particle_branch, BoundStateRow};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Model, RunConfig, Sector};
use crate::CliError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Numerical(format!("{}: {e}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Numerical(format!("{}: {e}", path.display())))
}

fn csv_done(mut w: csv::Writer<std::fs::File>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::Numerical(e.to_string()))
}

fn row<W: std::io::Write>(w: &mut csv::Writer<W>, cells: &[String]) -> Result<(), CliError> {
    w.write_record(cells).map_err(|e| CliError::Numerical(e.to_string()))
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Numerical(e.to_string()))?;
    std::fs::write(path, text).map_err(io_err(path))
}

/// Provenance written next to every CSV.
fn sidecar(csv: &Path, command: &str, cfg: &RunConfig, failures: &[String], extra: Value) -> Result<(), CliError> {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let v = json!({
        "command": command,
        "library_version": env!("CARGO_PKG_VERSION"),
        "data": csv.file_name().map(|n| n.to_string_lossy().to_string()),
        "config": cfg,
        "partial": !failures.is_empty(),
        "failures": failures,
        "results": extra,
        "created_unix": created,
    });
    write_json(&csv.with_extension("json"), &v)
}

fn log_failure(failures: &mut Vec<String>, msg: String) {
    eprintln!("warning: {msg}");
    failures.push(msg);
}

fn optimizer(cfg: &RunConfig) -> OptimizerConfig {
    OptimizerConfig {
        grad_tol: cfg.grad_tol,
        max_iters: cfg.max_iters,
        seed: cfg.seed,
        ..OptimizerConfig::default()
    }
}

fn excitation(cfg: &RunConfig, default_ratio: f64) -> ExcitationOptions {
    let mut o = ExcitationOptions::default();
    o.krylov.tol = cfg.krylov_tol;
    o.eig.tol = cfg.eig_tol;
    o.eig.max_restarts = cfg.max_restarts;
    o.min_schmidt_ratio = cfg.min_schmidt_ratio.unwrap_or(default_ratio);
    o
}

fn bethe_options(cfg: &RunConfig) -> BetheOptions {
    BetheOptions {
        n_quad: cfg.n_quad,
        ..BetheOptions::default()
    }
}

fn tag(cfg: &RunConfig, d: usize) -> String {
    let m = match cfg.model {
        Model::Ll => "ll",
        Model::Pairing => "pairing",
    };
    format!("{m}_D{d}")
}

/// Model parameters, tuning μ (LL) or c (pairing) to the target γ at bond dimension `d`
/// when needed; a tuning run also returns its ground state.
fn resolve_params(cfg: &RunConfig, d: usize) -> Result<(ModelParams, Option<GroundStateResult>), CliError> {
    let oc = optimizer(cfg);
    match cfg.model {
        Model::Ll => {
            let c = cfg.c.unwrap_or(1.0);
            match (cfg.mu, cfg.gamma) {
                (Some(mu), _) => Ok((ModelParams::lieb_liniger(c, mu), None)),
                (None, Some(g)) => {
                    let guess = mu_for_gamma(c, g, &bethe_options(cfg)).ok();
                    let t = tune_mu_for_gamma(c, g, d, cfg.gamma_tol, &oc, guess, None)?;
                    Ok((t.result.params, Some(t.result)))
                }
                (None, None) => Err(CliError::Config("the ll model needs mu or gamma".into())),
            }
        }
        Model::Pairing => {
            let mu = cfg.mu.ok_or_else(|| CliError::Config("the pairing model needs mu".into()))?;
            let u = C64::new(cfg.u, cfg.u_im);
            match (cfg.c, cfg.gamma) {
                (Some(c), _) => Ok((ModelParams::pairing(c, mu, u), None)),
                (None, Some(g)) => {
                    let t = tune_c_for_gamma(mu, u, g, d, cfg.gamma_tol, &oc, None, None)?;
                    Ok((t.result.params, Some(t.result)))
                }
                (None, None) => Err(CliError::Config("the pairing model needs c or gamma".into())),
            }
        }
    }
}

struct Ground {
    params: ModelParams,
    state: CmpsState,
    result: Option<GroundStateResult>,
}

fn ground(cfg: &RunConfig, d: usize) -> Result<Ground, CliError> {
    if let Some(path) = &cfg.state {
        let rec = StateRecord::load(path)?;
        let state = rec.to_state()?;
        let params = match (cfg.c, cfg.mu, rec.params) {
            (Some(_), Some(_), _) | (_, _, None) => resolve_params(cfg, state.dim())?.0,
            (_, _, Some(p)) => p,
        };
        params.validate()?;
        return Ok(Ground {
            params,
            state,
            result: None,
        });
    }
    let (params, tuned) = resolve_params(cfg, d)?;
    let result = match tuned {
        Some(r) if r.state.dim() == d => r,
        _ => optimize(&params, d, &optimizer(cfg), None)?,
    };
    Ok(Ground {
        params,
        state: result.state.clone(),
        result: Some(result),
    })
}

pub fn ground_state(cfg: &RunConfig, out: &Path) -> Result<bool, CliError> {
    let g = ground(cfg, cfg.d)?;
    let d = g.state.dim();
    let base = tag(cfg, d);
    let state_path = out.join(format!("state_{base}.json"));
    StateRecord::from_state(&g.state, Some(&g.params)).save(&state_path)?;
    let obs = observables(&g.state, &g.params);
    let converged = g.result.as_ref().is_none_or(|r| r.converged);
    let mut v = json!({
        "library_version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "params": g.params,
        "state_file": state_path.file_name().map(|n| n.to_string_lossy().to_string()),
        "D": d,
        "observables": obs,
        "converged": converged,
    });
    if let Some(r) = &g.result {
        v["grad_norm"] = json!(r.grad_norm_final);
        v["iterations"] = json!(r.iterations);
        v["rank_limited"] = json!(r.rank_limited);
        v["stages"] = json!(r.telemetry.stages);
    }
    if g.params.has_pairing() {
        // the Z₂ partner R → −R
        let partner = g.state.rotate_phase(PI);
        v["z2_partner_energy_difference"] = json!(energy_density(&partner, &g.params) - obs.e);
    }
    write_json(&out.join(format!("observables_{base}.json")), &v)?;
    println!(
        "D={d} e={:.12} rho={:.10} gamma={:.6} converged={converged}",
        obs.e, obs.rho, obs.gamma
    );
    if !converged {
        eprintln!("warning: ground state did not reach grad_tol {}", cfg.grad_tol);
    }
    Ok(converged)
}

fn sector_name(s: Sector) -> &'static str {
    match s {
        Sector::Trivial => "trivial",
        Sector::Topological => "topological",
    }
}

pub fn spectrum(cfg: &RunConfig, out: &Path) -> Result<bool, CliError> {
    let g = ground(cfg, cfg.d)?;
    let d = g.state.dim();
    let rho = density(&g.state);
    let pf = PI * rho;
    let ts = cfg.grid.points();
    let grid: Vec<f64> = ts.iter().map(|t| t * pf).collect();
    let xopts = excitation(cfg, 0.0);
    let sopts = SpectrumOptions {
        k: cfg.k,
        excitation: xopts.clone(),
        overlaps: true,
        delta_n: cfg.delta_n,
    };
    let mut all_ok = true;
    for &sec in &cfg.sectors {
        let template = match sec {
            Sector::Trivial => ExcitationSector::trivial(&g.state, 0.0),
            Sector::Topological => ExcitationSector::topological(&g.state, cfg.theta, 0.0)?,
        };
        let points = scan_dispersion(&template, &grid, &g.params, &sopts);
        let mut failures = vec![];
        for (t, pt) in ts.iter().zip(&points) {
            if let Err(e) = &pt.result {
                log_failure(&mut failures, format!("{} p = {t}·πρ: {e}", sector_name(sec)));
            }
        }
        let csv_path = out.join(format!("spectrum_{}_{}.csv", tag(cfg, d), sector_name(sec)));
        let file = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
        write_spectrum_csv(file, &points, rho, cfg.k)?;

        let lowest: Vec<BranchSample> = points
            .iter()
            .filter_map(|pt| pt.result.as_ref().ok().map(|s| BranchSample { p: pt.p, energy: s.energies[0] }))
            .collect();
        let mut extra = json!({
            "params": g.params,
            "D": d,
            "rho": rho,
            "gamma": g.params.c / rho,
            "sector": sector_name(sec),
            "theta": if sec == Sector::Topological { cfg.theta } else { 0.0 },
        });
        let topo_pi = sec == Sector::Topological && (cfg.theta - PI).abs() < 1e-12;
        let spans = ts.iter().any(|t| t.abs() <= 1.0 + 1e-9) && ts.iter().any(|t| t.abs() >= 1.0 - 1e-9);
        if topo_pi && cfg.model == Model::Ll && !spans {
            extra["composites"] = json!("skipped: the grid needs momenta on both sides of |p| = πρ");
        } else if topo_pi && cfg.model == Model::Ll {
            match composites(cfg, &g, &ts, &lowest, rho, &xopts, out, d, &mut failures) {
                Ok(v) => extra["composites"] = v,
                Err(e) => log_failure(&mut failures, format!("composites: {e}")),
            }
        }
        if topo_pi && cfg.model == Model::Pairing {
            let cloud = pair_cloud(&lowest);
            let path = out.join(format!("pair_cloud_{}.csv", tag(cfg, d)));
            let mut w = csv_writer(&path)?;
            row(&mut w, &["p".into(), "p_over_rho".into(), "energy".into()])?;
            for s in &cloud {
                row(&mut w, &[num(s.p), num(s.p / rho), num(s.energy)])?;
            }
            csv_done(w)?;
            let step = if grid.len() > 1 { (grid[1] - grid[0]).abs() } else { 0.0 };
            extra["pair_cloud_min_at_zero"] = json!(cloud_minimum(&cloud, 0.0, 0.5 * step + 1e-12));
            extra["pair_cloud_file"] = json!(path.file_name().map(|n| n.to_string_lossy().to_string()));
        }
        all_ok &= failures.is_empty();
        sidecar(&csv_path, "spectrum", cfg, &failures, extra)?;
        println!("{}: {} of {} momenta", sector_name(sec), points.len() - failures.len().min(points.len()), points.len());
    }
    Ok(all_ok)
}

/// Type I/II composites from the hole (lowest topological state, |p| ≤ πρ) and the particle
/// branch (|p| ≥ πρ) on the grid, compared with the Bethe solution.
#[allow(clippy::too_many_arguments)]
fn composites(
    cfg: &RunConfig,
    g: &Ground,
    ts: &[f64],
    lowest: &[BranchSample],
    rho: f64,
    xopts: &ExcitationOptions,
    out: &Path,
    d: usize,
    failures: &mut Vec<String>,
) -> Result<Value, CliError> {
    let pf = PI * rho;
    let holes: Vec<BranchSample> = lowest.iter().copied().filter(|s| s.p.abs() <= pf * (1.0 + 1e-9)).collect();
    let pts: Vec<f64> = ts.iter().copied().filter(|t| t.abs() >= 1.0 - 1e-9).collect();
    let mut particles = vec![];
    for (t, r) in pts.iter().zip(particle_branch(&g.state, &g.params, &pts, xopts)) {
        match r {
            Ok(s) => particles.push(s),
            Err(e) => log_failure(failures, format!("particle at {t}·πρ: {e}")),
        }
    }
    let curves = combine_topological(&holes, &particles, rho, 1e-6 * pf)?;
    let bethe = solve_ground(g.params.c, g.params.mu, &bethe_options(cfg))?;
    let cmp = compare_composites(&curves, &bethe, 0.1);
    let path = out.join(format!("composites_{}.csv", tag(cfg, d)));
    let mut w = csv_writer(&path)?;
    row(
        &mut w,
        &["curve", "p", "p_over_rho", "variational", "bethe", "rel_err"].map(String::from),
    )?;
    for r in &cmp.rows {
        row(&mut w, &[r.curve.into(), num(r.p), num(r.p / rho), num(r.variational), num(r.bethe), num(r.rel_err)])?;
    }
    csv_done(w)?;
    Ok(json!({
        "file": path.file_name().map(|n| n.to_string_lossy().to_string()),
        "bethe_rho": bethe.rho,
        "max_rel_type1": cmp.max_rel_type1,
        "max_rel_type2": cmp.max_rel_type2,
        "error_floor": cmp.floor,
    }))
}

pub fn delta_n(cfg: &RunConfig, out: &Path) -> Result<bool, CliError> {
    if cfg.model != Model::Ll {
        return Err(CliError::Config("delta-n scans the ll model".into()));
    }
    let c = cfg.c.unwrap_or(1.0);
    let xopts = excitation(cfg, 0.0);
    let oc = optimizer(cfg);
    let bo = bethe_options(cfg);
    let rows: Vec<Result<[f64; 5], String>> = cfg
        .gammas
        .par_iter()
        .map(|&gamma| {
            let mu = mu_for_gamma(c, gamma, &bo).map_err(|e| format!("γ = {gamma}: {e}"))?;
            let params = ModelParams::lieb_liniger(c, mu);
            let res = optimize(&params, cfg.d, &oc, None).map_err(|e| format!("γ = {gamma}: {e}"))?;
            let (e, dn) = hole_delta_n(&res.state, &params, &xopts).map_err(|e| format!("γ = {gamma}: {e}"))?;
            Ok([gamma, res.observables.gamma, mu, e, dn])
        })
        .collect();
    let path = out.join(format!("delta_n_{}.csv", tag(cfg, cfg.d)));
    let mut w = csv_writer(&path)?;
    row(&mut w, &["gamma_target", "gamma", "mu", "energy", "delta_n"].map(String::from))?;
    let mut failures = vec![];
    for (gamma, r) in cfg.gammas.iter().zip(&rows) {
        match r {
            Ok(v) => row(&mut w, &v.map(num))?,
            Err(m) => {
                log_failure(&mut failures, m.clone());
                row(&mut w, &[num(*gamma), String::new(), String::new(), String::new(), String::new()])?;
            }
        }
    }
    csv_done(w)?;
    sidecar(&path, "delta-n", cfg, &failures, json!({ "c": c, "D": cfg.d }))?;
    Ok(failures.is_empty())
}

pub fn bound_state(cfg: &RunConfig, out: &Path) -> Result<bool, CliError> {
    let tune_d = *cfg.d_list.iter().max().unwrap_or(&cfg.d);
    let (params, tuned) = resolve_params(cfg, tune_d)?;
    let xopts = excitation(cfg, 1e-10);
    let oc = OptimizerConfig {
        min_r_ratio: 0.0,
        ..optimizer(cfg)
    };
    let rows: Vec<Result<BoundStateRow, String>> = cfg
        .d_list
        .par_iter()
        .map(|&d| {
            let state = match &tuned {
                Some(r) if r.state.dim() == d => r.state.clone(),
                _ => optimize(&params, d, &oc, None).map_err(|e| format!("D={d}: {e}"))?.state,
            };
            bound_state_row(&state, &params, cfg.kink_points, &xopts).map_err(|e| format!("D={d}: {e}"))
        })
        .collect();
    let ok: Vec<&BoundStateRow> = rows.iter().filter_map(|r| r.as_ref().ok()).collect();
    let x: Vec<f64> = ok.iter().map(|r| r.inv_d).collect();
    let fit = |y: Vec<f64>| linear_fit(&x, &y).map(|f| f.0);
    let ex1 = fit(ok.iter().map(|r| r.e_trivial[0]).collect());
    let ex2 = fit(ok.iter().map(|r| r.e_trivial[1]).collect());
    let exk = fit(ok.iter().map(|r| r.two_kink).collect());

    let path = out.join(format!("bound_state_{}.csv", match cfg.model {
        Model::Ll => "ll",
        Model::Pairing => "pairing",
    }));
    let mut w = csv_writer(&path)?;
    let header = [
        "D", "inv_D", "E_trivial_1", "E_trivial_2", "two_kink_min", "kink_p", "binding",
        "E_trivial_1_extrap", "E_trivial_2_extrap", "two_kink_min_extrap",
    ];
    row(&mut w, &header.map(String::from))?;
    let mut failures = vec![];
    for (d, r) in cfg.d_list.iter().zip(&rows) {
        match r {
            Ok(r) => row(
                &mut w,
                &[
                    r.d.to_string(),
                    num(r.inv_d),
                    num(r.e_trivial[0]),
                    num(r.e_trivial[1]),
                    num(r.two_kink),
                    num(r.kink.p),
                    num(r.binding()),
                    opt(ex1),
                    opt(ex2),
                    opt(exk),
                ],
            )?,
            Err(m) => {
                log_failure(&mut failures, m.clone());
                let mut cells = vec![d.to_string(), num(1.0 / *d as f64)];
                cells.resize(header.len(), String::new());
                row(&mut w, &cells)?;
            }
        }
    }
    csv_done(w)?;
    let extra = json!({
        "params": params,
        "bound_below_threshold": ex1.zip(exk).map(|(a, b)| a < b),
        "extrapolated_binding": ex1.zip(exk).map(|(a, b)| b - a),
        "min_schmidt_ratio": xopts.min_schmidt_ratio,
    });
    sidecar(&path, "bound-state", cfg, &failures, extra)?;
    Ok(failures.is_empty())
}

pub fn bethe(cfg: &RunConfig, out: &Path) -> Result<bool, CliError> {
    if cfg.model != Model::Ll {
        return Err(CliError::Config("the Bethe solution exists for the ll model only".into()));
    }
    let c = cfg.c.unwrap_or(1.0);
    let bo = bethe_options(cfg);
    let mu = match (cfg.mu, cfg.gamma) {
        (Some(mu), _) => mu,
        (None, Some(g)) => mu_for_gamma(c, g, &bo)?,
        (None, None) => return Err(CliError::Config("bethe needs mu or gamma".into())),
    };
    let sol = solve_ground(c, mu, &bo)?;
    let pf = PI * sol.rho;
    let grid: Vec<f64> = cfg.grid.points().iter().map(|t| t * pf).collect();
    let table = oracle_table(c, mu, &grid, &bo)?;
    let path: PathBuf = out.join(format!("bethe_c{c}_mu{mu:.6}.csv"));
    let file = std::fs::File::create(&path).map_err(io_err(&path))?;
    table.write_csv(file)?;
    let extra = json!({
        "c": c, "mu": mu, "rho": sol.rho, "gamma": sol.gamma, "e": sol.e,
        "e_internal": sol.e_internal(), "k_fermi": sol.k_fermi, "sound_velocity": sol.sound_velocity(),
    });
    sidecar(&path, "bethe", cfg, &[], extra)?;
    println!("rho={:.12} gamma={:.8} e={:.12}", sol.rho, sol.gamma, sol.e);
    Ok(true)
}
