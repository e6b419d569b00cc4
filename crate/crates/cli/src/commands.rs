//! The six subcommands.

use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cycling_core::coefficients::{check_hypotheses, Check};
use cycling_core::density::Provenance;
use cycling_core::exec;
use cycling_core::montecarlo::{histogram_tau_plus, SimConfig, Simulator};
use cycling_core::profile::{profile_fourier, profile_sum, CyclingParams};
use cycling_core::scenario::Scenario;
use cycling_core::theory::{self, Theory};
use cycling_core::validation::{run_all, ValidationOptions};
use cycling_core::variances::{self as var, find_rate_minimum};
use cycling_core::volterra::{check_first_kind, fixed_point_prefactor, model_table, solve_table, FptProblem, ModelLeg};
use cycling_core::ModelSpec;

use crate::args::{AnalyzeArgs, ProfileArgs, Problem, Range, SimulateArgs, Skip, TheoryArgs, ValidateArgs, VolterraArgs};
use crate::output::{num, opt, quoted, Sink};
use crate::schema;

/// |log σ| values swept by `--fixed-t` alone.
const DEFAULT_SWEEP: Range = Range { start: 0.5, step: 0.05, stop: 5.0 };

fn spec_with_sigma(scenario: &Scenario, sigma: Option<f64>) -> Result<ModelSpec> {
    match sigma {
        Some(s) => Ok(scenario.spec.with_sigma(s)?),
        None => Ok(scenario.spec.clone()),
    }
}

fn check_entries(name: &str, c: &Check) -> Vec<(String, String)> {
    let mut out = vec![(format!("{name}_pass"), c.pass.to_string()), (format!("{name}_detail"), quoted(&c.detail))];
    if let Some(t) = c.witness_t {
        out.push((format!("{name}_witness_t"), num(t)));
    }
    out
}

pub fn analyze(scenario: &Scenario, a: &AnalyzeArgs, sink: &mut Sink) -> Result<ExitCode> {
    let spec = &scenario.spec;
    let hyp = check_hypotheses(spec);
    let rate = find_rate_minimum(spec);

    let period = spec.period();
    let model = vec![
        ("period".to_string(), num(period)),
        ("lambda".to_string(), num(spec.lambda())),
        ("lambda_t".to_string(), num(spec.lambda_t())),
        ("delta1".to_string(), num(spec.delta1)),
        ("delta2".to_string(), num(spec.delta2)),
        ("sigma".to_string(), num(spec.sigma)),
    ];
    let mut hyps = Vec::new();
    for (name, c) in [("h1", &hyp.h1), ("h2", &hyp.h2), ("h3", &hyp.h3), ("h4", &hyp.h4), ("h5", &hyp.h5), ("h5_weak", &hyp.h5_weak)] {
        hyps.extend(check_entries(name, c));
    }
    hyps.extend([
        ("delta".to_string(), num(hyp.delta)),
        ("delta0".to_string(), num(hyp.delta0)),
        ("vbar".to_string(), num(hyp.vbar)),
        ("vunder".to_string(), num(hyp.vunder)),
        ("all_pass".to_string(), hyp.all_pass().to_string()),
    ]);
    let rate_entries = match &rate {
        Ok(r) => {
            let mut e = vec![
                ("s_star".to_string(), num(r.s_star)),
                ("R".to_string(), num(r.r)),
                ("rho_dd".to_string(), num(r.rho_dd)),
                ("C0".to_string(), num(r.c0)),
                ("C".to_string(), num(r.c)),
                ("gamma0".to_string(), num(r.gamma0)),
                ("theta0".to_string(), num(r.theta0)),
                ("v_minus_s_star".to_string(), num(r.v_minus_s_star)),
                ("v_hat_s_star".to_string(), num(r.v_hat_s_star)),
            ];
            if let Some(t) = r.tied_minimum {
                e.push(("tied_minimum".to_string(), num(t)));
            }
            e
        }
        Err(e) => vec![("error".to_string(), quoted(&e.to_string()))],
    };
    let warnings: Vec<(String, String)> =
        scenario.sim.warnings(spec).iter().enumerate().map(|(i, w)| (format!("w{}", i + 1), quoted(w))).collect();
    let mut sections = vec![("model", model), ("hypotheses", hyps), ("rate", rate_entries)];
    if !warnings.is_empty() {
        sections.push(("warnings", warnings));
    }
    sink.report("analyze_report.txt", &sections)?;

    let n = a.periods * a.points_per_period;
    let rows = (0..=n).map(|i| {
        let t = period * i as f64 / a.points_per_period as f64;
        let theta = rate.as_ref().map_or(f64::NAN, |r| var::theta(spec, r, t));
        vec![
            num(t),
            num(spec.v_star(t)),
            num(var::v_per_minus(spec, t)),
            num(var::v_hat_per_plus(spec, t)),
            num(var::rho_per_sq(spec, t)),
            num(theta),
            num(var::theta_prime(spec, t)),
        ]
    });
    sink.csv("analyze_curves.csv", schema::ANALYZE.columns, rows)?;

    println!("hypotheses: {}", if hyp.all_pass() { "all pass" } else { "some fail" });
    for (name, c) in [("H1", &hyp.h1), ("H2", &hyp.h2), ("H3", &hyp.h3), ("H4", &hyp.h4), ("H5", &hyp.h5)] {
        println!("  {name} [{}] {}", if c.pass { "PASS" } else { "FAIL" }, c.detail);
    }
    match &rate {
        Ok(r) => println!("rate: s* = {:.6}, R = {:.6}, C0 = {:.6}, lambda*T = {:.6}", r.s_star, r.r, r.c0, r.lambda_t()),
        Err(e) => println!("rate: {e}"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn profile(scenario: &Scenario, a: &ProfileArgs, sink: &mut Sink) -> Result<ExitCode> {
    let lambda_t = a.lambda_t.unwrap_or_else(|| scenario.spec.lambda_t());
    if !(lambda_t > 0.0 && lambda_t.is_finite()) {
        bail!("lambda*T must be positive, got {lambda_t}");
    }
    let p = CyclingParams::new(lambda_t);
    let n = 3 * a.points;
    let rows = (0..n).map(|i| {
        let x = i as f64 / a.points as f64;
        vec![num(x), num(profile_sum(p, x)), num(profile_fourier(p, x))]
    });
    sink.csv("profile.csv", schema::PROFILE.columns, rows)?;
    Ok(ExitCode::SUCCESS)
}

fn curve_rows(th: &Theory, times: &[f64]) -> Vec<Vec<String>> {
    theory::theory_curve(th, times, exec::Mode::Parallel)
        .into_iter()
        .map(|p| {
            vec![
                num(p.t),
                p.regime.name().to_string(),
                num(p.metastable),
                opt(p.laplace),
                num(p.transient_bound),
                num(p.theta),
                num(p.profile_argument),
            ]
        })
        .collect()
}

fn cycling_rows(th: &Theory, sweep: &[f64], fixed: &[f64]) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(sweep.len() * fixed.len());
    for &x in sweep {
        let ts = th.at_sigma((-x).exp());
        let k = theory::transient_constant(&ts);
        for &t in fixed {
            rows.push(vec![
                num(x),
                num(ts.spec.sigma),
                num(t),
                theory::classify_regime(&ts, t).regime.name().to_string(),
                num(theory::metastable_leading_term(&ts, t)),
                opt(theory::laplace_prefactor(&ts, t).ok()),
                num(theory::transient_prefactor_bound(&ts, k, t)),
            ]);
        }
    }
    rows
}

pub fn theory(scenario: &Scenario, a: &TheoryArgs, sink: &mut Sink) -> Result<ExitCode> {
    let spec = spec_with_sigma(scenario, a.sigma)?;
    let opts = scenario.theory;
    let th = Theory::new(spec)?.with_beta(a.beta.unwrap_or(opts.beta));
    let periods = a.periods.unwrap_or(opts.periods);
    let ppp = a.points_per_period.unwrap_or(opts.points_per_period);
    if periods == 0 || ppp == 0 {
        bail!("periods and points per period must be positive");
    }
    let period = th.spec.period();
    let times: Vec<f64> = (0..=periods * ppp).map(|i| period * i as f64 / ppp as f64).collect();
    // Fixed times default to nT at a third, two thirds and the end of the curve.
    let fixed = a.fixed_t.clone().unwrap_or_else(|| {
        let mut n: Vec<usize> = vec![(periods / 3).max(1), (2 * periods / 3).max(1), periods];
        n.dedup();
        n.into_iter().map(|k| k as f64 * period).collect()
    });

    match (a.sigma_sweep, &a.fixed_t) {
        (Some(range), _) => {
            let sweep = range.values();
            for (i, &x) in sweep.iter().enumerate() {
                let ts = th.at_sigma((-x).exp());
                sink.csv(&format!("theory_sigma_{i:03}.csv"), schema::THEORY.columns, curve_rows(&ts, &times))?;
            }
            sink.csv("theory_cycling.csv", schema::CYCLING.columns, cycling_rows(&th, &sweep, &fixed))?;
        }
        (None, Some(_)) => {
            let sweep = DEFAULT_SWEEP.values();
            sink.csv("theory_cycling.csv", schema::CYCLING.columns, cycling_rows(&th, &sweep, &fixed))?;
        }
        (None, None) => {
            sink.csv("theory.csv", schema::THEORY.columns, curve_rows(&th, &times))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn volterra(scenario: &Scenario, a: &VolterraArgs, sink: &mut Sink) -> Result<ExitCode> {
    let opts = &scenario.volterra;
    let spec = spec_with_sigma(scenario, a.sigma)?;
    let steps = a.steps.unwrap_or(opts.steps);
    let t_max = a.t_max.unwrap_or(opts.t_max);
    let start = a.start.unwrap_or(opts.start);
    if !(t_max > 0.0) || steps < 2 {
        bail!("need t_max > 0 and at least 2 steps");
    }
    let problem = a.problem.unwrap_or(match opts.leg {
        ModelLeg::Minus => Problem::ModelPsiMinus,
        ModelLeg::Up => Problem::ModelPsiUp,
        ModelLeg::Down => Problem::ModelPsiDown,
    });
    let h = t_max / steps as f64;
    let table = match problem {
        Problem::ModelPsiMinus => model_table(&spec, ModelLeg::Minus, start, h, steps),
        Problem::ModelPsiUp => model_table(&spec, ModelLeg::Up, start, h, steps),
        Problem::ModelPsiDown => model_table(&spec, ModelLeg::Down, start, h, steps),
        Problem::ConstantBoundary => {
            FptProblem::constant_boundary(a.level.unwrap_or(opts.level), spec.sigma).tabulate(t_max, steps)
        }
        Problem::Custom => {
            if opts.custom_v.is_empty() || opts.custom_d.is_empty() {
                bail!("the custom problem needs volterra.custom_v and volterra.custom_d in the scenario");
            }
            FptProblem::polynomial(opts.custom_v.clone(), opts.custom_d.clone(), spec.sigma).tabulate(t_max, steps)
        }
    };
    let sol = solve_table(&table)?;
    let fp = fixed_point_prefactor(&table, None, a.picard_iters)?;
    if !fp.converged {
        eprintln!("warning: Picard iteration did not converge in {} iterations", fp.iterations);
    }
    let residual = check_first_kind(&table, &sol, table.time(0) + 0.1 * t_max);
    let rows = (0..sol.times.len()).map(|i| {
        vec![
            num(sol.times[i]),
            num(sol.psi[i]),
            num(sol.c[i]),
            num(sol.c0[i]),
            num(fp.bracket_lo[i]),
            num(fp.bracket_hi[i]),
            num(residual.relative[i]),
        ]
    });
    sink.csv("volterra.csv", schema::VOLTERRA.columns, rows)?;
    println!("mass {:.6e}, sup first-kind residual {:.3e}", sol.mass(), residual.sup_relative);
    Ok(ExitCode::SUCCESS)
}

pub fn simulate(scenario: &Scenario, a: &SimulateArgs, sink: &mut Sink) -> Result<ExitCode> {
    let spec = spec_with_sigma(scenario, a.sigma)?;
    let mut cfg: SimConfig = scenario.sim.clone();
    cfg.n_paths = a.paths.unwrap_or(cfg.n_paths);
    cfg.t_max_periods = a.periods.unwrap_or(cfg.t_max_periods);
    cfg.substeps_per_period = a.substeps.unwrap_or(cfg.substeps_per_period);
    if a.no_bridge {
        cfg.bridge_correction = false;
    }
    if cfg.n_paths == 0 || cfg.t_max_periods == 0 || cfg.substeps_per_period == 0 || a.bins_per_period == 0 {
        bail!("paths, periods, substeps and bins per period must be positive");
    }
    for w in cfg.warnings(&spec) {
        eprintln!("warning: {w}");
    }
    let sim = Simulator::new(&spec, &cfg);
    let n = cfg.n_paths;
    let chunk = (n / 20).max(1000);
    let mut outcomes = Vec::with_capacity(n);
    while outcomes.len() < n {
        let from = outcomes.len();
        let len = chunk.min(n - from);
        outcomes.extend(exec::map_indices(cfg.mode, len, |i| sim.simulate_path((from + i) as u64)));
        eprintln!("simulate: {}/{} paths", outcomes.len(), n);
    }
    let width = spec.period() / a.bins_per_period as f64;
    let hist = histogram_tau_plus(&outcomes, width, cfg.t_max(&spec));
    let dens = hist.density(Provenance::McHistogram);
    let censored = hist.censored.to_string();
    let rows = hist.counts.iter().enumerate().map(|(k, &c)| {
        let (d, lo, hi) = if dens.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            let band = |b: &Option<Vec<f64>>| b.as_ref().map_or(f64::NAN, |v| v[k]);
            (dens.values[k], band(&dens.lower), band(&dens.upper))
        };
        let lo_edge = hist.edges[k];
        vec![num(lo_edge), num(lo_edge + width), c.to_string(), num(d), num(lo), num(hi), censored.clone()]
    });
    sink.csv("simulate.csv", schema::SIMULATE.columns, rows)?;
    eprintln!("simulate: {} of {} paths censored at t = {}", hist.censored, n, cfg.t_max(&spec));
    Ok(ExitCode::SUCCESS)
}

pub fn validate(scenario: &Scenario, a: &ValidateArgs, sink: &mut Sink) -> Result<ExitCode> {
    let mut opts = ValidationOptions { seed: scenario.sim.seed, ..ValidationOptions::default() };
    opts.skip_mc = a.skip == Some(Skip::Mc);
    opts.mc_paths = a.mc_paths.unwrap_or(opts.mc_paths);
    opts.ks_paths = a.ks_paths.unwrap_or(opts.ks_paths);
    opts.tolerances.extend(a.tolerance.iter().copied());
    let results = run_all(scenario, &opts);
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.pass).count();
    println!("{passed}/{} criteria pass", results.len());
    let rows = results.iter().map(|r| {
        vec![r.id.to_string(), r.name.to_string(), r.pass.to_string(), num(r.measured), num(r.tolerance), r.detail.clone()]
    });
    sink.csv("validate.csv", schema::VALIDATE.columns, rows).context("writing the summary")?;
    Ok(if passed == results.len() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
