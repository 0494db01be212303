//! One function per subcommand. Each writes its tables into `out` and returns a summary.

use std::path::{Path, PathBuf};

use bosecycles::cluster::{kp_condition, kp_integral_check, ratio_bound, truncated_log_z};
use bosecycles::ideal_canonical::build_table;
use bosecycles::ideal_grand::{critical_density, density, free_energy, grand_cycle_density, pressure, solve_mu};
use bosecycles::pimc::{Checkpoint, OpenSectorConfig, PimcConfig, PimcRunner, PimcWarning};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{num, opt, Table};
use crate::CliError;

/// What a command produced; violations are reported after the outputs are written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub summary: Value,
    /// A numeric contract failed (exit code 3).
    pub violation: Option<String>,
    /// The sampler flagged non-ergodic permutation moves (exit code 4 under `--strict`).
    pub non_ergodic: bool,
}

impl Outcome {
    fn violate(&mut self, msg: String) {
        log::error!("{msg}");
        if self.violation.is_none() {
            self.violation = Some(msg);
        }
    }
}

const SUM_RULE_TOL: f64 = 1e-10;

pub fn ideal_cycles(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    let mut cycles = Table::new("ideal_cycles", &["side", "n", "density"]);
    let mut summary = Table::new(
        "ideal_summary",
        &["side", "n_particles", "rho", "rho_inf_estimate", "cutoff", "cutoff_clamped", "sum_rule_residual"],
    );
    let mut rows = Vec::new();
    for side in config.side_list()? {
        let (bx, n) = config.canonical_system(side)?;
        let table = build_table(bx, config.beta, n)?;
        let spectrum = table.cycle_spectrum(config.cutoff)?;
        for (i, d) in spectrum.densities.iter().enumerate() {
            cycles.push(vec![num(side), (i + 1).to_string(), num(*d)]);
        }
        let residual = spectrum.densities.iter().sum::<f64>() - spectrum.rho;
        if residual.abs() > SUM_RULE_TOL * spectrum.rho {
            outcome.violate(format!("sum rule broken at side {side}: residual {residual:e}"));
        }
        summary.push(vec![
            num(side),
            n.to_string(),
            num(spectrum.rho),
            num(spectrum.rho_inf_estimate),
            spectrum.cutoff.to_string(),
            spectrum.cutoff_clamped.to_string(),
            num(residual),
        ]);
        if spectrum.cutoff_clamped {
            outcome.warnings.push(format!("cycle cutoff clamped to N = {n} at side {side}"));
        }
        rows.push(json!({"side": side, "n_particles": n, "rho": spectrum.rho, "rho_inf_estimate": spectrum.rho_inf_estimate, "cutoff": spectrum.cutoff}));
    }
    outcome.outputs.push(cycles.write(out)?);
    outcome.outputs.push(summary.write(out)?);
    outcome.summary = json!({ "volumes": rows });
    Ok(outcome)
}

pub fn odlro(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    let mut t = Table::new(
        "odlro",
        &["side", "distance", "sigma", "short_cycles", "rho_inf_estimate", "residual", "cutoff", "cutoff_clamped"],
    );
    for side in config.side_list()? {
        let (bx, n) = config.canonical_system(side)?;
        let table = build_table(bx, config.beta, n)?;
        for &r in &config.odlro.distances {
            let mut x = vec![0.0; config.dim];
            x[0] = r;
            let d = table.verify_decomposition(&x, config.cutoff)?;
            if r == 0.0 && (d.sigma - table.density()).abs() > SUM_RULE_TOL * table.density() {
                outcome.violate(format!("sigma(0) = {} differs from rho = {} at side {side}", d.sigma, table.density()));
            }
            t.push(vec![
                num(side),
                num(r),
                num(d.sigma),
                num(d.short_cycles),
                num(d.rho_inf_estimate),
                num(d.residual),
                d.cutoff.to_string(),
                d.cutoff_clamped.to_string(),
            ]);
        }
    }
    outcome.outputs.push(t.write(out)?);
    outcome.summary = json!({ "rows": config.side_list()?.len() * config.odlro.distances.len() });
    Ok(outcome)
}

pub fn condensate(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    let rho_c = critical_density(config.beta, config.dim)?;
    let mut t = Table::new("condensate", &["side", "n_particles", "rho", "condensate_density", "reference"]);
    let mut values = Vec::new();
    for side in config.side_list()? {
        let (bx, n) = config.canonical_system(side)?;
        let table = build_table(bx, config.beta, n)?;
        let rho = table.density();
        let n0 = table.condensate_density();
        if !(0.0..=rho * (1.0 + 1e-12)).contains(&n0) {
            outcome.violate(format!("condensate density {n0} outside [0, {rho}] at side {side}"));
        }
        let reference = (rho - rho_c).max(0.0);
        t.push(vec![num(side), n.to_string(), num(rho), num(n0), num(reference)]);
        values.push(json!({"side": side, "condensate_density": n0, "reference": reference}));
    }
    outcome.outputs.push(t.write(out)?);
    outcome.summary = json!({ "critical_density": rho_c, "volumes": values });
    Ok(outcome)
}

/// `sum_n rho_mu(n)` and `sum_n n rho_mu(n)` until the terms stop mattering.
fn cycle_sums(beta: f64, mu: f64, dim: usize) -> Result<(f64, f64), CliError> {
    let mut sum = 0.0;
    let mut first = 0.0;
    let ratio = (beta * mu).exp();
    for n in 1usize.. {
        let r = grand_cycle_density(n, beta, mu, dim)?;
        sum += r;
        first += n as f64 * r;
        // Terms shrink at least geometrically with ratio e^(beta mu).
        if r * ratio / (1.0 - ratio) < 1e-17 * sum {
            break;
        }
    }
    Ok((sum, first))
}

pub fn grand(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    let g = &config.grand;
    let (beta, dim) = (config.beta, config.dim);
    if config.ensemble == Some(crate::config::Ensemble::Canonical) {
        return Err(CliError::Config("this command needs the grand ensemble".into()));
    }
    if g.points == 0 || g.mu_min > g.mu_max || g.mu_min.is_nan() || g.mu_max >= 0.0 {
        return Err(CliError::Config("grand grid needs mu_min <= mu_max < 0 and at least one point".into()));
    }
    let mut thermo = Table::new(
        "grand",
        &["mu", "pressure", "density", "free_energy", "cycle_sum", "mean_cycle_length"],
    );
    let mut cycles = Table::new("grand_cycles", &["mu", "n", "density"]);
    let mut worst: f64 = 0.0;
    for k in 0..g.points {
        let mu = if g.points == 1 {
            g.mu_min
        } else {
            g.mu_min + (g.mu_max - g.mu_min) * k as f64 / (g.points - 1) as f64
        };
        let p = pressure(beta, mu, dim)?;
        let rho = density(beta, mu, dim)?;
        let f = free_energy(beta, rho, dim)?;
        let (sum, first) = cycle_sums(beta, mu, dim)?;
        let rel = (sum - rho).abs() / rho;
        worst = worst.max(rel);
        if rel > SUM_RULE_TOL {
            outcome.violate(format!("cycle densities sum to {sum}, density is {rho} at mu = {mu}"));
        }
        thermo.push(vec![num(mu), num(p), num(rho), num(f), num(sum), num(first / rho)]);
        for n in 1..=g.max_cycle {
            cycles.push(vec![num(mu), n.to_string(), num(grand_cycle_density(n, beta, mu, dim)?)]);
        }
    }
    outcome.outputs.push(thermo.write(out)?);
    outcome.outputs.push(cycles.write(out)?);
    if !g.densities.is_empty() {
        let scale = if g.relative { critical_density(beta, dim)? } else { 1.0 };
        let mut fe = Table::new("free_energy", &["rho", "mu_star", "free_energy"]);
        for &r in &g.densities {
            let rho = r * scale;
            fe.push(vec![num(rho), num(solve_mu(beta, rho, dim)?), num(free_energy(beta, rho, dim)?)]);
        }
        outcome.outputs.push(fe.write(out)?);
    }
    outcome.summary = json!({ "max_sum_rule_deviation": worst });
    Ok(outcome)
}

fn pimc_config(config: &RunConfig) -> Result<PimcConfig, CliError> {
    let section = config
        .pimc
        .clone()
        .ok_or_else(|| CliError::Config("the pimc command needs a [pimc] section".into()))?;
    let side = match (config.side, config.n_particles) {
        (Some(s), _) => s,
        (None, Some(n)) => (n as f64 / config.density()?).powf(1.0 / config.dim as f64),
        (None, None) => return Err(CliError::Config("pimc needs side or n_particles".into())),
    };
    let (_, n) = config.canonical_system(side)?;
    let mut moves = section.moves.clone();
    let open = section.open_shift.as_ref().map(|shift| OpenSectorConfig {
        shift: shift.clone(),
        initial_weight: None,
        tune: true,
    });
    if open.is_some() && moves.open <= 0.0 {
        moves.open = 0.2;
    }
    let pimc = PimcConfig {
        dim: config.dim,
        n_particles: n,
        side,
        beta: config.beta,
        beads: section.beads,
        potential: config.potential.clone(),
        schedule: section.schedule.clone(),
        moves,
        seed: config.seed,
        open,
    };
    pimc.validate()?;
    Ok(pimc)
}

pub fn pimc(config: &RunConfig, out: &Path, resume: Option<&Path>, stop_after: Option<u64>) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    let pc = pimc_config(config)?;
    let every = config.pimc.as_ref().map_or(0, |p| p.checkpoint_every);
    let checkpoint_path = out.join("checkpoint.json");
    let mut runner = match resume {
        Some(path) => PimcRunner::resume(pc.clone(), Checkpoint::load(path)?)?,
        None => PimcRunner::new(pc.clone())?,
    };
    let stop = stop_after.unwrap_or(u64::MAX).min(runner.total_sweeps());
    while runner.sweeps_done() < stop {
        let step = if every > 0 { every } else { u64::MAX };
        runner.advance(step.min(stop - runner.sweeps_done()))?;
        if every > 0 {
            runner.checkpoint().save(&checkpoint_path)?;
        }
    }
    runner.checkpoint().save(&checkpoint_path)?;
    outcome.outputs.push(checkpoint_path);

    let result = runner.result()?;
    let bx = pc.simulation_box()?;
    let exact_table = if pc.potential.is_zero() { Some(build_table(bx, pc.beta, pc.n_particles)?) } else { None };
    let exact = exact_table.as_ref().map(|t| t.cycle_densities());

    let mut summary = json!({
        "n_particles": pc.n_particles,
        "side": pc.side,
        "rho": pc.n_particles as f64 / bx.volume(),
        "sweeps_done": runner.sweeps_done(),
        "finished": runner.is_finished(),
        "config_hash": pc.hash(),
    });
    if result.histogram.closed_samples() > 0 {
        let densities = result.histogram.densities();
        let errors = result.histogram.density_errors();
        let rho = pc.n_particles as f64 / bx.volume();
        let total: f64 = densities.iter().sum();
        if (total - rho).abs() > SUM_RULE_TOL * rho {
            outcome.violate(format!("sampled densities sum to {total}, density is {rho}"));
        }
        let mut t = Table::new("pimc_cycles", &["n", "density", "error", "exact", "z"]);
        for n in 0..pc.n_particles {
            let e = exact.as_ref().map(|x| x[n]);
            let z = e.map(|e| (densities[n] - e) / errors[n]).filter(|z| z.is_finite());
            t.push(vec![(n + 1).to_string(), num(densities[n]), num(errors[n]), opt(e), opt(z)]);
        }
        outcome.outputs.push(t.write(out)?);
        let (mean, mean_err) = result.histogram.mean_cycle_length();
        summary["mean_cycle_length"] = json!([mean, mean_err]);
        if let Some(e) = &exact {
            match result.histogram.compare_with(e) {
                Ok(report) => summary["chi_square"] = serde_json::to_value(&report).unwrap_or(Value::Null),
                Err(err) => outcome.warnings.push(format!("no chi-square comparison: {err}")),
            }
        }
    }

    let mut acc = Table::new("pimc_acceptance", &["phase", "move", "attempted", "accepted", "rate"]);
    for (phase, stats) in [("equilibration", &result.equilibration_acceptance), ("measurement", &result.acceptance)] {
        for (name, c) in [
            ("block", &stats.block),
            ("swap", &stats.swap),
            ("regrow", &stats.regrow),
            ("translate", &stats.translate),
            ("insert", &stats.insert),
            ("remove", &stats.remove),
        ] {
            acc.push(vec![
                phase.into(),
                name.into(),
                c.attempted.to_string(),
                c.accepted.to_string(),
                if c.attempted == 0 { String::new() } else { num(c.rate()) },
            ]);
        }
    }
    outcome.outputs.push(acc.write(out)?);

    if let (Some(open), Some(shift)) = (&result.open, &pc.open) {
        let reference = exact_table.as_ref().map(|t| t.odlro_correlation(&shift.shift)).transpose()?;
        let mut t = Table::new("pimc_open", &["sigma", "error", "open_fraction", "exact"]);
        t.push(vec![num(open.sigma), num(open.error), num(open.open_fraction), opt(reference)]);
        outcome.outputs.push(t.write(out)?);
        summary["open"] = json!({"sigma": open.sigma, "error": open.error, "exact": reference});
    }
    for w in &result.warnings {
        match w {
            PimcWarning::NonErgodic { swap_rate } => {
                outcome.non_ergodic = true;
                outcome.warnings.push(format!("non-ergodic: swap acceptance {swap_rate:e} during equilibration"));
            }
            PimcWarning::PoorOverlap { open_fraction } => {
                outcome.warnings.push(format!("poor overlap: open sector fraction {open_fraction:e}"));
            }
        }
    }
    outcome.summary = summary;
    Ok(outcome)
}

pub fn cluster_check(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    let mu = config.chemical_potential()?;
    let (beta, dim, pot) = (config.beta, config.dim, &config.potential);
    let section = &config.cluster;
    let kp = kp_condition(beta, mu, pot, dim)?;
    let (verdict, reason) = if !kp.integrable {
        ("inapplicable", "potential is not integrable")
    } else if kp.divergent {
        ("inapplicable", "winding series diverges for d <= 2")
    } else if kp.holds {
        ("holds", "")
    } else {
        ("fails", "lhs exceeds -mu")
    };
    let bracket = ratio_bound(beta, mu, pot, dim, section.winding)?;
    let log_z = truncated_log_z(beta, mu, pot, dim, section.k_max, section.sampling(config.seed))?;
    let integral = if kp.integrable && !(kp.divergent && !pot.is_zero()) {
        Some(kp_integral_check(beta, mu, pot, dim, section.winding, section.sampling(config.seed))?)
    } else {
        None
    };
    if let Some(i) = &integral {
        if i.high_variance {
            outcome.warnings.push("Kotecky-Preiss integral estimate has relative error above 10%".into());
        }
    }
    let mut t = Table::new(
        "cluster",
        &[
            "mu",
            "minus_mu",
            "lhs",
            "threshold_mu",
            "holds",
            "verdict",
            "reason",
            "ratio_lower",
            "ratio_upper",
            "log_z_first",
            "log_z_second",
            "log_z_second_error",
            "log_z_total",
            "kp_winding",
            "kp_limit",
            "kp_certified_bound",
            "kp_sharp",
            "kp_sharp_error",
        ],
    );
    t.push(vec![
        num(mu),
        num(kp.minus_mu),
        num(kp.lhs),
        opt(kp.threshold_mu),
        kp.holds.to_string(),
        verdict.into(),
        reason.into(),
        opt(bracket.map(|b| b.lower)),
        opt(bracket.map(|b| b.upper)),
        num(log_z.first_order),
        num(log_z.second_order),
        num(log_z.second_order_error),
        num(log_z.total),
        section.winding.to_string(),
        opt(integral.map(|i| i.limit)),
        opt(integral.map(|i| i.certified_bound)),
        opt(integral.map(|i| i.sharp_estimate)),
        opt(integral.map(|i| i.sharp_error)),
    ]);
    outcome.outputs.push(t.write(out)?);
    outcome.summary = json!({
        "verdict": verdict,
        "reason": reason,
        "condition": kp,
        "ratio_bracket": bracket,
        "truncated_log_z": log_z,
        "kp_integral": integral,
    });
    Ok(outcome)
}
