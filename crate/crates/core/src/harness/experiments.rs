use std::time::Instant;

use super::report::{Check, ExperimentReport, ReportRow};
use super::spec::ExperimentSpec;
use super::Runner;
use crate::error::{Error, Result};
use crate::fluctuation::{joint_sup_inf_cdf, max_loss_post_sup_cdf, post_inf_sup_cdf, Window};
use crate::levy_model::KillingRate;
use crate::scale::{ScaleEvaluator, ScaleMethod};
use crate::simulator::{
    empirical_cdf, extremes_of, first_passage_reference, ks_statistic, ks_two_sample, par_map,
    post_rho_segment, post_rho_stopped_value, simulate_path, simulate_path_until, try_par_map,
    PathExtremes, SimConfig,
};

const QUARTILES: [f64; 3] = [0.25, 0.5, 0.75];

fn evaluator(spec: &ExperimentSpec) -> Result<ScaleEvaluator> {
    ScaleEvaluator::build(&spec.model, spec.killing_rate()?, spec.x_max, spec.h_grid)
}

/// Untruncated paths of a batch, with the truncation count.
fn usable(batch: &[Vec<PathExtremes>]) -> (Vec<&[PathExtremes]>, u64) {
    let kept: Vec<&[PathExtremes]> = batch
        .iter()
        .filter(|p| !p[0].truncated)
        .map(|p| p.as_slice())
        .collect();
    let dropped = (batch.len() - kept.len()) as u64;
    (kept, dropped)
}

fn fraction<T>(items: &[T], pred: impl Fn(&T) -> bool) -> f64 {
    items.iter().filter(|x| pred(x)).count() as f64 / items.len() as f64
}

fn require_bin(bin: String, count: usize, required: usize) -> Result<()> {
    if count < required {
        Err(Error::InsufficientSample {
            bin,
            count,
            required,
        })
    } else {
        Ok(())
    }
}

fn simulated(
    runner: &mut Runner,
    spec: &ExperimentSpec,
    level: Option<f64>,
    report: &mut ExperimentReport,
) -> Result<(SimConfig, super::Batch)> {
    let cfg = spec.sim_config()?;
    let batch = runner.batch(&cfg, level, &spec.dt_strides)?;
    report.paths_simulated = cfg.n_paths();
    Ok((cfg, batch))
}

/// Composite Simpson rule with at most `h` between nodes.
fn simpson(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, h: f64) -> Result<f64> {
    let mut n = ((hi - lo) / h).ceil().max(2.0) as usize;
    n += n % 2;
    let step = (hi - lo) / n as f64;
    let mut sum = f(lo)? + f(hi)?;
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(lo + i as f64 * step)?;
    }
    Ok(sum * step / 3.0)
}

pub(super) fn scale_selftest(
    spec: &ExperimentSpec,
    report: &mut ExperimentReport,
    start: Instant,
) -> Result<()> {
    let laplace_rel = spec.tolerance("laplace_rel")?;
    let z_rel = spec.tolerance("z_identity_rel")?;
    let inv_rel = spec.tolerance("closed_vs_inversion_rel")?;
    let gammas = if spec.grid.gamma.is_empty() {
        vec![spec.gamma]
    } else {
        spec.grid.gamma.clone()
    };
    let x_max = spec.x_max;
    for gamma in gammas {
        let rate = KillingRate::new(gamma)?;
        let ev = ScaleEvaluator::build(&spec.model, rate, x_max, spec.h_grid)?;
        let phi = ev.phi();
        // ∫ e^{−λx} W = ∫ e^{−(λ−Φ)x} e^{−Φx} W; the damped form never overflows
        for offset in [0.5, 1.0, 2.0] {
            let lambda = phi + offset;
            let analytic = 1.0 / (spec.model.psi(lambda) - gamma);
            let empirical = simpson(
                |x| Ok((-offset * x).exp() * ev.damped_w(x)?),
                0.0,
                x_max,
                spec.h_grid,
            )?;
            report.rows.push(ReportRow::new(
                format!("gamma={gamma} laplace lambda=phi+{offset}"),
                analytic,
                empirical,
                0,
                laplace_rel * analytic.abs(),
            ));
        }
        for x in [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, x_max] {
            if x > x_max {
                continue;
            }
            let z = ev.z(x)?;
            let empirical = 1.0 + gamma * simpson(|y| ev.w(y), 0.0, x, spec.h_grid)?;
            report.rows.push(ReportRow::new(
                format!("gamma={gamma} z_identity x={x}"),
                z,
                empirical,
                0,
                z_rel * z.max(1.0),
            ));
        }
        if spec.model.is_brownian() {
            let inv = ScaleEvaluator::build_with_method(
                &spec.model,
                rate,
                x_max.min(5.0),
                spec.h_grid,
                ScaleMethod::Inversion,
            )?;
            let xs = std::iter::once(0.01).chain((1..=25).map(|i| i as f64 * 0.2));
            for x in xs {
                let (w, wi) = (ev.w(x)?, inv.w(x)?);
                report.rows.push(ReportRow::new(
                    format!("gamma={gamma} inversion W x={x}"),
                    w,
                    wi,
                    0,
                    inv_rel * w.abs(),
                ));
                let (d, di) = (ev.w_prime(x)?, inv.w_prime(x)?);
                report.rows.push(ReportRow::new(
                    format!("gamma={gamma} inversion W' x={x}"),
                    d,
                    di,
                    0,
                    inv_rel * d.abs(),
                ));
            }
        }
    }
    report.checks.push(Check::at_most(
        "runtime_s",
        start.elapsed().as_secs_f64(),
        spec.tolerance("runtime_s")?,
    ));
    Ok(())
}

pub(super) fn joint_law(
    runner: &mut Runner,
    spec: &ExperimentSpec,
    report: &mut ExperimentReport,
) -> Result<()> {
    let (_, batch) = simulated(runner, spec, None, report)?;
    let (paths, dropped) = usable(&batch[..report.paths_simulated as usize]);
    report.truncated = dropped;
    let ev = evaluator(spec)?;
    let tol = spec.tolerance("gap")?;
    let strides = &spec.dt_strides;
    let mut non_monotone = 0u32;
    for &a in &spec.grid.a {
        for &b in &spec.grid.b {
            let analytic = joint_sup_inf_cdf(&ev, Window::new(a, b)?)?;
            let emp: Vec<f64> = (0..strides.len())
                .map(|s| fraction(&paths, |p| a < p[s].inf && p[s].sup < b))
                .collect();
            report.rows.push(ReportRow::new(
                format!("a={a} b={b}"),
                analytic,
                emp[0],
                paths.len() as u64,
                tol,
            ));
            if strides.len() > 1 {
                let gaps: Vec<f64> = emp.iter().map(|e| (e - analytic).abs()).collect();
                if gaps.windows(2).any(|w| w[0] > w[1]) {
                    non_monotone += 1;
                }
                report.notes.push(format!(
                    "a={a} b={b}: gap by dt stride {strides:?} = {gaps:?}"
                ));
            }
        }
    }
    if strides.len() > 1 {
        report.checks.push(Check::at_most(
            "dt_convergence_non_monotone_points",
            non_monotone as f64,
            0.0,
        ));
    }
    Ok(())
}

pub(super) fn sup_marginal(
    runner: &mut Runner,
    spec: &ExperimentSpec,
    report: &mut ExperimentReport,
) -> Result<()> {
    let (_, batch) = simulated(runner, spec, None, report)?;
    let (paths, dropped) = usable(&batch[..report.paths_simulated as usize]);
    report.truncated = dropped;
    let phi = spec.model.phi(spec.gamma)?;
    let exp_cdf = |x: f64| if x <= 0.0 { 0.0 } else { -(-phi * x).exp_m1() };
    let ks_tol = spec.tolerance("ks")?;
    let mut ks = Vec::new();
    for s in 0..spec.dt_strides.len() {
        let sups: Vec<f64> = paths.iter().map(|p| p[s].sup).collect();
        ks.push(ks_statistic(exp_cdf, &sups)?);
    }
    let sups = empirical_cdf(&paths.iter().map(|p| p[0].sup).collect::<Vec<_>>())?;
    report.checks.push(Check::at_most("ks", ks[0], ks_tol));
    if ks.len() > 1 {
        report
            .checks
            .push(Check::below("ks_finest_minus_next", ks[0] - ks[1], 0.0));
        report
            .notes
            .push(format!("ks by dt stride {:?} = {ks:?}", spec.dt_strides));
    }
    report.checks.push(Check::at_most(
        "mean_rel",
        (sups.mean() * phi - 1.0).abs(),
        spec.tolerance("mean_rel")?,
    ));
    for &b in &spec.grid.b {
        report.rows.push(ReportRow::new(
            format!("b={b}"),
            exp_cdf(b),
            sups.eval(b),
            sups.len() as u64,
            ks_tol,
        ));
    }
    Ok(())
}

pub(super) fn post_inf_sup(
    runner: &mut Runner,
    spec: &ExperimentSpec,
    report: &mut ExperimentReport,
) -> Result<()> {
    let (_, batch) = simulated(runner, spec, None, report)?;
    let (paths, dropped) = usable(&batch[..report.paths_simulated as usize]);
    report.truncated = dropped;
    let ev = evaluator(spec)?;
    let tol = spec.tolerance("gap")?;
    let da = spec.delta_a.unwrap_or_default();
    for &a in &spec.grid.a {
        let members: Vec<&PathExtremes> = paths
            .iter()
            .map(|p| &p[0])
            .filter(|e| (e.inf - a).abs() <= da)
            .collect();
        require_bin(
            format!("|I_T - ({a})| <= {da}"),
            members.len(),
            spec.min_bin_count,
        )?;
        for &b in &spec.grid.b {
            let empirical = fraction(&members, |e| e.post_inf_sup <= b);
            let mut total = 0.0;
            for e in &members {
                total += post_inf_sup_cdf(&ev, e.inf, b)?;
            }
            let analytic = total / members.len() as f64;
            report.rows.push(ReportRow::new(
                format!("a={a} b={b}"),
                analytic,
                empirical,
                members.len() as u64,
                tol,
            ));
            report.notes.push(format!(
                "a={a} b={b}: bin-centre analytic {}",
                post_inf_sup_cdf(&ev, a, b)?
            ));
        }
    }
    Ok(())
}

pub(super) fn max_loss_post_sup(
    runner: &mut Runner,
    spec: &ExperimentSpec,
    report: &mut ExperimentReport,
) -> Result<()> {
    let (_, batch) = simulated(runner, spec, None, report)?;
    let (paths, dropped) = usable(&batch[..report.paths_simulated as usize]);
    report.truncated = dropped;
    let ev = evaluator(spec)?;
    let tol = spec.tolerance("gap")?;
    let da = spec.delta_a.unwrap_or_default();
    let db = spec.delta_b.unwrap_or_default();
    for &a in &spec.grid.a {
        for &b in &spec.grid.b {
            let members: Vec<&PathExtremes> = paths
                .iter()
                .map(|p| &p[0])
                .filter(|e| (e.inf - a).abs() <= da && (e.sup - b).abs() <= db && e.h_inf < e.h_sup)
                .collect();
            require_bin(
                format!("|I_T - ({a})| <= {da}, |S_T - {b}| <= {db}, H_I < H_S"),
                members.len(),
                spec.min_bin_count,
            )?;
            for &d in &spec.grid.d {
                let empirical = fraction(&members, |e| e.post_sup_max_loss < d);
                let mut total = 0.0;
                for e in &members {
                    total += max_loss_post_sup_cdf(&ev, d, e.inf, e.sup)?;
                }
                let analytic = total / members.len() as f64;
                report.rows.push(ReportRow::new(
                    format!("a={a} b={b} d={d}"),
                    analytic,
                    empirical,
                    members.len() as u64,
                    tol,
                ));
                report.notes.push(format!(
                    "a={a} b={b} d={d}: bin-centre analytic {}",
                    max_loss_post_sup_cdf(&ev, d, a, b)?
                ));
            }
        }
    }
    Ok(())
}

/// Rows comparing two samples' empirical CDFs at the quartiles of `reference`.
fn quartile_rows(
    report: &mut ExperimentReport,
    prefix: &str,
    reference: &[f64],
    sample: &[f64],
    tol: f64,
) -> Result<()> {
    let r = empirical_cdf(reference)?;
    let s = empirical_cdf(sample)?;
    for q in QUARTILES {
        let x = r.quantile(q);
        report.rows.push(ReportRow::new(
            format!("{prefix} q={q} x={x}"),
            r.eval(x),
            s.eval(x),
            s.len() as u64,
            tol,
        ));
    }
    Ok(())
}

pub(super) fn esscher_presup(
    runner: &mut Runner,
    spec: &ExperimentSpec,
    report: &mut ExperimentReport,
) -> Result<()> {
    let (cfg, batch) = simulated(runner, spec, None, report)?;
    let (paths, dropped) = usable(&batch[..report.paths_simulated as usize]);
    report.truncated = dropped;
    let tilted = spec.model.esscher_tilt(spec.gamma)?;
    let tol = spec.tolerance("ks")?;
    let db = spec.delta_b.unwrap_or_default();
    let per = spec.reference_per_path as u64;
    for (bi, &b) in spec.grid.b.iter().enumerate() {
        let members: Vec<&PathExtremes> = paths
            .iter()
            .map(|p| &p[0])
            .filter(|e| (e.sup - b).abs() <= db)
            .collect();
        require_bin(
            format!("|S_T - {b}| <= {db}"),
            members.len(),
            spec.min_bin_count,
        )?;
        let offset = (bi as u64) << 40;
        let refs = par_map(members.len() as u64 * per, runner.workers(), |j| {
            let level = members[(j / per) as usize].sup;
            first_passage_reference(
                &tilted,
                cfg.dt(),
                cfg.seed(),
                offset + j,
                level,
                cfg.t_cap(),
            )
        })?;
        let missing = refs.iter().filter(|r| r.is_none()).count();
        let (taus, mins): (Vec<f64>, Vec<f64>) = refs.into_iter().flatten().unzip();
        let h_sup: Vec<f64> = members.iter().map(|e| e.h_sup).collect();
        let pre_inf: Vec<f64> = members.iter().map(|e| e.pre_sup_inf).collect();
        let ks_h = ks_two_sample(&h_sup, &taus)?;
        let ks_inf = ks_two_sample(&pre_inf, &mins)?;
        report
            .checks
            .push(Check::at_most(format!("ks H_S vs tau b={b}"), ks_h, tol));
        report.checks.push(Check::at_most(
            format!("ks pre-H_S inf vs tilted inf b={b}"),
            ks_inf,
            tol,
        ));
        report.notes.push(format!(
            "b={b}: n_conditional={} reference walks={} (not reaching the level by t_cap: {missing})",
            members.len(),
            taus.len()
        ));
        quartile_rows(report, &format!("b={b} H_S vs tau"), &taus, &h_sup, tol)?;
        quartile_rows(
            report,
            &format!("b={b} pre-H_S inf vs tilted inf"),
            &mins,
            &pre_inf,
            tol,
        )?;
    }
    Ok(())
}

/// `X_{ρ+t} − X_ρ` at grid time `t_eval`, stopped at `level`.
fn direct_post_rho(cfg: &SimConfig, index: u64, level: f64, t_eval: f64) -> Result<Option<f64>> {
    let path = simulate_path_until(cfg, index, level)?;
    let ex = extremes_of(&path, Some(level));
    if ex.truncated {
        return Ok(None);
    }
    let Some(seg) = post_rho_segment(&path, &ex) else {
        return Ok(None);
    };
    let target = (t_eval / cfg.dt()).round() as usize;
    for (k, &z) in seg.values.iter().enumerate() {
        if z > level {
            return Ok(Some(level));
        }
        if k >= target {
            return Ok(Some(z));
        }
    }
    Ok(seg.values.last().copied())
}

pub(super) fn post_rho_sde(
    runner: &mut Runner,
    spec: &ExperimentSpec,
    report: &mut ExperimentReport,
) -> Result<()> {
    let cfg = spec.sim_config()?;
    let level = spec.level.unwrap_or_default();
    let tol = spec.tolerance("ks")?;
    let workers = runner.workers();
    let direct: Vec<f64> = try_par_map(cfg.n_paths(), workers, |i| {
        direct_post_rho(&cfg, i, level, spec.t_eval)
    })?
    .into_iter()
    .flatten()
    .collect();
    require_bin(
        format!("tau_{level}^+ < T"),
        direct.len(),
        spec.min_bin_count,
    )?;
    let ev = evaluator(spec)?;
    let n_ref = spec.n_reference.unwrap_or_default();
    let sde_cfg = cfg.clone().with_n_paths(n_ref)?;
    let mut factors = spec.eps_factors.clone();
    factors.sort_by(|x, y| y.total_cmp(x));
    let mut runs: Vec<Vec<Option<f64>>> = Vec::new();
    let mut samples = Vec::new();
    let mut discarded = 0u64;
    for &f in &factors {
        // same path index, same driving noise: runs are coupled across eps
        let values = try_par_map(n_ref, workers, |i| {
            post_rho_stopped_value(&ev, &sde_cfg, level, f * level, i, spec.t_eval)
        })?;
        let kept: Vec<f64> = values.iter().flatten().copied().collect();
        let lost = n_ref - kept.len() as u64;
        discarded += lost;
        let ks = ks_two_sample(&direct, &kept)?;
        report.notes.push(format!(
            "eps={}: ks vs direct {ks}, discarded {lost} of {n_ref}",
            f * level
        ));
        runs.push(values);
        samples.push(kept);
    }
    report.paths_simulated = cfg.n_paths() + n_ref * factors.len() as u64;
    report.truncated = discarded;
    let finest = samples.last().expect("eps_factors validated non-empty");
    report.checks.push(Check::at_most(
        "ks at smallest eps",
        ks_two_sample(&direct, finest)?,
        tol,
    ));
    if runs.len() >= 2 {
        let ks_steps: Vec<f64> = samples
            .windows(2)
            .map(|w| ks_two_sample(&w[0], &w[1]))
            .collect::<Result<_>>()?;
        let l1_steps: Vec<f64> = runs.windows(2).map(|w| coupled_l1(&w[0], &w[1])).collect();
        report
            .notes
            .push(format!("ks between successive eps: {ks_steps:?}"));
        report.notes.push(format!(
            "coupled mean |Z(eps_k) - Z(eps_k+1)| between successive eps: {l1_steps:?}"
        ));
        if l1_steps.len() >= 2 {
            let worst = l1_steps
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            report.checks.push(Check::below(
                "eps convergence (coupled distance growth)",
                worst,
                0.0,
            ));
        }
    }
    quartile_rows(
        report,
        &format!("Z_{} direct vs sde", spec.t_eval),
        &direct,
        finest,
        tol,
    )?;
    report
        .notes
        .push(format!("direct post-rho samples: {}", direct.len()));
    Ok(())
}

/// Mean `|a_i − b_i|` over indices kept in both runs.
fn coupled_l1(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    let (sum, n) = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x.as_ref()? - y.as_ref()?).abs()))
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    sum / n.max(1) as f64
}

const EXTRA_INVARIANTS: [&str; 5] = [
    "inf <= X_t <= sup on the grid",
    "max_loss equals brute-force reverse scan",
    "max_gain equals brute-force reverse scan",
    "h_sup is the last time at sup",
    "h_inf is the last time at inf",
];

fn brute_force_flags(times: &[f64], values: &[f64], e: &PathExtremes) -> [bool; 5] {
    let (mut run_min, mut run_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut loss, mut gain) = (0.0f64, 0.0f64);
    for &x in values.iter().rev() {
        run_min = run_min.min(x);
        run_max = run_max.max(x);
        loss = loss.max(x - run_min);
        gain = gain.max(run_max - x);
    }
    let last_at = |v: f64| values.iter().rposition(|&x| x == v).map(|i| times[i]);
    [
        values.iter().all(|&x| e.inf <= x && x <= e.sup),
        loss == e.max_loss,
        gain == e.max_gain,
        last_at(e.sup) == Some(e.h_sup),
        last_at(e.inf) == Some(e.h_inf),
    ]
}

pub(super) fn path_invariants(
    runner: &mut Runner,
    spec: &ExperimentSpec,
    report: &mut ExperimentReport,
) -> Result<()> {
    let cfg = spec.sim_config()?;
    let tol = spec.tolerance("violations")?;
    let flags = try_par_map(cfg.n_paths(), runner.workers(), |i| {
        let path = simulate_path(&cfg, i)?;
        let e = extremes_of(&path, None);
        let mut all = [true; 12];
        all[..7].copy_from_slice(&e.invariant_flags());
        all[7..].copy_from_slice(&brute_force_flags(path.times(), path.values(), &e));
        Ok((all, path.truncated()))
    })?;
    report.paths_simulated = cfg.n_paths();
    report.truncated = flags.iter().filter(|f| f.1).count() as u64;
    let names = PathExtremes::INVARIANTS
        .iter()
        .chain(EXTRA_INVARIANTS.iter());
    for (k, name) in names.enumerate() {
        let violations = flags.iter().filter(|f| !f.0[k]).count();
        report.rows.push(ReportRow::new(
            *name,
            0.0,
            violations as f64,
            cfg.n_paths(),
            tol,
        ));
    }
    Ok(())
}
