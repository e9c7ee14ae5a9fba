use std::path::Path;

use crossdisp_core::io::{
    first_trading_days, load_price_panel, tref_sweep, write_hill_sweep_csv, write_price_panel,
    write_report, write_sim_table, write_survival_csv, CsvFormat, IoError, Report,
};
use crossdisp_core::sim::{dispersion_table, rho_grid, sigma_grid, RowSource, SweepRow};
use crossdisp_core::synth::BubbleScenario;
use crossdisp_core::tail::hill_k_sweep;
use crossdisp_core::{
    expected_dispersion, hill_estimator, loglog_tail_fit, normalize_panel, survival_curve,
    validate_feasibility, CorrelationSpec, KPolicy, PanelError, PricePanel, SimError,
};

use crate::error::CliError;
use crate::{AnalyzeArgs, CliResult, SimulateArgs, SurvivalArgs, SweepArgs, SynthArgs, TableArg};

fn load(path: &Path) -> Result<PricePanel, CliError> {
    load_price_panel(path, CsvFormat::default()).map_err(|e| match e {
        IoError::Io { .. } => CliError::Data(e.to_string()),
        other => CliError::from(other).in_file(path),
    })
}

fn write_err(path: &Path) -> impl Fn(IoError) -> CliError + '_ {
    move |e| match e {
        IoError::Io { .. } => CliError::Data(e.to_string()),
        other => CliError::from(other).in_file(path),
    }
}

fn run_report(
    panel: &PricePanel,
    t_refs: &[crossdisp_core::Date],
    policy: crossdisp_core::MissingDataPolicy,
    series: &crate::SeriesOpts,
) -> CliResult {
    let window = series.window as usize;
    let sweep = tref_sweep(panel, t_refs, policy, KPolicy::fraction(series.k_fraction))?;
    let report = Report::from_sweep(&sweep, Some(window));

    for block in &report.series {
        if block.dispersion.len() <= 2 * window {
            eprintln!(
                "warning: t_ref {}: {} dates is too short for extreme detection with window {window}",
                block.t_ref,
                block.dispersion.len()
            );
        }
    }
    write_report(&report, &series.out, series.format.into()).map_err(write_err(&series.out))?;

    for block in &report.series {
        let peak = block
            .dispersion
            .iter()
            .filter_map(|r| r.variance.map(|v| (r.date, v)))
            .fold(None, |best: Option<(_, f64)>, (d, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((d, v)),
            });
        let last_alpha = block.tail.iter().rev().find_map(|r| r.alpha_hat);
        println!(
            "t_ref {}: {} dates, {} stocks at t_ref, max variance {}, last alpha {}, {} events",
            block.t_ref,
            block.dispersion.len(),
            block.dispersion.first().map_or(0, |r| r.count),
            peak.map_or("n/a".to_owned(), |(d, v)| format!("{v:.6} on {d}")),
            last_alpha.map_or("n/a".to_owned(), |a| format!("{a:.4}")),
            block.events.len()
        );
    }
    Ok(())
}

pub fn analyze(a: AnalyzeArgs) -> CliResult {
    let panel = load(&a.panel.panel)?;
    run_report(&panel, &[a.tref], a.panel.policy.into(), &a.series)
}

pub fn sweep(a: SweepArgs) -> CliResult {
    let panel = load(&a.panel.panel)?;
    let t_refs = match &a.years {
        Some(years) => first_trading_days(&panel, &years.0)?,
        None => a.trefs.clone(),
    };
    run_report(&panel, &t_refs, a.panel.policy.into(), &a.series)
}

pub fn survival(a: SurvivalArgs) -> CliResult {
    let panel = load(&a.panel.panel)?;
    if panel.date_index(a.date).is_none() {
        return Err(CliError::Data(format!(
            "date {} is not in the panel",
            a.date
        )));
    }
    if a.date < a.tref {
        return Err(CliError::Usage(format!(
            "--date {} precedes --tref {}",
            a.date, a.tref
        )));
    }
    let perf = normalize_panel(&panel, a.tref, a.panel.policy.into())?;
    let cross = perf
        .cross_section_at(a.date)
        .ok_or(PanelError::RefDateAbsent(a.date))?;
    let curve = survival_curve(&cross)?;

    let hill_rows = match &a.hill_out {
        Some(_) => {
            let ks: Vec<usize> = (1..cross.len()).collect();
            Some(
                hill_k_sweep(&cross, &ks)?
                    .into_iter()
                    .map(|(k, r)| (k, r.ok().map(|e| e.alpha_hat)))
                    .collect::<Vec<_>>(),
            )
        }
        None => None,
    };

    write_survival_csv(&curve, &a.out).map_err(write_err(&a.out))?;
    if let (Some(path), Some(rows)) = (&a.hill_out, &hill_rows) {
        write_hill_sweep_csv(rows, path).map_err(write_err(path))?;
    }

    let z_min = a.z_min.unwrap_or_else(|| curve.median());
    println!(
        "{}: {} stocks, {} step points, median {:.6}",
        a.date,
        curve.n(),
        curve.step_points().len(),
        curve.median()
    );
    match loglog_tail_fit(&curve, z_min) {
        Ok(est) => println!(
            "log-log fit above z = {z_min:.6}: alpha {:.4} over {} points",
            est.alpha_hat, est.k
        ),
        Err(e) => println!("log-log fit above z = {z_min:.6}: {e}"),
    }
    match KPolicy::default().k_for(cross.len()) {
        Some(k) => match hill_estimator(&cross, k) {
            Ok(est) => println!("hill (k = {k}): alpha {:.4}", est.alpha_hat),
            Err(e) => println!("hill (k = {k}): {e}"),
        },
        None => println!("hill: cross-section too small"),
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    if a.n < 2 {
        return Err(SimError::TooSmall(a.n).into());
    }
    if a.m_reps == 0 {
        return Err(SimError::ZeroReps.into());
    }
    let params: Vec<(f64, f64)> = match a.table {
        None => vec![(a.rho.unwrap_or(0.0), a.sigma)],
        Some(TableArg::RhoSweep) => rho_grid().into_iter().map(|r| (r, a.sigma)).collect(),
        Some(TableArg::SigmaSweep) => {
            let rho = a.rho.unwrap_or(0.5);
            sigma_grid().into_iter().map(|s| (rho, s)).collect()
        }
    };

    let rows: Vec<SweepRow> = if a.analytic_only {
        params
            .iter()
            .map(|&(rho, sigma)| {
                let spec = CorrelationSpec::equicorrelated(a.n, rho, sigma)?;
                Ok(SweepRow {
                    n: a.n,
                    rho,
                    sigma,
                    analytic: expected_dispersion(&spec),
                    feasible: validate_feasibility(&spec).feasible,
                    source: RowSource::Analytic,
                    simulated: None,
                })
            })
            .collect::<Result<_, CliError>>()?
    } else {
        if a.table.is_none() {
            let (rho, sigma) = params[0];
            let spec = CorrelationSpec::equicorrelated(a.n, rho, sigma)?;
            let feas = validate_feasibility(&spec);
            if !feas.feasible {
                return Err(SimError::NotPsd {
                    min_eigenvalue: feas.min_eigenvalue,
                }
                .into());
            }
        }
        dispersion_table(a.n, &params, a.m_reps, a.seed)?
    };

    if let Some(path) = &a.out {
        write_sim_table(&rows, a.m_reps, a.seed, path, a.format.into()).map_err(write_err(path))?;
    }

    println!(
        "{:>6} {:>6} {:>6}  {:<9} {:>12} {:>12} {:>10}",
        "n", "rho", "sigma", "source", "E[V_N]", "mean V_N", "se"
    );
    for r in &rows {
        let (mean, se) = match &r.simulated {
            Some(s) => (format!("{:.6}", s.mean_vn), format!("{:.2e}", s.se_vn)),
            None => ("-".to_owned(), "-".to_owned()),
        };
        let source = match r.source {
            RowSource::Simulated => "simulated",
            RowSource::Analytic => "analytic",
        };
        println!(
            "{:>6} {:>6} {:>6}  {:<9} {:>12.6} {:>12} {:>10}",
            r.n, r.rho, r.sigma, source, r.analytic, mean, se
        );
    }
    for r in rows.iter().filter(|r| !r.feasible) {
        eprintln!(
            "note: rho = {} is not realizable for n = {} (needs rho >= {:.6}); analytic value only",
            r.rho,
            r.n,
            -1.0 / (r.n - 1) as f64
        );
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> CliResult {
    if a.bubble_stocks > a.stocks {
        return Err(CliError::Usage("--bubble-stocks exceeds --stocks".into()));
    }
    if !(a.onset < a.peak && a.peak < a.days && a.peak + a.crash_days <= a.days) {
        return Err(CliError::Usage(
            "need --onset < --peak and --peak + --crash-days <= --days".into(),
        ));
    }
    if a.stocks < 2 {
        return Err(CliError::Usage("--stocks must be at least 2".into()));
    }
    let scenario = BubbleScenario {
        n_stocks: a.stocks,
        n_bubble: a.bubble_stocks,
        n_days: a.days,
        onset: a.onset,
        peak: a.peak,
        crash_days: a.crash_days,
        ..Default::default()
    };
    let generated = scenario.generate(a.seed);
    write_price_panel(&generated.panel, &a.out).map_err(write_err(&a.out))?;
    let dates = generated.panel.dates();
    println!(
        "wrote {} dates x {} stocks; bubble {} .. {}, crash ends {}",
        dates.len(),
        generated.panel.n_tickers(),
        dates[a.onset],
        dates[a.peak],
        dates[a.peak + a.crash_days - usize::from(a.crash_days > 0)]
    );
    Ok(())
}
