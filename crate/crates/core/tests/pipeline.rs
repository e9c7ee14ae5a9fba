use crossdisp_core::synth::BubbleScenario;
use crossdisp_core::{
    dispersion_series, loglog_tail_fit, normalize_panel, survival_curve, tail_series, tref_sweep,
    Date, KPolicy, MissingDataPolicy, PricePanel,
};

fn day(d: u32) -> Date {
    Date::from_ymd_opt(2021, 3, d).unwrap()
}

fn quantile_grid(n: usize, alpha: f64) -> Vec<f64> {
    (1..=n)
        .map(|i| ((n + 1 - i) as f64 / (n + 1) as f64).powf(-1.0 / alpha))
        .collect()
}

/// Hill estimate on the top `k` points of a quantile grid, from its log-sum closed form.
fn hill_oracle(k: usize, alpha: f64) -> f64 {
    let h: f64 = (1..=k)
        .map(|m| ((k + 1) as f64 / m as f64).ln())
        .sum::<f64>()
        / k as f64;
    alpha / h
}

/// Panel whose first row is all ones and every later row is `row`.
fn panel_of(rows: usize, row: &[f64]) -> PricePanel {
    let dates = (1..=rows as u32).map(day).collect();
    let tickers = (0..row.len()).map(|i| format!("T{i}")).collect();
    let mut prices = vec![vec![Some(1.0); row.len()]];
    prices.extend((1..rows).map(|_| row.iter().map(|&v| Some(v)).collect()));
    PricePanel::new(dates, tickers, prices).unwrap()
}

#[test]
fn tail_series_on_repeated_quantile_grid() {
    let alpha = 2.5;
    let grid = quantile_grid(200, alpha);
    let perf = normalize_panel(&panel_of(4, &grid), day(1), MissingDataPolicy::DropAtRef).unwrap();
    let series = tail_series(&perf, KPolicy::default());
    let alphas = series.alpha_values();
    assert_eq!(alphas.len(), 4);
    // Row 0 is the reference date: every performance is 1, so the tail is degenerate.
    assert_eq!(alphas[0], None);
    let expected = hill_oracle(20, alpha);
    for a in &alphas[1..] {
        let a = a.unwrap();
        assert!((a - expected).abs() < 1e-12, "{a} vs {expected}");
        assert_eq!(Some(a), alphas[1]);
    }
}

#[test]
fn tail_series_gaps_and_shape() {
    let small = normalize_panel(
        &panel_of(3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]),
        day(1),
        MissingDataPolicy::DropAtRef,
    )
    .unwrap();
    let series = tail_series(&small, KPolicy::default());
    assert!(series.alpha_values().iter().all(Option::is_none));

    let two = normalize_panel(
        &panel_of(2, &quantile_grid(50, 3.0)),
        day(1),
        Default::default(),
    )
    .unwrap();
    assert_eq!(tail_series(&two, KPolicy::default()).dates.len(), 2);
}

#[test]
fn loglog_fit_on_quantile_grid_matches_direct_regression() {
    for &(n, alpha) in &[(1000usize, 2.0f64), (5001, 3.0), (20_000, 1.5)] {
        let x = quantile_grid(n, alpha);
        let curve = survival_curve(&x).unwrap();
        let z_min = curve.median();
        let est = loglog_tail_fit(&curve, z_min).unwrap();

        let pts: Vec<(f64, f64)> = (1..n)
            .filter(|&i| x[i - 1] > z_min)
            .map(|i| {
                let lz = -((n + 1 - i) as f64 / (n + 1) as f64).ln() / alpha;
                let ls = ((n - i) as f64 / n as f64).ln();
                (lz, ls)
            })
            .collect();
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (sxx, sxy) = pts
            .iter()
            .fold((0.0, 0.0), |a, p| (a.0 + p.0 * p.0, a.1 + p.0 * p.1));
        let oracle = -(m * sxy - sx * sy) / (m * sxx - sx * sx);

        assert_eq!(est.k, pts.len());
        assert!(
            (est.alpha_hat - oracle).abs() < 1e-8 * oracle,
            "{} vs {oracle}",
            est.alpha_hat
        );
        assert!(
            (oracle - alpha).abs() < 0.1 * alpha,
            "bias too large: {oracle} vs {alpha}"
        );
    }
}

#[test]
fn sweep_on_single_path_panel_has_zero_variance() {
    let path = [10.0, 12.0, 9.0, 15.0, 11.0];
    let dates: Vec<Date> = (1..=5).map(day).collect();
    let prices = path.iter().map(|&p| vec![Some(p); 4]).collect();
    let tickers = (0..4).map(|i| format!("S{i}")).collect();
    let panel = PricePanel::new(dates, tickers, prices).unwrap();
    let sweep = tref_sweep(
        &panel,
        &[day(1), day(2), day(4)],
        MissingDataPolicy::DropAtRef,
        KPolicy::default(),
    )
    .unwrap();
    assert_eq!(sweep.entries.len(), 3);
    for entry in &sweep.entries {
        assert!(entry.dispersion.variance.iter().all(|v| *v == Some(0.0)));
    }
}

#[test]
fn variance_peaks_in_bubble_for_trefs_around_onset() {
    let scenario = BubbleScenario::default();
    for seed in [1, 2, 3, 4, 5] {
        let synth = scenario.generate(seed);
        let dates = synth.panel.dates();
        for ref_idx in [synth.onset - 30, synth.onset + 30] {
            let perf = normalize_panel(&synth.panel, dates[ref_idx], MissingDataPolicy::DropAtRef)
                .unwrap();
            let disp = dispersion_series(&perf);
            let peak = disp
                .variance
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.unwrap().total_cmp(&b.1.unwrap()))
                .unwrap()
                .0
                + ref_idx;
            assert!(
                (synth.onset..=synth.peak + 10).contains(&peak),
                "seed {seed}, t_ref day {ref_idx}: peak at day {peak}"
            );
        }
    }
}
