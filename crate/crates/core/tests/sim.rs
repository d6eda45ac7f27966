use nou_amm::calibrate::Sample;
use nou_amm::control::{coefficients, ControlCoeffs, ControlConfig};
use nou_amm::filter::FilteredNouParams;
use nou_amm::intensity::{LiquiditySpec, Side};
use nou_amm::model::NouParams;
use nou_amm::sim::{
    draw_starts, excess_pnl, historical_replay, replay_events, run_path, Market, PoolState, PriceSource, SimConfig,
    Strategy,
};

fn usdc_market() -> Market {
    Market::new(NouParams::usdc_usdt(), LiquiditySpec::usdc_usdt()).unwrap()
}

fn day_coeffs(m: &Market, gamma: f64) -> ControlCoeffs<f64> {
    let f = FilteredNouParams::from_params(m.params).unwrap();
    coefficients(&f, &m.liquidity, &ControlConfig::new(gamma, 1.0)).unwrap()
}

#[test]
fn trade_counts_match_intensity() {
    let m = usdc_market();
    let sim = SimConfig::default();
    let (mut n01, mut n10) = (0u64, 0u64);
    for seed in 0..50 {
        let r = run_path(&m, PriceSource::Simulated, Strategy::Constant(0.0), &sim, seed).unwrap();
        n01 += r.trades_01;
        n10 += r.trades_10;
    }
    // 125 per day at zero markup; the average of 50 days has sd sqrt(125/50)
    for n in [n01, n10] {
        let avg = n as f64 / 50.0;
        assert!((avg - 125.0).abs() < 3.0 * 125f64.sqrt(), "avg {avg}");
        assert!((avg - 125.0).abs() < 4.0 * (125.0f64 / 50.0).sqrt(), "avg {avg}");
    }
}

#[test]
fn event_log_replays_exactly() {
    let m = usdc_market();
    let c = day_coeffs(&m, 1e-5);
    let sim = SimConfig { record_events: true, horizon: 0.25, ..SimConfig::default() };
    let r = run_path(&m, PriceSource::Simulated, Strategy::Greedy(&c), &sim, 4).unwrap();
    let events = r.events.as_ref().unwrap();
    assert!(!events.is_empty());
    let start = PoolState::new(sim.initial_q0, sim.initial_q1, events[0].s, 0.0);
    let end = replay_events(start, events, r.terminal.s);
    assert_eq!((end.x, end.y0, end.y1), (r.terminal.x, r.terminal.y0, r.terminal.y1));
    assert_eq!(excess_pnl(&end), r.excess_pnl);
    for e in events {
        let expect = match e.side {
            Side::ZeroOne => e.s + e.delta,
            Side::OneZero => e.s - e.delta,
        };
        assert_eq!(e.rate, expect);
    }
    let stepwise: f64 = events.iter().map(|e| e.z * e.delta).sum::<f64>();
    assert!((stepwise - r.terminal.x).abs() < 1e-9 * r.terminal.x.abs().max(1.0));
}

fn flat_series(level: f64) -> Sample<f64> {
    let times: Vec<f64> = (0..=3 * 96).map(|i| i as f64 / 96.0).collect();
    let n = times.len();
    Sample::new(times, vec![level; n]).unwrap()
}

#[test]
fn frozen_peg_earns_only_markups() {
    let m = usdc_market();
    let series = flat_series(1.0);
    let c = day_coeffs(&m, 1e-5);
    for seed in 0..5 {
        let src = PriceSource::Historical { series: &series, start: 10 };
        let r = run_path(&m, src, Strategy::Constant(2e-4), &SimConfig::default(), seed).unwrap();
        assert!((r.excess_pnl - r.terminal.x).abs() < 1e-6);
        assert!(r.terminal.x >= 0.0);
        let g = run_path(&m, src, Strategy::Greedy(&c), &SimConfig::default(), seed).unwrap();
        assert!((g.excess_pnl - g.terminal.x).abs() < 1e-6);
    }
}

#[test]
fn constant_series_replay_matches_frozen_peg() {
    let m = usdc_market();
    let series = flat_series(1.0);
    let sim = SimConfig { horizon: 0.5, ..SimConfig::default() };
    let a = run_path(&m, PriceSource::Historical { series: &series, start: 0 }, Strategy::Constant(1e-4), &sim, 3)
        .unwrap();
    let b = run_path(&m, PriceSource::Historical { series: &series, start: 40 }, Strategy::Constant(1e-4), &sim, 3)
        .unwrap();
    assert_eq!(a.excess_pnl, b.excess_pnl);
    assert_eq!(a.trades_01, b.trades_01);
}

#[test]
fn historical_windows_reproducible() {
    let m = usdc_market();
    let times: Vec<f64> = (0..=4 * 96).map(|i| i as f64 / 96.0).collect();
    let values = times.iter().map(|t| 1.0 + 4e-4 * (5.0 * t).sin()).collect();
    let series = Sample::new(times, values).unwrap();
    let sim = SimConfig { horizon: 0.5, ..SimConfig::default() };
    assert_eq!(draw_starts(&series, 0.5, 20, 7).unwrap(), draw_starts(&series, 0.5, 20, 7).unwrap());
    let cfg = ControlConfig::new(1e-5, 0.5);
    let a = historical_replay(&m, &cfg, &sim, &series, &[1e-5], 4, 7).unwrap();
    let b = historical_replay(&m, &cfg, &sim, &series, &[1e-5], 4, 7).unwrap();
    assert_eq!(a, b);
    let short = Sample::new(vec![0.0, 0.1], vec![1.0, 1.0]).unwrap();
    assert!(historical_replay(&m, &cfg, &sim, &short, &[1e-5], 4, 7).is_err());
}

#[test]
fn greedy_day_runs_quickly() {
    let m = usdc_market();
    let c = day_coeffs(&m, 1e-5);
    let t = std::time::Instant::now();
    let r = run_path(&m, PriceSource::Simulated, Strategy::Greedy(&c), &SimConfig::default(), 0).unwrap();
    println!("greedy day: {:?}, pnl {}, trades {} / {}", t.elapsed(), r.excess_pnl, r.trades_01, r.trades_10);
    assert!(r.excess_pnl.is_finite());
}
