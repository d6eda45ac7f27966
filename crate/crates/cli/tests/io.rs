use nou_amm_cli::io::{
    aligned_cross_rate, cross_rate, parse_step, read_raw, resample_ffill, resample_ffill_range, write_raw, RawSeries,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn series(ts: &[i64], px: &[f64]) -> RawSeries {
    RawSeries::new(ts.to_vec(), px.to_vec(), "test").unwrap()
}

#[test]
fn uniform_series_is_unchanged() {
    let s = series(&[0, 60, 120, 180], &[1.0, 1.1, 0.9, 1.2]);
    assert_eq!(resample_ffill(&s, 60).unwrap(), s);
}

#[test]
fn gap_repeats_the_last_value() {
    let s = series(&[0, 10, 50, 60], &[1.0, 2.0, 3.0, 4.0]);
    let r = resample_ffill(&s, 10).unwrap();
    assert_eq!(r.timestamps, vec![0, 10, 20, 30, 40, 50, 60]);
    assert_eq!(r.prices, vec![1.0, 2.0, 2.0, 2.0, 2.0, 3.0, 4.0]);
}

#[test]
fn fill_then_downsample_equals_direct_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut ts, mut px) = (Vec::new(), Vec::new());
    let mut t = 0i64;
    while t < 86_400 {
        ts.push(t);
        px.push(1.0 + rng.random_range(-1e-3..1e-3));
        // Mostly per-second ticks with occasional gaps up to an hour.
        t += if rng.random_bool(0.001) { rng.random_range(1..3600) } else { 1 };
    }
    let s = series(&ts, &px);
    let fine = resample_ffill(&s, 1).unwrap();
    let direct = resample_ffill(&s, 900).unwrap();
    let stepped: Vec<f64> = fine.prices.iter().step_by(900).copied().collect();
    assert_eq!(direct.prices, stepped);
    assert_eq!(direct.timestamps, fine.timestamps.iter().step_by(900).copied().collect::<Vec<_>>());

    // Independent oracle: last observation at or before each grid point.
    for (g, p) in direct.timestamps.iter().zip(&direct.prices) {
        let j = ts.iter().rposition(|t| t <= g).unwrap();
        assert_eq!(*p, px[j]);
    }
}

#[test]
fn grid_cannot_start_before_the_data() {
    let s = series(&[100, 200], &[1.0, 1.0]);
    assert!(resample_ffill_range(&s, 50, 200, 10).is_err());
    assert!(resample_ffill(&s, 0).is_err());
}

#[test]
fn cross_rate_arithmetic() {
    let num = series(&[0, 1], &[1.0001, 1.0]);
    let den = series(&[0, 1], &[0.9999, 1.0]);
    let r = cross_rate(&num, &den).unwrap();
    assert!((r.prices[0] - 1.0001 / 0.9999).abs() < 1e-15);
    assert!((r.prices[0] - 1.000_200_020_002).abs() < 1e-12);
    assert_eq!(r.prices[1], 1.0);
}

#[test]
fn identical_legs_give_one() {
    let s = series(&[0, 5, 9], &[0.97, 1.03, 1.5]);
    assert!(cross_rate(&s, &s).unwrap().prices.iter().all(|p| *p == 1.0));
}

#[test]
fn cross_rate_recombines() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ts: Vec<i64> = (0..500).collect();
    let x: Vec<f64> = ts.iter().map(|_| rng.random_range(0.5..2.0)).collect();
    let y: Vec<f64> = ts.iter().map(|_| rng.random_range(0.5..2.0)).collect();
    let r = cross_rate(&series(&ts, &x), &series(&ts, &y)).unwrap();
    for i in 0..ts.len() {
        assert!((r.prices[i] * y[i] - x[i]).abs() <= 1e-12 * x[i]);
    }
}

#[test]
fn disjoint_series_have_no_cross_rate() {
    let a = series(&[0, 10], &[1.0, 1.0]);
    let b = series(&[20, 30], &[1.0, 1.0]);
    assert!(cross_rate(&a, &b).is_err());
    assert!(aligned_cross_rate(&a, &b, 5).is_err());
}

#[test]
fn aligned_cross_rate_uses_the_overlap() {
    let a = series(&[0, 7, 30], &[2.0, 4.0, 8.0]);
    let b = series(&[5, 12, 40], &[1.0, 2.0, 4.0]);
    let r = aligned_cross_rate(&a, &b, 5).unwrap();
    assert_eq!(r.timestamps, vec![5, 10, 15, 20, 25, 30]);
    assert_eq!(r.prices, vec![2.0, 4.0, 2.0, 2.0, 2.0, 4.0]);
}

#[test]
fn csv_round_trip_keeps_full_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ts: Vec<i64> = (0..200).map(|i| 1_700_000_000 + 3 * i).collect();
    let px: Vec<f64> = ts.iter().map(|_| rng.random_range(1e-9..1e9)).collect();
    let s = series(&ts, &px);
    let mut buf = Vec::new();
    write_raw(&mut buf, &s).unwrap();
    assert_eq!(read_raw(buf.as_slice(), "test").unwrap(), s);
}

#[test]
fn csv_errors_name_line_and_field() {
    let bad_price = "timestamp,price\n1,1.0\n2,abc\n";
    let e = read_raw(bad_price.as_bytes(), "feed.csv").unwrap_err();
    assert!(e.message.contains("feed.csv") && e.message.contains("line 3") && e.message.contains("`price`"), "{e}");

    let bad_ts = "timestamp,price\n1.5,1.0\n";
    let e = read_raw(bad_ts.as_bytes(), "feed.csv").unwrap_err();
    assert!(e.message.contains("line 2") && e.message.contains("`timestamp`"), "{e}");

    let backwards = "timestamp,price\n5,1.0\n4,1.0\n";
    let e = read_raw(backwards.as_bytes(), "feed.csv").unwrap_err();
    assert!(e.message.contains("line 3") && e.message.contains("`timestamp`"), "{e}");

    let negative = "timestamp,price\n5,-1.0\n";
    assert!(read_raw(negative.as_bytes(), "feed.csv").unwrap_err().message.contains("`price`"));

    let header = "time,price\n1,1\n";
    assert!(read_raw(header.as_bytes(), "feed.csv").unwrap_err().message.contains("line 1"));

    let short = "timestamp,price\n1\n";
    assert!(read_raw(short.as_bytes(), "feed.csv").unwrap_err().message.contains("line 2"));
    assert!(read_raw("timestamp,price\n".as_bytes(), "feed.csv").is_err());
}

#[test]
fn durations() {
    assert_eq!(parse_step("900").unwrap(), 900);
    assert_eq!(parse_step("15m").unwrap(), 900);
    assert_eq!(parse_step("1h").unwrap(), 3600);
    assert!(parse_step("0").is_err());
    assert!(parse_step("1.5s").is_err());
    assert!(parse_step("soon").is_err());
}
