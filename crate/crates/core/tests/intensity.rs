use nou_amm::intensity::{hamiltonian, intensity, optimal_markup, quad_fit, SideIntensity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn usdc_side() -> SideIntensity<f64> {
    SideIntensity::new(250.0, 0.0, 1e4).unwrap()
}

fn objective(s: &SideIntensity<f64>, z: f64, p: f64, gamma: f64, d: f64) -> f64 {
    let gz = gamma * z;
    s.rate(d) / gz * -(-gz * (d - p)).exp_m1()
}

/// Brute-force maximum over `n` equally spaced markups in `[p, p + 20/b]`.
fn grid_max(s: &SideIntensity<f64>, z: f64, p: f64, gamma: f64, n: usize) -> (f64, f64, f64) {
    let cell = 20.0 / s.b / (n - 1) as f64;
    let (mut best, mut arg) = (f64::NEG_INFINITY, p);
    for i in 0..n {
        let d = p + cell * i as f64;
        let v = objective(s, z, p, gamma, d);
        if v > best {
            best = v;
            arg = d;
        }
    }
    (best, arg, cell)
}

#[test]
fn grid_oracle_matches_hamiltonian() {
    let s = usdc_side();
    let hv = hamiltonian(&s, 1e5, 0.0, 1e-5).unwrap();
    let (h, _, _) = grid_max(&s, 1e5, 0.0, 1e-5, 1_000_000);
    assert!((hv.h - h).abs() < 1e-8 * h, "{} vs {}", hv.h, h);
}

#[test]
fn markup_matches_maximizer_on_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let s = SideIntensity::new(rng.random_range(50.0..500.0), rng.random_range(-1.0..1.0), 1e4).unwrap();
        let p = rng.random_range(-3e-4..3e-4);
        let gamma = 10f64.powf(rng.random_range(-6.0..-4.0));
        let z = 10f64.powf(rng.random_range(1.0..5.0));
        let hv = hamiltonian(&s, z, p, gamma).unwrap();
        let d = optimal_markup(&s, z, p, gamma).unwrap();
        assert!((d - hv.delta_star).abs() < 1e-9 * (1.0 + d.abs() * s.b) / s.b);
        let lhs = gamma * z * hv.h - hv.dh_dp;
        assert!((lhs - s.rate(hv.delta_star)).abs() < 1e-9 * lhs);
    }
}

#[test]
fn markup_increases_with_shift() {
    let s = usdc_side();
    let mut prev = f64::NEG_INFINITY;
    for i in 0..100 {
        let p = -5e-4 + 1e-5 * i as f64;
        let d = optimal_markup(&s, 1e5, p, 1e-5).unwrap();
        assert!(d >= prev);
        prev = d;
    }
}

#[test]
fn hamiltonian_decreasing_and_convex() {
    let s = usdc_side();
    let hs: Vec<f64> = (0..200)
        .map(|i| hamiltonian(&s, 1e5, -5e-4 + 5e-6 * i as f64, 1e-5).unwrap().h)
        .collect();
    for w in hs.windows(3) {
        assert!(w[1] < w[0]);
        assert!(w[0] - 2.0 * w[1] + w[2] > -1e-12 * w[1]);
    }
}

#[test]
fn intensity_strictly_decreasing() {
    let s = usdc_side();
    for i in 0..1000 {
        let d = -1e-3 + 2e-6 * i as f64;
        assert!(intensity(&s, 1.0, d + 1e-6) < intensity(&s, 1.0, d));
    }
}

#[test]
fn quadratic_approximant_tracks_h_near_zero() {
    // The Taylor quadratic turns upward while H keeps decaying, so the
    // agreement only holds up to roughly p = 1/b.
    let s = usdc_side();
    let q = quad_fit(&s, 1e5, 1e-5).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..=250 {
        let p = (-2.0 + 0.01 * i as f64) / s.b;
        let h = hamiltonian(&s, 1e5, p, 1e-5).unwrap().h;
        worst = worst.max((q.eval(p) - h).abs() / h);
    }
    assert!(worst < 0.05, "worst relative error {worst}");
    let far = hamiltonian(&s, 1e5, 2.0 / s.b, 1e-5).unwrap().h;
    assert!(q.eval(2.0 / s.b) > far);
}

#[test]
fn quad_curvature_matches_slope_differences() {
    let s = usdc_side();
    let q = quad_fit(&s, 1e5, 1e-5).unwrap();
    let e = 1e-7;
    let fd = (hamiltonian(&s, 1e5, e, 1e-5).unwrap().h - 2.0 * q.alpha0 + hamiltonian(&s, 1e5, -e, 1e-5).unwrap().h)
        / (e * e);
    assert!((fd - q.alpha2).abs() < 1e-3 * q.alpha2);
}

#[test]
fn more_elastic_demand_tightens_markups() {
    let mut prev = f64::INFINITY;
    for b in [1e3, 1e4, 1e5] {
        let s = SideIntensity::new(250.0, 0.0, b).unwrap();
        let d = optimal_markup(&s, 1e5, 0.0, 1e-5).unwrap();
        assert!(d < prev);
        prev = d;
    }
}

