use cvrep_core::rates::{z_steps, z_steps_expectation};
use cvrep_core::swap::{
    ps_probability, GridNode, LinkParams, OutcomeFamily, PostSelectionGrid, PostSelectionRule,
    QuadratureConfig, TwoLinkFamily, TwoLinkSource,
};
use cvrep_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn geometric(rng: &mut ChaCha8Rng, log_q: f64) -> u64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    if log_q == f64::NEG_INFINITY {
        return 1;
    }
    (u.ln() / log_q).floor() as u64 + 1
}

fn z_monte_carlo(n: u32, p: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_q = (-p).ln_1p();
    let mut total = 0u64;
    for _ in 0..trials {
        total += (0..1u32 << n).map(|_| geometric(&mut rng, log_q)).max().unwrap();
    }
    total as f64 / trials as f64
}

#[test]
fn z_steps_matches_monte_carlo() {
    for n in 0..4 {
        for p in [0.01, 0.1, 0.5, 0.9] {
            let mc = z_monte_carlo(n, p, 1_000_000, 17 + n as u64);
            let z = z_steps(n, p).unwrap();
            assert!((mc - z).abs() < 0.01 * z, "n={n} p={p}: {z} vs {mc}");
        }
    }
}

#[test]
fn z_steps_forms_agree() {
    for n in 0..5 {
        for p in [1e-3, 0.01, 0.1, 0.5, 0.9, 1.0] {
            let a = z_steps(n, p).unwrap();
            let b = z_steps_expectation(n, p).unwrap();
            assert!((a - b).abs() <= 1e-10 * a, "n={n} p={p}: {a} vs {b}");
        }
    }
}

#[test]
fn ps_probability_matches_monte_carlo() {
    let params = LinkParams {
        chi: 0.3,
        eta: 0.05,
        g: 10.0,
        cutoff: 8,
    };
    let src = TwoLinkSource::new(params).unwrap();
    let fam = TwoLinkFamily {
        source: &src,
        gains: None,
    };
    let gm = 0.5;
    let r_out = 6.0;
    let grid = PostSelectionGrid::new(
        PostSelectionRule::new(gm).unwrap(),
        QuadratureConfig::default(),
        8,
        1,
        true,
    );
    let quad = ps_probability(&fam, &grid).unwrap().value;

    // stratified uniform sampling of the plane in area strata, random phase
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let strata = 4000;
    let mut integral = |r0: f64, r1: f64| {
        let area = std::f64::consts::PI * (r1 * r1 - r0 * r0) / strata as f64;
        let mut s = 0.0;
        for k in 0..strata {
            let t = (k as f64 + rng.gen::<f64>()) / strata as f64;
            let r = (r0 * r0 + t * (r1 * r1 - r0 * r0)).sqrt();
            let th = rng.gen::<f64>() * std::f64::consts::TAU;
            let node = GridNode::new(Complex64::from_polar(r, th), 0.0, 8, 1);
            s += area * fam.outcome_density(&node).unwrap();
        }
        s
    };
    let inside = integral(0.0, gm);
    let outside = integral(gm, r_out);
    let mc = inside / (inside + outside);
    assert!((mc - quad).abs() < 0.01 * quad, "{quad} vs {mc}");
}
