//! Gauss–Legendre rules and polar integration helpers.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;

/// Nodes and weights of an `n`-point rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Gauss–Legendre on `[-1, 1]`, nodes ascending.
    pub fn gauss_legendre(n: usize) -> Rule {
        assert!(n >= 1);
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = -(PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        Rule { nodes, weights }
    }

    /// The rule mapped affinely onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> Rule {
        let h = 0.5 * (b - a);
        Rule {
            nodes: self.nodes.iter().map(|x| a + h * (x + 1.0)).collect(),
            weights: self.weights.iter().map(|w| w * h).collect(),
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `P_n(x)` and `P_n'(x)`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Radial rule on `[0, r_max]` carrying the polar Jacobian `r` and the full
/// `2 pi` phase factor: `integrate(f)` approximates the disk integral of a
/// phase-independent `f(|gamma|)`.
pub fn radial_disk_rule(n: usize, r_max: f64) -> Rule {
    let base = Rule::gauss_legendre(n).on_interval(0.0, r_max);
    Rule {
        weights: base
            .nodes
            .iter()
            .zip(&base.weights)
            .map(|(r, w)| w * r * 2.0 * PI)
            .collect(),
        nodes: base.nodes,
    }
}

/// Uniform phase nodes `2 pi k / n`.
pub fn phase_nodes(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}
