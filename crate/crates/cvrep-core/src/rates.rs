//! Expected waiting times for probabilistic stages and the repeater rate.

use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{check_range, Error, Result};

/// Success probabilities of every probabilistic stage of a `2^n`-link chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StageProbabilities {
    pub p_nla: f64,
    /// `p_ps[i]` is used with `Z_i`; `i = n - 1` is the first (base) round
    /// of swaps and `i = 0` the final one.
    pub p_ps: Vec<f64>,
}

impl StageProbabilities {
    /// Builds from per-round probabilities listed base round first.
    pub fn from_rounds(p_nla: f64, rounds_base_first: &[f64]) -> Self {
        Self {
            p_nla,
            p_ps: rounds_base_first.iter().rev().copied().collect(),
        }
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_p(p: f64) -> Result<()> {
    check_range("p", p, p > 0.0 && p <= 1.0, "(0, 1]")
}

/// Expected number of steps until `2^n` independent geometric trials with
/// success probability `p` have all succeeded (alternating binomial sum,
/// compensated).
pub fn z_steps(n: u32, p: f64) -> Result<f64> {
    check_p(p)?;
    let m = 1u64 << n;
    let log_q = (-p).ln_1p();
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for j in 1..=m {
        let denom = if p == 1.0 {
            1.0
        } else {
            -(j as f64 * log_q).exp_m1()
        };
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * binomial(m, j) / denom;
        // Neumaier summation
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    Ok(sum + comp)
}

/// The same expectation as `sum_{t >= 0} (1 - (1 - (1-p)^t)^(2^n))`,
/// truncated once the tail bound drops below `1e-13`.
pub fn z_steps_expectation(n: u32, p: f64) -> Result<f64> {
    check_p(p)?;
    let m = (1u64 << n) as f64;
    if p == 1.0 {
        return Ok(1.0);
    }
    let log_q = (-p).ln_1p();
    let mut sum = 0.0;
    let mut t = 0u64;
    loop {
        let qt = (t as f64 * log_q).exp();
        // 1 - (1 - q^t)^m, computed without cancellation
        let term = -(m * (-qt).ln_1p()).exp_m1();
        sum += term;
        // remaining tail <= m q^(t+1) / p
        if m * qt * (1.0 - p) / p < 1e-13 {
            break;
        }
        t += 1;
    }
    Ok(sum)
}

/// `R_rep = 1 / (Z_n(p_nla) prod_i Z_i(p_ps[i]))`.
pub fn repeater_rate(sp: &StageProbabilities, n: u32) -> Result<f64> {
    if sp.p_ps.len() != n as usize {
        return Err(Error::LengthMismatch {
            expected: n as usize,
            got: sp.p_ps.len(),
        });
    }
    let mut steps = z_steps(n, sp.p_nla)?;
    for (i, &p) in sp.p_ps.iter().enumerate() {
        steps *= z_steps(i as u32, p)?;
    }
    Ok(1.0 / steps)
}

pub fn secret_key_rate(k: f64, r_rep: f64) -> Result<f64> {
    check_range("K", k, k >= 0.0, ">= 0")?;
    check_range("r_rep", r_rep, r_rep > 0.0 && r_rep <= 1.0, "(0, 1]")?;
    Ok(k * r_rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn certain_success_takes_one_step() {
        for n in 0..6 {
            assert!((z_steps(n, 1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_geometric() {
        for &p in &[0.01, 0.2, 0.7] {
            assert!((z_steps(0, p).unwrap() - 1.0 / p).abs() < 1e-12 / p);
        }
    }

    #[test]
    fn two_links_half() {
        let p = 0.5;
        let want = 2.0 / p - 1.0 / (p * (2.0 - p));
        assert!((z_steps(1, p).unwrap() - want).abs() < 1e-13);
        assert!((want - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn alternating_matches_expectation_form() {
        for n in 0..=4 {
            for &p in &[1e-3, 0.01, 0.1, 0.5, 0.9] {
                let a = z_steps(n, p).unwrap();
                let b = z_steps_expectation(n, p).unwrap();
                assert!((a - b).abs() <= 1e-10 * a, "n={n} p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn monotonicity() {
        for n in 0..4 {
            let mut prev = f64::INFINITY;
            for k in 1..20 {
                let z = z_steps(n, k as f64 / 20.0).unwrap();
                assert!(z >= 1.0 && z < prev);
                prev = z;
            }
            assert!(z_steps(n + 1, 0.3).unwrap() > z_steps(n, 0.3).unwrap());
        }
    }

    #[test]
    fn repeater_rate_composition() {
        let sp = StageProbabilities {
            p_nla: 0.01,
            p_ps: vec![0.3],
        };
        let want = 1.0 / (z_steps(1, 0.01).unwrap() * (1.0 / 0.3));
        assert!((repeater_rate(&sp, 1).unwrap() - want).abs() < 1e-15);
        let four = StageProbabilities::from_rounds(0.02, &[0.2, 0.4]);
        assert_eq!(four.p_ps, vec![0.4, 0.2]);
        let want = 1.0
            / (z_steps(2, 0.02).unwrap() * z_steps(1, 0.2).unwrap() * z_steps(0, 0.4).unwrap());
        assert!((repeater_rate(&four, 2).unwrap() - want).abs() < 1e-15);
        let ones = StageProbabilities {
            p_nla: 1.0,
            p_ps: vec![1.0; 3],
        };
        assert!((repeater_rate(&ones, 3).unwrap() - 1.0).abs() < 1e-12);
        assert!(repeater_rate(&ones, 2).is_err());
    }

    #[test]
    fn key_rate_product() {
        assert_eq!(secret_key_rate(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(secret_key_rate(0.25, 1.0).unwrap(), 0.25);
        assert!(z_steps(1, 0.0).is_err());
    }
}
