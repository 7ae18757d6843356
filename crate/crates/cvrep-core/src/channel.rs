//! Two-mode squeezed vacuum sources and the pure-loss fibre channel with an
//! explicit environment mode.

use alloc::vec;

use num_complex::Complex64;
use num_traits::{Float, Zero};

use crate::error::{check_range, Error, Result};
use crate::fock::{Mode, ModeId, MultiModeKet};
use crate::linalg::CMatrix;

/// Default fibre attenuation (dB/km).
pub const DEFAULT_ATTENUATION_DB_PER_KM: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    pub chi: f64,
}

impl SourceParams {
    pub fn new(chi: f64) -> Result<Self> {
        check_range("chi", chi, (0.0..1.0).contains(&chi), "[0, 1)")?;
        Ok(Self { chi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberChannel {
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
}

impl FiberChannel {
    pub fn new(length_km: f64) -> Self {
        Self {
            length_km,
            attenuation_db_per_km: DEFAULT_ATTENUATION_DB_PER_KM,
        }
    }
}

/// `eta = 10^(-attenuation * length / 10)`.
pub fn transmissivity(c: &FiberChannel) -> Result<f64> {
    check_range("length_km", c.length_km, c.length_km >= 0.0, ">= 0")?;
    check_range(
        "attenuation_db_per_km",
        c.attenuation_db_per_km,
        c.attenuation_db_per_km >= 0.0,
        ">= 0",
    )?;
    Ok(10f64.powf(-c.attenuation_db_per_km * c.length_km / 10.0))
}

/// `sqrt(1 - chi^2) sum_n chi^n |n>|n>` truncated at `cutoff`.
pub fn tmsv(p: SourceParams, first: char, second: char, cutoff: usize) -> Result<MultiModeKet> {
    check_range("chi", p.chi, (0.0..1.0).contains(&p.chi), "[0, 1)")?;
    let l = cutoff + 1;
    let mut amps = vec![Complex64::zero(); l * l];
    let pre = (1.0 - p.chi * p.chi).sqrt();
    let mut pw = 1.0;
    for n in 0..l {
        amps[n * l + n] = Complex64::new(pre * pw, 0.0);
        pw *= p.chi;
    }
    MultiModeKet::new(vec![Mode::new(first, cutoff), Mode::new(second, cutoff)], amps)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Beamsplitter dilation of loss on `mode`: a fresh vacuum environment `env`
/// (same cutoff) is appended and `|n> -> sum_p sqrt(C(n,p) eta^p (1-eta)^(n-p)) |p>|n-p>_env`.
pub fn apply_loss(state: &MultiModeKet, mode: ModeId, eta: f64, env: ModeId) -> Result<MultiModeKet> {
    check_range("eta", eta, (0.0..=1.0).contains(&eta), "[0, 1]")?;
    let m = state.mode(mode)?;
    if state.modes().iter().any(|x| x.id == env) {
        return Err(Error::ModeCollision(env));
    }
    let cutoff = m.cutoff;
    let l = cutoff + 1;
    let with_env = state.tensor(&MultiModeKet::vacuum(vec![Mode { id: env, cutoff }])?)?;
    let mut op = CMatrix::zeros(l * l, l * l);
    for n in 0..l {
        // input |n>|0>_env
        let col = n * l;
        for p in 0..=n {
            let amp = (binomial(n, p)
                * eta.powi(p as i32)
                * (1.0 - eta).powi((n - p) as i32))
            .sqrt();
            op.set(p * l + (n - p), col, Complex64::new(amp, 0.0));
        }
    }
    with_env.apply_pair(mode, env, &op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::ModeId as M;

    #[test]
    fn transmissivity_values() {
        assert_eq!(transmissivity(&FiberChannel::new(0.0)).unwrap(), 1.0);
        assert!((transmissivity(&FiberChannel::new(50.0)).unwrap() - 0.1).abs() < 1e-15);
        let eta = transmissivity(&FiberChannel::new(161.0)).unwrap();
        assert!((eta - 10f64.powf(-3.22)).abs() < 1e-18);
        assert!((eta - 6.03e-4).abs() < 1e-6);
        assert!(transmissivity(&FiberChannel::new(-1.0)).is_err());
    }

    #[test]
    fn tmsv_amplitudes_and_norm() {
        let z = tmsv(SourceParams::new(0.0).unwrap(), 'A', 'B', 5).unwrap();
        assert_eq!(z.amplitude(&[0, 0]).re, 1.0);
        assert_eq!(z.norm_sqr(), 1.0);
        let chi = 0.3;
        let s = tmsv(SourceParams::new(chi).unwrap(), 'A', 'B', 12).unwrap();
        assert!((s.amplitude(&[1, 1]).re - 0.28618176042508).abs() < 1e-12);
        let want = 1.0 - chi.powi(2 * 13);
        assert!((s.norm_sqr() - want).abs() < 1e-15);
        assert!(SourceParams::new(1.0).is_err());
    }

    #[test]
    fn loss_extremes() {
        let s = tmsv(SourceParams::new(0.4).unwrap(), 'A', 'C', 6).unwrap();
        let t = apply_loss(&s, M('C'), 1.0, M('D')).unwrap();
        let want = s.tensor(&MultiModeKet::vacuum(vec![Mode::new('D', 6)]).unwrap()).unwrap();
        for (x, y) in t.amplitudes().iter().zip(want.amplitudes()) {
            assert!((x - y).norm() < 1e-15);
        }
        let z = apply_loss(&s, M('C'), 0.0, M('D')).unwrap();
        for n in 0..=6 {
            for m in 1..=6 {
                assert_eq!(z.amplitude(&[n, m, n.min(6)]).norm(), 0.0);
            }
            assert_eq!(z.amplitude(&[n, 0, n]), s.amplitude(&[n, n]));
        }
    }

    #[test]
    fn single_photon_half_split() {
        let one = MultiModeKet::number('C', 1, 1);
        let out = apply_loss(&one, M('C'), 0.5, M('D')).unwrap();
        let h = 0.5f64.sqrt();
        assert!((out.amplitude(&[1, 0]).re - h).abs() < 1e-15);
        assert!((out.amplitude(&[0, 1]).re - h).abs() < 1e-15);
        assert!(apply_loss(&one, M('C'), 0.5, M('C')).is_err());
    }

    #[test]
    fn lossy_tmsv_covariance() {
        let (chi, eta) = (0.3, 0.1);
        let s = tmsv(SourceParams::new(chi).unwrap(), 'A', 'C', 40).unwrap();
        let out = apply_loss(&s, M('C'), eta, M('D')).unwrap();
        let rho = out.reduced_density(&[M('A'), M('C')]).unwrap().normalized().unwrap();
        let v = rho.moments(M('A'), M('C')).unwrap().covariance();
        let a = (1.0 + chi * chi) / (1.0 - chi * chi);
        let b = 1.0 + eta * (a - 1.0);
        let c = eta.sqrt() * 2.0 * chi / (1.0 - chi * chi);
        assert!((v[0][0] - a).abs() < 1e-8);
        assert!((v[2][2] - b).abs() < 1e-8);
        assert!((v[0][2] - c).abs() < 1e-8);
    }

    #[test]
    fn losses_compose() {
        let s = tmsv(SourceParams::new(0.5).unwrap(), 'A', 'C', 10).unwrap();
        let two = apply_loss(&apply_loss(&s, M('C'), 0.6, M('D')).unwrap(), M('C'), 0.3, M('E'))
            .unwrap()
            .reduced_density(&[M('A'), M('C')])
            .unwrap();
        let one = apply_loss(&s, M('C'), 0.18, M('D'))
            .unwrap()
            .reduced_density(&[M('A'), M('C')])
            .unwrap();
        assert!(two.matrix().max_abs_diff(one.matrix()) < 1e-12);
    }
}
