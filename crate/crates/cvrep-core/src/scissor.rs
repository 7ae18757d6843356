//! Single quantum-scissor noiseless linear amplifier, modelled by the
//! operator `T = Pi_1 g^n / sqrt(g^2 + 1)` that keeps the `{|0>, |1>}` sector.

use num_complex::Complex64;
use num_traits::Float;

use crate::channel::{apply_loss, tmsv, SourceParams};
use crate::error::{check_range, Result};
use crate::fock::{ModeId, MultiModeKet};
use crate::linalg::CMatrix;

/// Largest accepted scissor gain.
pub const MAX_GAIN: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlaParams {
    pub g: f64,
    /// Beamsplitter ratio `1 / (1 + g^2)` of the interferometric realization.
    pub xi: f64,
}

impl NlaParams {
    pub fn new(g: f64) -> Result<Self> {
        check_range("g", g, g > 0.0 && g <= MAX_GAIN, "(0, 100]")?;
        Ok(Self {
            g,
            xi: 1.0 / (1.0 + g * g),
        })
    }

    pub fn from_xi(xi: f64) -> Result<Self> {
        check_range("xi", xi, xi > 0.0 && xi < 1.0, "(0, 1)")?;
        Self::new(((1.0 - xi) / xi).sqrt())
    }

    /// `2 x levels` matrix of the scissor operator.
    pub fn operator(&self, levels: usize) -> CMatrix {
        let norm = 1.0 / (self.g * self.g + 1.0).sqrt();
        let mut t = CMatrix::zeros(2, levels);
        t.set(0, 0, Complex64::new(norm, 0.0));
        if levels > 1 {
            t.set(1, 1, Complex64::new(self.g * norm, 0.0));
        }
        t
    }
}

/// Heralded scissor on `mode`; output is unnormalized and the mode keeps
/// only levels 0 and 1.
pub fn apply_qs(state: &MultiModeKet, mode: ModeId, p: NlaParams) -> Result<MultiModeKet> {
    let m = state.mode(mode)?;
    state.apply_local(mode, &p.operator(m.levels()))
}

/// Closed-form heralding probability for a lossy TMSV arm:
/// `(1-chi^2)(chi^2(eta g^2 + eta - 1) + 1) / ((g^2+1)((eta-1)chi^2 + 1)^2)`.
pub fn p_nla(chi: f64, eta: f64, g: f64) -> Result<f64> {
    check_range("chi", chi, (0.0..1.0).contains(&chi), "[0, 1)")?;
    check_range("eta", eta, (0.0..=1.0).contains(&eta), "[0, 1]")?;
    check_range("g", g, g > 0.0, "> 0")?;
    let c2 = chi * chi;
    let g2 = g * g;
    let den = (g2 + 1.0) * ((eta - 1.0) * c2 + 1.0).powi(2);
    Ok((1.0 - c2) * (c2 * (eta * g2 + eta - 1.0) + 1.0) / den)
}

/// Source, loss and scissor for one link with explicit labels:
/// `kept` stays at the source, `sent` crosses the fibre and is scissored,
/// `env` purifies the loss. Unnormalized, mode order `(kept, sent, env)`.
pub fn distilled_link_labeled(
    chi: f64,
    eta: f64,
    g: f64,
    cutoff: usize,
    labels: [char; 3],
) -> Result<MultiModeKet> {
    let [kept, sent, env] = labels;
    let src = tmsv(SourceParams::new(chi)?, kept, sent, cutoff)?;
    let lossy = apply_loss(&src, ModeId(sent), eta, ModeId(env))?;
    apply_qs(&lossy, ModeId(sent), NlaParams::new(g)?)
}

/// Distilled link over modes `(A, C, D)`.
pub fn distilled_link(chi: f64, eta: f64, g: f64, cutoff: usize) -> Result<MultiModeKet> {
    distilled_link_labeled(chi, eta, g, cutoff, ['A', 'C', 'D'])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Mode;
    use alloc::vec;

    #[test]
    fn vacuum_passes_with_prefactor() {
        let p = NlaParams::new(3.0).unwrap();
        let out = apply_qs(&MultiModeKet::number('C', 4, 0), ModeId('C'), p).unwrap();
        assert!((out.norm_sqr() - 0.1).abs() < 1e-15);
        assert_eq!(out.modes()[0].cutoff, 1);
    }

    #[test]
    fn two_photon_term_removed() {
        let h = 0.5f64.sqrt();
        let psi = MultiModeKet::new(
            vec![Mode::new('C', 3)],
            vec![
                Complex64::new(h, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(h, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let g = 2.0;
        let out = apply_qs(&psi, ModeId('C'), NlaParams::new(g).unwrap()).unwrap();
        assert!((out.amplitudes()[0].re - h / (g * g + 1.0).sqrt()).abs() < 1e-15);
        assert_eq!(out.amplitudes()[1].norm(), 0.0);
    }

    #[test]
    fn xi_roundtrip() {
        let p = NlaParams::new(4.0).unwrap();
        let q = NlaParams::from_xi(p.xi).unwrap();
        assert!((q.g - 4.0).abs() < 1e-12);
        assert!(NlaParams::new(0.0).is_err());
        assert!(NlaParams::new(150.0).is_err());
    }

    #[test]
    fn p_nla_limits() {
        assert!((p_nla(0.0, 0.3, 2.0).unwrap() - 0.2).abs() < 1e-15);
        let chi: f64 = 0.3;
        assert!((p_nla(chi, 1.0, 1.0).unwrap() - (1.0 - chi.powi(4)) / 2.0).abs() < 1e-15);
        assert!((p_nla(0.3, 1.0, 1.0).unwrap() - 0.49595).abs() < 1e-12);
        assert!(p_nla(1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn link_matches_closed_form_expansion() {
        // |psi> = sqrt((1-chi^2)/(g^2+1)) sum_n chi^n (1-eta)^{n/2} |n,0,n>
        //       + g sqrt(eta n) chi^n (1-eta)^{(n-1)/2} |n,1,n-1>
        let (chi, eta, g, n_cut) = (0.3f64, 0.1f64, 3.0f64, 12usize);
        let link = distilled_link(chi, eta, g, n_cut).unwrap();
        let pre = ((1.0 - chi * chi) / (g * g + 1.0)).sqrt();
        for a in 0..=n_cut {
            for d in 0..=n_cut {
                for c in 0..2 {
                    let want = if c == 0 && d == a {
                        pre * chi.powi(a as i32) * (1.0 - eta).powf(a as f64 / 2.0)
                    } else if c == 1 && a >= 1 && d == a - 1 {
                        pre * g
                            * (eta * a as f64).sqrt()
                            * chi.powi(a as i32)
                            * (1.0 - eta).powf((a as f64 - 1.0) / 2.0)
                    } else {
                        0.0
                    };
                    let got = link.amplitude(&[a, c, d]);
                    assert!((got.re - want).abs() < 1e-14 && got.im == 0.0);
                }
            }
        }
    }

    #[test]
    fn lossless_link_has_vacuum_environment() {
        let link = distilled_link(0.4, 1.0, 2.0, 8).unwrap();
        for a in 0..=8 {
            for c in 0..2 {
                for d in 1..=8 {
                    assert_eq!(link.amplitude(&[a, c, d]).norm(), 0.0);
                }
            }
        }
        let l1 = distilled_link(0.3, 1.0, 1.0, 30).unwrap();
        assert!((l1.norm_sqr() - (1.0 - 0.3f64.powi(4)) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn sector_ratio() {
        let (chi, eta, g) = (0.3f64, 0.01f64, 6.0f64);
        let link = distilled_link(chi, eta, g, 30).unwrap();
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for a in 0..=30 {
            for d in 0..=30 {
                s0 += link.amplitude(&[a, 0, d]).norm_sqr();
                s1 += link.amplitude(&[a, 1, d]).norm_sqr();
            }
        }
        let num: f64 = (1..=30)
            .map(|n| chi.powi(2 * n) * n as f64 * (1.0 - eta).powi(n - 1))
            .sum();
        let den: f64 = (0..=30).map(|n| chi.powi(2 * n) * (1.0 - eta).powi(n)).sum();
        assert!((s1 / s0 - g * g * eta * num / den).abs() < 1e-12);
    }
}
