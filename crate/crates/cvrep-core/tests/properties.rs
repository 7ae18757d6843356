use cvrep_core::channel::{apply_loss, tmsv, SourceParams};
use cvrep_core::fock::{displacement_guard, displacement_rect, ModeId, MultiModeKet};
use cvrep_core::linalg::CMatrix;
use cvrep_core::metrics::{
    check_physical, eof_gaussian, lossy_tmsv_cm, symplectic_eigs, CovarianceMatrixTM,
};
use cvrep_core::quadrature::radial_disk_rule;
use cvrep_core::rates::z_steps;
use cvrep_core::scissor::{apply_qs, distilled_link, p_nla, NlaParams};
use cvrep_core::swap::{
    link_output_state, ps_probability, DisplacementGains, GridNode, LinkParams, OutcomeFamily,
    PostSelectionGrid, PostSelectionRule, QuadratureConfig, TwoLinkFamily, TwoLinkSource,
    MODE_A, MODE_B,
};
use cvrep_core::Complex64;
use proptest::prelude::*;

fn id(c: char) -> ModeId {
    ModeId(c)
}

fn lossy(chi: f64, eta: f64, cutoff: usize) -> MultiModeKet {
    let s = tmsv(SourceParams::new(chi).unwrap(), 'A', 'C', cutoff).unwrap();
    apply_loss(&s, id('C'), eta, id('D')).unwrap()
}

fn cm_of_density(rho: &cvrep_core::fock::MultiModeDensity) -> CovarianceMatrixTM {
    let m = rho.normalized().unwrap().moments(MODE_A, MODE_B).unwrap();
    CovarianceMatrixTM::from_full(m.covariance(), m.mean)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tmsv_norm_is_truncated_geometric_series(chi in 0.0f64..0.9, n in 1usize..25) {
        let s = tmsv(SourceParams::new(chi).unwrap(), 'A', 'B', n).unwrap();
        let want = 1.0 - chi.powi(2 * (n as i32 + 1));
        prop_assert!((s.norm_sqr() - want).abs() < 1e-12);
    }

    #[test]
    fn loss_preserves_norm(chi in 0.0f64..0.8, eta in 0.0f64..=1.0) {
        let s = tmsv(SourceParams::new(chi).unwrap(), 'A', 'C', 15).unwrap();
        let out = apply_loss(&s, id('C'), eta, id('D')).unwrap();
        prop_assert!((out.norm_sqr() - s.norm_sqr()).abs() <= 1e-10);
    }

    #[test]
    fn reduced_states_are_hermitian_psd(chi in 0.0f64..0.7, eta in 0.0f64..=1.0) {
        let rho = lossy(chi, eta, 10).reduced_density(&[id('A'), id('C')]).unwrap();
        prop_assert!(rho.hermiticity_defect() < 1e-10);
        prop_assert!(rho.eigenvalues().iter().all(|&l| l >= -1e-9));
        let full = lossy(chi, eta, 10).to_density();
        let t = full.partial_trace(&[id('A'), id('C')]).unwrap();
        prop_assert!((t.trace() - full.trace()).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_commutes_with_ancilla(chi in 0.0f64..0.6, theta in 0.0f64..6.3) {
        let rho = lossy(chi, 0.4, 8).reduced_density(&[id('A'), id('C')]).unwrap();
        let anc = MultiModeKet::new(
            vec![cvrep_core::fock::Mode::new('Z', 1)],
            vec![Complex64::new(theta.cos(), 0.0), Complex64::from_polar(theta.sin(), 0.3)],
        )
        .unwrap()
        .to_density();
        let joint = rho.tensor(&anc).unwrap();
        let back = joint.partial_trace(&[id('A'), id('C')]).unwrap();
        prop_assert!(back.matrix().max_abs_diff(rho.matrix()) < 1e-12);
    }

    #[test]
    fn lossy_tmsv_cm_matches_fock_moments(chi in 0.05f64..0.4, eta in 0.0f64..=1.0) {
        let rho = lossy(chi, eta, 30).reduced_density(&[id('A'), id('C')]).unwrap();
        let m = rho.normalized().unwrap().moments(id('A'), id('C')).unwrap();
        let v = CovarianceMatrixTM::from_full(m.covariance(), m.mean);
        let want = lossy_tmsv_cm(chi, eta);
        prop_assert!((v.a - want.a).abs() < 1e-8);
        prop_assert!((v.b - want.b).abs() < 1e-8);
        prop_assert!((v.c - want.c).abs() < 1e-8);
        let (_, nu2) = symplectic_eigs(&v).unwrap();
        prop_assert!(nu2 >= 1.0 - 1e-6);
    }

    #[test]
    fn doubling_cutoff_is_converged(chi in 0.0f64..=0.4) {
        let lo = tmsv(SourceParams::new(chi).unwrap(), 'A', 'B', 12).unwrap().to_density();
        let hi = tmsv(SourceParams::new(chi).unwrap(), 'A', 'B', 24).unwrap().to_density();
        prop_assert!((lo.trace() - hi.trace()).abs() <= 1e-8);
        let ml = lo.normalized().unwrap().moments(MODE_A, MODE_B).unwrap().covariance();
        let mh = hi.normalized().unwrap().moments(MODE_A, MODE_B).unwrap().covariance();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((ml[i][j] - mh[i][j]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn scissor_truncates_and_contracts(chi in 0.0f64..0.8, eta in 0.0f64..=1.0, g in 0.2f64..20.0) {
        let s = lossy(chi, eta, 12);
        let out = apply_qs(&s, id('C'), NlaParams::new(g).unwrap()).unwrap();
        prop_assert_eq!(out.mode(id('C')).unwrap().cutoff, 1);
        prop_assert!(out.norm_sqr() <= s.norm_sqr() + 1e-15);
    }

    #[test]
    fn nla_probability_closed_form(chi in 0.0f64..=0.6, eta in 0.0f64..=1.0, g in 0.5f64..8.0) {
        let brute = distilled_link(chi, eta, g, 30).unwrap().norm_sqr();
        prop_assert!((brute - p_nla(chi, eta, g).unwrap()).abs() <= 1e-8);
    }

    #[test]
    fn nla_probability_decreases_with_gain(chi in 0.0f64..0.9, eta in 0.0f64..=1.0, g in 1.0f64..10.0) {
        prop_assert!(p_nla(chi, eta, g + 0.5).unwrap() < p_nla(chi, eta, g).unwrap());
    }

    #[test]
    fn displacement_is_unitary(r in 0.0f64..=1.0, th in 0.0f64..6.3, n in 1usize..21) {
        let alpha = Complex64::from_polar(r, th);
        let wide = n + displacement_guard(alpha, n);
        let d = displacement_rect(alpha, wide, n);
        prop_assert!(d.adjoint().matmul(&d).max_abs_diff(&CMatrix::identity(n + 1)) < 1e-8);
        let back = displacement_rect(-alpha, n, wide).matmul(&d);
        prop_assert!(back.max_abs_diff(&CMatrix::identity(n + 1)) < 1e-8);
    }

    #[test]
    fn pure_state_eof_is_entanglement_entropy(chi in 0.01f64..=0.5) {
        let s = tmsv(SourceParams::new(chi).unwrap(), 'A', 'B', 40).unwrap();
        let entropy = s.reduced_density(&[MODE_A]).unwrap().entropy();
        let v = cm_of_density(&s.to_density());
        prop_assert!((eof_gaussian(&v).unwrap() - entropy).abs() < 1e-6);
    }

    #[test]
    fn z_steps_ordering(n in 0u32..5, p in 0.01f64..0.99) {
        let z = z_steps(n, p).unwrap();
        prop_assert!(z >= 1.0);
        prop_assert!(z_steps(n, (p + 0.01).min(1.0)).unwrap() < z);
        prop_assert!(z_steps(n + 1, p).unwrap() > z);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn link_outputs_are_physical(
        chi in 0.05f64..0.4,
        eta in 0.001f64..1.0,
        g in 1.0f64..30.0,
        r in 0.0f64..1.5,
        th in 0.0f64..6.3,
        la in -1.0f64..1.0,
        lb in -1.0f64..1.0,
    ) {
        let p = LinkParams { chi, eta, g, cutoff: 8 };
        let gamma = Complex64::from_polar(r, th);
        let rho = link_output_state(p, gamma, DisplacementGains { lambda_a: la, lambda_b: lb }).unwrap();
        let t = rho.trace();
        prop_assert!(t > 0.0);
        prop_assert!(rho.hermiticity_defect() < 1e-10 * t.max(1e-300) + 1e-15);
        prop_assert!(rho.eigenvalues().iter().all(|&l| l >= -1e-9 * t));
        check_physical(&cm_of_density(&rho)).unwrap();
    }

    #[test]
    fn outcome_density_depends_on_modulus_only(
        chi in 0.05f64..0.4, eta in 0.001f64..1.0, g in 1.0f64..20.0, r in 0.0f64..2.0, th in 0.0f64..6.3,
    ) {
        let src = TwoLinkSource::new(LinkParams { chi, eta, g, cutoff: 8 }).unwrap();
        let fam = TwoLinkFamily { source: &src, gains: None };
        let a = fam.outcome_density(&GridNode::new(Complex64::new(r, 0.0), 1.0, 8, 1)).unwrap();
        let b = fam.outcome_density(&GridNode::new(Complex64::from_polar(r, th), 1.0, 8, 1)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn dual_homodyne_completeness(chi in 0.05f64..0.4, eta in 0.001f64..1.0, g in 1.0f64..10.0) {
        let src = TwoLinkSource::new(LinkParams { chi, eta, g, cutoff: 10 }).unwrap();
        let fam = TwoLinkFamily { source: &src, gains: None };
        let rule = radial_disk_rule(40, 6.0);
        let mut total = 0.0;
        for (&r, &w) in rule.nodes.iter().zip(&rule.weights) {
            total += w * fam.outcome_density(&GridNode::new(Complex64::new(r, 0.0), 0.0, 10, 1)).unwrap();
        }
        let want = src.link_norm_sqr * src.link_norm_sqr;
        prop_assert!((total - want).abs() <= 1e-4 * want, "{} vs {}", total, want);
    }

    #[test]
    fn lossless_pure_swap_stays_pure(chi in 0.05f64..0.4, r in 0.0f64..1.0, th in 0.0f64..6.3) {
        let p = LinkParams { chi, eta: 1.0, g: 1.0, cutoff: 12 };
        let rho = link_output_state(p, Complex64::from_polar(r, th), DisplacementGains { lambda_a: 1.0, lambda_b: 1.0 }).unwrap();
        prop_assert!((rho.normalized().unwrap().purity() - 1.0).abs() <= 1e-5);
    }

    #[test]
    fn ps_probability_monotone(chi in 0.1f64..0.4, eta in 0.001f64..0.5, g in 1.0f64..30.0) {
        let src = TwoLinkSource::new(LinkParams { chi, eta, g, cutoff: 8 }).unwrap();
        let fam = TwoLinkFamily { source: &src, gains: None };
        let mut prev = 0.0;
        for gm in [0.0, 0.1, 0.4, 1.0, 2.5] {
            let grid = PostSelectionGrid::new(PostSelectionRule::new(gm).unwrap(), QuadratureConfig::default(), 8, 1, true);
            let v = ps_probability(&fam, &grid).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v >= prev);
            prev = v;
        }
    }
}
