//! Gaussian figures of merit computed from two-mode covariance matrices:
//! symplectic spectra, mutual information, Holevo bound (reverse
//! reconciliation), raw key, entanglement of formation and the
//! direct-transmission baselines.
//!
//! Everything here is Gaussian-CM based: for the slightly non-Gaussian
//! repeater outputs the key rates are the extremality estimates, not exact
//! non-Gaussian rates.

use alloc::vec;

use num_traits::Float;

use crate::error::{check_range, Error, Result};
use crate::linalg::{block, det2, det4, Mat4};
use crate::optim::{nelder_mead_restarts, scan_then_brent, NelderMeadOptions};

/// Slack allowed below 1 for symplectic eigenvalues.
pub const PHYSICALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Homodyne,
    Heterodyne,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateInputs {
    pub beta: f64,
    pub protocol: Protocol,
}

impl Default for KeyRateInputs {
    fn default() -> Self {
        Self {
            beta: 0.95,
            protocol: Protocol::Homodyne,
        }
    }
}

/// Two-mode covariance matrix (shot-noise units, ordering `xA pA xB pB`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrixTM {
    /// Local invariant `sqrt(det A)`.
    pub a: f64,
    /// Local invariant `sqrt(det B)`.
    pub b: f64,
    /// `sqrt(|det C|)`; equals the standard-form `c` when `|c1| = |c2|`.
    pub c: f64,
    pub full: Mat4,
    pub means: [f64; 4],
}

impl CovarianceMatrixTM {
    pub fn from_full(full: Mat4, means: [f64; 4]) -> Self {
        let mut f = full;
        for i in 0..4 {
            for j in 0..i {
                let s = 0.5 * (f[i][j] + f[j][i]);
                f[i][j] = s;
                f[j][i] = s;
            }
        }
        let da = det2(block(&f, 0, 0));
        let db = det2(block(&f, 1, 1));
        let dc = det2(block(&f, 0, 1));
        Self {
            a: da.max(0.0).sqrt(),
            b: db.max(0.0).sqrt(),
            c: dc.abs().sqrt(),
            full: f,
            means,
        }
    }

    /// `[[a I, c Z], [c Z, b I]]` with zero means.
    pub fn standard(a: f64, b: f64, c: f64) -> Self {
        let full = [
            [a, 0.0, c, 0.0],
            [0.0, a, 0.0, -c],
            [c, 0.0, b, 0.0],
            [0.0, -c, 0.0, b],
        ];
        Self::from_full(full, [0.0; 4])
    }

    pub fn det_a(&self) -> f64 {
        det2(block(&self.full, 0, 0))
    }

    pub fn det_b(&self) -> f64 {
        det2(block(&self.full, 1, 1))
    }

    pub fn det_c(&self) -> f64 {
        det2(block(&self.full, 0, 1))
    }

    pub fn det(&self) -> f64 {
        match self.quadrature_blocks() {
            Some((x, p)) => det2(x) * det2(p),
            None => det4(&self.full),
        }
    }

    /// The `x` and `p` blocks `[[V_xAxA, V_xAxB], [V_xBxA, V_xBxB]]` when the
    /// two quadratures do not mix.
    fn quadrature_blocks(&self) -> Option<([[f64; 2]; 2], [[f64; 2]; 2])> {
        let f = &self.full;
        if f[0][1] != 0.0 || f[0][3] != 0.0 || f[1][2] != 0.0 || f[2][3] != 0.0 {
            return None;
        }
        Some(([[f[0][0], f[0][2]], [f[2][0], f[2][2]]], [[f[1][1], f[1][3]], [f[3][1], f[3][3]]]))
    }

    /// `c^2` entering the key-rate formulas.
    pub fn c2(&self) -> f64 {
        self.det_c().abs()
    }

    /// Standard-form correlations `(c1, c2)` with `c1 >= |c2|`, `c1 c2 = det C`.
    pub fn standard_correlations(&self) -> (f64, f64) {
        let ab = self.a * self.b;
        let k = self.det_c();
        if ab <= 0.0 {
            return (0.0, 0.0);
        }
        let f = &self.full;
        if self.quadrature_blocks().is_some() && f[0][0] == f[1][1] && f[2][2] == f[3][3] {
            let (x, p) = (f[0][2], f[1][3]);
            return if x.abs() >= p.abs() { (x.abs(), p * x.signum()) } else { (p.abs(), x * p.signum()) };
        }
        let s = ((ab * ab + k * k - self.det()) / ab).max(0.0);
        let d = (s * s - 4.0 * k * k).max(0.0).sqrt();
        let c1 = (0.5 * (s + d)).sqrt();
        let c2_abs = (0.5 * (s - d)).max(0.0).sqrt();
        (c1, if k < 0.0 { -c2_abs } else { c2_abs })
    }
}

fn sym_eigs(delta: f64, det: f64) -> Result<(f64, f64)> {
    let disc = delta * delta - 4.0 * det;
    if disc < -1e-9 * (1.0 + delta * delta) {
        return Err(Error::Unphysical("negative symplectic discriminant"));
    }
    let s = disc.max(0.0).sqrt();
    let hi = 0.5 * (delta + s);
    // product of the roots is det; avoids cancelling delta against s
    let lo = if hi > 0.0 { det / hi } else { 0.5 * (delta - s) };
    if lo < -1e-12 {
        return Err(Error::Unphysical("negative symplectic eigenvalue squared"));
    }
    Ok((hi.max(0.0).sqrt(), lo.max(0.0).sqrt()))
}

/// Symplectic eigenvalues `(nu1 >= nu2)`.
pub fn symplectic_eigs(v: &CovarianceMatrixTM) -> Result<(f64, f64)> {
    sym_eigs(v.det_a() + v.det_b() + 2.0 * v.det_c(), v.det())
}

/// Symplectic eigenvalues of the partial transpose `(hi, lo)`.
pub fn pt_symplectic_eigs(v: &CovarianceMatrixTM) -> Result<(f64, f64)> {
    sym_eigs(v.det_a() + v.det_b() - 2.0 * v.det_c(), v.det())
}

/// Fails unless both symplectic eigenvalues are `>= 1 - PHYSICALITY_TOL`.
pub fn check_physical(v: &CovarianceMatrixTM) -> Result<(f64, f64)> {
    let (n1, n2) = symplectic_eigs(v)?;
    if !(n2 >= 1.0 - PHYSICALITY_TOL) || v.a < 1.0 - PHYSICALITY_TOL || v.b < 1.0 - PHYSICALITY_TOL
    {
        return Err(Error::Unphysical("symplectic eigenvalue below 1"));
    }
    Ok((n1, n2))
}

/// `G(x) = (1+x) log2(1+x) - x log2 x`, `G(0) = 0`.
pub fn entropy_g(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (1.0 + x) * (1.0 + x).log2() - x * x.log2()
}

/// Alice–Bob mutual information (bits).
pub fn mutual_info(v: &CovarianceMatrixTM, protocol: Protocol) -> f64 {
    let (a, b, c2) = (v.a, v.b, v.c2());
    if c2 == 0.0 {
        return 0.0;
    }
    match protocol {
        Protocol::Heterodyne => ((1.0 + a) / (1.0 + a - c2 / (1.0 + b))).log2(),
        Protocol::Homodyne => 0.5 * (a / (a - c2 / b)).log2(),
    }
}

/// Conditional symplectic eigenvalue of Alice given Bob's measurement.
pub fn conditional_eig(v: &CovarianceMatrixTM, protocol: Protocol) -> f64 {
    let (a, b, c2) = (v.a, v.b, v.c2());
    match protocol {
        Protocol::Heterodyne => a - c2 / (1.0 + b),
        Protocol::Homodyne => (a * (a - c2 / b)).max(0.0).sqrt(),
    }
}

/// Holevo information between Bob and Eve under reverse reconciliation.
pub fn holevo_reverse(v: &CovarianceMatrixTM, protocol: Protocol) -> Result<f64> {
    let (n1, n2) = symplectic_eigs(v)?;
    let n3 = conditional_eig(v, protocol);
    let g = |nu: f64| entropy_g(((nu - 1.0) / 2.0).max(0.0));
    Ok(g(n1) + g(n2) - g(n3))
}

/// `beta I_AB - I_BE` without the clamp at zero.
pub fn raw_key_unclamped(v: &CovarianceMatrixTM, inputs: &KeyRateInputs) -> Result<f64> {
    Ok(inputs.beta * mutual_info(v, inputs.protocol) - holevo_reverse(v, inputs.protocol)?)
}

/// `max(0, beta I_AB - I_BE)`.
pub fn raw_key(v: &CovarianceMatrixTM, inputs: &KeyRateInputs) -> Result<f64> {
    Ok(raw_key_unclamped(v, inputs)?.max(0.0))
}

/// Pure-state local variance `cosh 2r` of the optimal decomposition for the
/// class `[[a I, c Z], [c Z, b I]]`.
fn invariant_class_cosh(a: f64, b: f64, c: f64) -> f64 {
    let k = a * b - c * c + 1.0;
    let big_a = a + b;
    let big_b = 2.0 * c;
    let disc = (k * k - big_a * big_a + big_b * big_b).max(0.0);
    // (k - sqrt(disc)) / (A - B), rationalized: pure-loss states sit at
    // disc = 0 where the unrationalized form loses half the digits
    let u = (big_a + big_b) / (k + disc.sqrt());
    if !(u > 0.0) {
        return 1.0;
    }
    (0.5 * (u + 1.0 / u)).max(1.0)
}

fn eof_from_cosh(cosh2r: f64) -> f64 {
    entropy_g(((cosh2r - 1.0) / 2.0).max(0.0))
}

/// Entanglement of formation (ebits) of the Gaussian state with this CM.
///
/// Uses the closed form when the standard form has `c1 = -c2` and a
/// minimization over pure Gaussian states with local squeezing otherwise.
pub fn eof_gaussian(v: &CovarianceMatrixTM) -> Result<f64> {
    check_physical(v)?;
    let (_, pt_lo) = pt_symplectic_eigs(v)?;
    if pt_lo >= 1.0 {
        return Ok(0.0);
    }
    let (c1, c2) = v.standard_correlations();
    if (c1 + c2).abs() <= 1e-6 * (1.0 + c1) {
        return Ok(eof_from_cosh(invariant_class_cosh(v.a, v.b, v.c)));
    }
    Ok(eof_from_cosh(eof_general_cosh(v.a, v.b, c1, c2)))
}

/// Numeric route: smallest `cosh 2r` of a pure state
/// `S_A(sA) S_B(sB) TMSV(r)` lying below the standard-form CM.
pub fn eof_general_cosh(a: f64, b: f64, c1: f64, c2: f64) -> f64 {
    let objective = |s: &[f64]| -> f64 {
        match min_feasible_r(a, b, c1, c2, s[0], s[1]) {
            Some(r) => r,
            None => 1e3,
        }
    };
    let opts = NelderMeadOptions {
        max_evals: 600,
        f_tol: 1e-14,
        x_tol: 1e-9,
        initial_step: 0.05,
    };
    let starts = vec![vec![0.0, 0.0], vec![0.3, -0.3], vec![-0.3, 0.3], vec![0.5, 0.5]];
    let m = nelder_mead_restarts(objective, &starts, &[-3.0, -3.0], &[3.0, 3.0], &opts);
    if m.f >= 1e3 {
        return invariant_class_cosh(a, b, c1.abs().min(c2.abs()));
    }
    (2.0 * m.f).cosh()
}

fn psd2(p: f64, q: f64, off: f64) -> f64 {
    // smallest eigenvalue of [[p, off], [off, q]]
    let m = 0.5 * (p + q);
    let d = (0.25 * (p - q) * (p - q) + off * off).sqrt();
    m - d
}

fn feasibility(a: f64, b: f64, c1: f64, c2: f64, sa: f64, sb: f64, r: f64) -> f64 {
    let (ch, sh) = ((2.0 * r).cosh(), (2.0 * r).sinh());
    let (u, v, w) = ((2.0 * sa).exp(), (2.0 * sb).exp(), (sa + sb).exp());
    let x = psd2(a - ch * u, b - ch * v, c1 - sh * w);
    let p = psd2(a - ch / u, b - ch / v, c2 + sh / w);
    x.min(p)
}

fn min_feasible_r(a: f64, b: f64, c1: f64, c2: f64, sa: f64, sb: f64) -> Option<f64> {
    let (u, v) = ((2.0 * sa).exp(), (2.0 * sb).exp());
    let cap = (a / u).min(b / v).min(a * u).min(b * v);
    if cap < 1.0 {
        return None;
    }
    let r_hi = 0.5 * cap.acosh();
    let steps = 400;
    let f = |r: f64| feasibility(a, b, c1, c2, sa, sb, r);
    if f(0.0) >= 0.0 {
        return Some(0.0);
    }
    let mut prev = 0.0;
    for k in 1..=steps {
        let r = r_hi * k as f64 / steps as f64;
        if f(r) >= 0.0 {
            let (mut lo, mut hi) = (prev, r);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if f(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        prev = r;
    }
    None
}

/// Repeaterless secret-key capacity `-log2(1 - eta)`.
pub fn plob(eta: f64) -> Result<f64> {
    check_range("eta", eta, eta > 0.0 && eta < 1.0, "(0, 1)")?;
    Ok(-(-eta).ln_1p() / core::f64::consts::LN_2)
}

/// CM of a TMSV whose second arm crossed a pure-loss channel.
pub fn lossy_tmsv_cm(chi: f64, eta: f64) -> CovarianceMatrixTM {
    let a = (1.0 + chi * chi) / (1.0 - chi * chi);
    let c = eta.sqrt() * 2.0 * chi / (1.0 - chi * chi);
    CovarianceMatrixTM::standard(a, 1.0 + eta * (a - 1.0), c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectKey {
    pub chi: f64,
    pub key: f64,
    /// True when the optimum sits on the upper edge of the search window.
    pub at_bound: bool,
}

/// Upper edge of the squeezing window for the direct-transmission search.
pub const DIRECT_CHI_MAX: f64 = 0.9999;

/// Homodyne reverse-reconciliation key of direct transmission with the
/// squeezing optimized.
pub fn direct_transmission_key(eta: f64, beta: f64) -> Result<DirectKey> {
    check_range("eta", eta, eta > 0.0 && eta <= 1.0, "(0, 1]")?;
    let inputs = KeyRateInputs {
        beta,
        protocol: Protocol::Homodyne,
    };
    let key = |chi: f64| raw_key_unclamped(&lossy_tmsv_cm(chi, eta), &inputs).unwrap_or(-1e9);
    let m = scan_then_brent(|x| -key(x), 1e-4, DIRECT_CHI_MAX, 200, 1e-10);
    let chi = m.x[0];
    Ok(DirectKey {
        chi,
        key: (-m.f).max(0.0),
        at_bound: DIRECT_CHI_MAX - chi < 1e-3,
    })
}

/// EOF of a TMSV with parameter `chi` after loss `eta`.
///
/// Same value as [`eof_gaussian`] on [`lossy_tmsv_cm`], but evaluated in
/// terms of `t = a - 1` so that it stays accurate as `chi -> 1`: these
/// states have a vanishing discriminant in the closed form, which the
/// generic route only resolves to about the square root of machine
/// precision times the squeezing.
pub fn lossy_tmsv_eof(chi: f64, eta: f64) -> Result<f64> {
    check_range("chi", chi, (0.0..1.0).contains(&chi), "[0, 1)")?;
    check_range("eta", eta, (0.0..=1.0).contains(&eta), "[0, 1]")?;
    let t = 2.0 * chi * chi / ((1.0 - chi) * (1.0 + chi));
    let k = (1.0 - eta) * t + 2.0;
    let u = (2.0 + (1.0 + eta) * t + 2.0 * (eta * t * (t + 2.0)).sqrt()) / k;
    Ok(eof_from_cosh((0.5 * (u + 1.0 / u)).max(1.0)))
}

/// Squeezing parameters `1 - chi` used for the infinite-squeezing limit.
pub const INFINITE_SQUEEZING_STEPS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];

/// EOF of an infinitely squeezed TMSV sent through loss `eta`.
///
/// The values at `1 - chi` in [`INFINITE_SQUEEZING_STEPS`] are a power series
/// in `1 - chi`; two rounds of Richardson elimination (ratio 10) remove the
/// linear and quadratic terms, and the two resulting estimates must agree
/// to `1e-4` ebits.
pub fn direct_eof_infinite_squeezing(eta: f64) -> Result<f64> {
    check_range("eta", eta, eta > 0.0 && eta < 1.0, "(0, 1)")?;
    let mut vals = [0.0; 4];
    for (v, eps) in vals.iter_mut().zip(INFINITE_SQUEEZING_STEPS) {
        *v = lossy_tmsv_eof(1.0 - eps, eta)?;
    }
    let first: [f64; 3] = core::array::from_fn(|i| vals[i + 1] + (vals[i + 1] - vals[i]) / 9.0);
    let second: [f64; 2] = core::array::from_fn(|i| first[i + 1] + (first[i + 1] - first[i]) / 99.0);
    let residual = (second[1] - second[0]).abs();
    if !(residual < 1e-4) {
        return Err(Error::Extrapolation { residual });
    }
    Ok(second[1].max(0.0))
}
