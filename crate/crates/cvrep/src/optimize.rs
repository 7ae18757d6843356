//! Per-point parameter searches: `(chi, g)` for key rates, `g` for EOF.

use serde::Serialize;

use cvrep_core::metrics::eof_gaussian;
use cvrep_core::optim::{nelder_mead, scan_then_brent, NelderMeadOptions};
use cvrep_core::scissor::p_nla;
use cvrep_core::swap::chain::{chain_evaluate_with, gamma_zero_cm, ChainConfig, ChainReport, GridSet};
use cvrep_core::swap::LinkParams;

use crate::config::OptimizerSettings;
use crate::error::{RunError, RunResult};

/// Starting points as fractions of the `(chi, ln g)` box, tried in order
/// until one converges away from the box faces.
pub const START_SCHEDULE: [(f64, f64); 3] = [(0.35, 0.5), (0.35, 0.85), (0.6, 0.2)];

/// Objective minimized by the key search: `-ln(SKR)` when there is key,
/// otherwise a penalty above any such value that still points towards
/// positive raw key.
pub fn key_objective(r: &ChainReport) -> f64 {
    if r.secret_key_rate > 0.0 {
        -r.secret_key_rate.ln()
    } else {
        1e3 - r.raw_key_unclamped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartTrace {
    pub chi0: f64,
    pub g0: f64,
    pub chi: f64,
    pub g: f64,
    pub objective: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyOptimum {
    pub chi: f64,
    pub g: f64,
    pub report: ChainReport,
    pub evals: usize,
    pub converged: bool,
    /// Evaluations that returned an error (treated as infeasible).
    pub failures: usize,
    pub starts: Vec<StartTrace>,
}

impl KeyOptimum {
    /// The optimizer sits on the upper squeezing bound.
    pub fn chi_at_bound(&self, s: &OptimizerSettings) -> bool {
        s.chi_max - self.chi < 1e-3
    }

    pub fn trace_json(&self) -> serde_json::Value {
        serde_json::json!({
            "chi": self.chi,
            "g": self.g,
            "evals": self.evals,
            "failures": self.failures,
            "converged": self.converged,
            "starts": self.starts,
        })
    }
}

/// Maximizes the secret key rate of `base` over `chi` (unless fixed) and
/// `g in [g_min, g_max]`.
pub fn optimize_key(
    base: &ChainConfig,
    grids: &GridSet,
    s: &OptimizerSettings,
    g_max: f64,
    fixed_chi: Option<f64>,
) -> RunResult<KeyOptimum> {
    let mut cfg = base.clone();
    let mut failures = 0usize;
    let lg = (s.g_min.ln(), g_max.ln());
    let mut eval = |chi: f64, ln_g: f64| -> f64 {
        cfg.chi = chi;
        cfg.g = ln_g.exp().clamp(s.g_min, g_max);
        match chain_evaluate_with(&cfg, grids) {
            Ok(r) => key_objective(&r),
            Err(_) => {
                failures += 1;
                f64::INFINITY
            }
        }
    };
    let mut starts = Vec::new();
    let (chi, ln_g, evals, converged) = match fixed_chi {
        Some(chi) => {
            let m = scan_then_brent(|x| eval(chi, x), lg.0, lg.1, 12, 1e-6);
            starts.push(StartTrace {
                chi0: chi,
                g0: lg.0.exp(),
                chi,
                g: m.x[0].exp(),
                objective: m.f,
                evals: m.evals,
                converged: m.converged,
            });
            (chi, m.x[0], m.evals, m.converged)
        }
        None => {
            let lo = [s.chi_min, lg.0];
            let hi = [s.chi_max, lg.1];
            let opts = NelderMeadOptions {
                max_evals: s.max_evals,
                f_tol: s.f_tol,
                x_tol: s.x_tol,
                initial_step: 0.1,
            };
            let mut total = 0;
            let mut best: Option<(f64, f64, f64, bool)> = None;
            for (fc, fg) in START_SCHEDULE {
                let x0 = [lo[0] + fc * (hi[0] - lo[0]), lo[1] + fg * (hi[1] - lo[1])];
                let m = nelder_mead(|x| eval(x[0], x[1]), &x0, &lo, &hi, &opts);
                total += m.evals;
                starts.push(StartTrace {
                    chi0: x0[0],
                    g0: x0[1].exp(),
                    chi: m.x[0],
                    g: m.x[1].exp(),
                    objective: m.f,
                    evals: m.evals,
                    converged: m.converged,
                });
                if best.map_or(true, |b| m.f < b.2) {
                    best = Some((m.x[0], m.x[1], m.f, m.converged));
                }
                let interior = m.x.iter().zip(lo.iter().zip(&hi)).all(|(x, (l, h))| {
                    let pad = 1e-3 * (h - l);
                    *x > l + pad && *x < h - pad
                });
                if m.converged && m.f.is_finite() && interior {
                    break;
                }
            }
            let (c, l, _, conv) = best.expect("non-empty schedule");
            (c, l, total, conv)
        }
    };
    let mut cfg = base.clone();
    cfg.chi = chi;
    cfg.g = ln_g.exp().clamp(s.g_min, g_max);
    let report = chain_evaluate_with(&cfg, grids).map_err(|e| {
        RunError::Convergence(format!(
            "no feasible point at {} km (best chi={chi}, g={}): {e}",
            base.total_distance_km, cfg.g
        ))
    })?;
    Ok(KeyOptimum {
        chi,
        g: cfg.g,
        report,
        evals,
        converged,
        failures,
        starts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EofOptimum {
    pub g: f64,
    pub eof: f64,
    pub p_nla: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Largest `gamma = 0` chain EOF over `g in [g_min, g_max]` at fixed `chi`.
pub fn optimize_eof_gain(
    link: LinkParams,
    n_levels: u32,
    g_min: f64,
    g_max: f64,
) -> RunResult<EofOptimum> {
    let eof_at = |g: f64| -> cvrep_core::Result<f64> {
        let p = LinkParams { g, ..link };
        eof_gaussian(&gamma_zero_cm(p, n_levels)?)
    };
    let mut err = None;
    let m = scan_then_brent(
        |g| match eof_at(g) {
            Ok(e) => -e,
            Err(e) => {
                err.get_or_insert(e);
                f64::INFINITY
            }
        },
        g_min,
        g_max,
        17,
        1e-8,
    );
    if let Some(e) = err {
        return Err(e.into());
    }
    let g = m.x[0];
    Ok(EofOptimum {
        g,
        eof: -m.f,
        p_nla: p_nla(link.chi, link.eta, g)?,
        evals: m.evals,
        converged: m.converged,
    })
}
