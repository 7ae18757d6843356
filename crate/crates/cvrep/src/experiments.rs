//! Experiment drivers. Each one evaluates independent points (in parallel
//! when asked), then assembles a [`Table`] in input order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use cvrep_core::channel::{transmissivity, FiberChannel};
use cvrep_core::metrics::{
    direct_eof_infinite_squeezing, direct_transmission_key, plob, symplectic_eigs, DirectKey,
};
use cvrep_core::rates::{z_steps, z_steps_expectation};
use cvrep_core::swap::chain::{chain_evaluate_with, ChainReport, GridSet};
use cvrep_core::swap::LinkParams;

use crate::config::{BoundName, ExperimentConfig, ExperimentKind};
use crate::error::{RunError, RunResult};
use crate::optimize::{optimize_eof_gain, optimize_key, EofOptimum, KeyOptimum};
use crate::output::{col, Check, Column, Table, Value};

/// Runs `f` over `items` on `workers` threads, keeping input order. The
/// first error in input order wins.
pub fn par_map<T, R, F>(workers: usize, items: &[T], f: F) -> RunResult<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> RunResult<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect::<Vec<_>>())
        .into_iter()
        .collect()
}

pub fn total_eta(cfg: &ExperimentConfig, distance_km: f64) -> RunResult<f64> {
    Ok(transmissivity(&FiberChannel {
        length_km: distance_km,
        attenuation_db_per_km: cfg.attenuation_db_per_km,
    })?)
}

// ---------------------------------------------------------------- EOF

#[derive(Debug, Clone, PartialEq)]
pub struct EofPoint {
    pub distance_km: f64,
    pub gain_max: f64,
    pub eta_link: f64,
    pub opt: EofOptimum,
    /// EOF of an infinitely squeezed TMSV over the whole distance.
    pub direct_inf: f64,
}

pub fn eof_points(cfg: &ExperimentConfig) -> RunResult<Vec<EofPoint>> {
    let mut items = Vec::new();
    for &d in &cfg.distances_km {
        for &g in &cfg.gain_max {
            items.push((d, g));
        }
    }
    let chi = cfg.chi.expect("eof experiments fix chi");
    par_map(cfg.workers, &items, |&(d, gmax)| {
        let chain = cfg.chain(d, BoundName::Upper);
        let link = LinkParams {
            chi,
            eta: chain.eta_link()?,
            g: gmax,
            cutoff: cfg.cutoff,
        };
        let opt = optimize_eof_gain(link, cfg.levels(), cfg.optimizer.g_min, gmax)?;
        Ok(EofPoint {
            distance_km: d,
            gain_max: gmax,
            eta_link: link.eta,
            opt,
            direct_inf: direct_eof_infinite_squeezing(total_eta(cfg, d)?)?,
        })
    })
}

fn eof_table(cfg: &ExperimentConfig, pts: &[EofPoint]) -> Table {
    let mut t = Table::new(vec![
        col("distance_km", "km", Check::NonNegative),
        col("n_links", "1", Check::NonNegative),
        col("chi", "1", Check::Probability),
        col("gain_max", "1", Check::NonNegative),
        col("g", "1", Check::NonNegative),
        col("eta_link", "1", Check::Probability),
        col("p_nla", "1", Check::Probability),
        col("eof", "ebit", Check::NonNegative),
        col("eof_direct_inf", "ebit", Check::NonNegative),
        col("eof_advantage", "ebit", Check::Finite),
        col("converged", "bool", Check::NonNegative),
    ]);
    for (i, p) in pts.iter().enumerate() {
        t.rows.push(vec![
            p.distance_km.into(),
            cfg.links.into(),
            cfg.chi.unwrap_or_default().into(),
            p.gain_max.into(),
            p.opt.g.into(),
            p.eta_link.into(),
            p.opt.p_nla.into(),
            p.opt.eof.into(),
            p.direct_inf.into(),
            (p.opt.eof - p.direct_inf).into(),
            p.opt.converged.into(),
        ]);
        t.diagnostics.push(json!({ "row": i, "gain_search": p.opt }));
        if !p.opt.converged {
            t.unconverged.push(i);
        }
    }
    t
}

// ---------------------------------------------------------------- key rates

#[derive(Debug, Clone, PartialEq)]
pub struct KeyPoint {
    pub distance_km: f64,
    pub gamma_max: Vec<f64>,
    pub bound: BoundName,
    pub opt: KeyOptimum,
    pub plob: f64,
    pub direct: DirectKey,
}

impl KeyPoint {
    pub fn skr(&self) -> f64 {
        self.opt.report.secret_key_rate
    }
}

fn key_point(
    cfg: &ExperimentConfig,
    grids: &GridSet,
    gamma_max: &[f64],
    d: f64,
    bound: BoundName,
) -> RunResult<KeyPoint> {
    let mut chain = cfg.chain(d, bound);
    chain.gamma_max = gamma_max.to_vec();
    let opt = optimize_key(&chain, grids, &cfg.optimizer, cfg.gain_max[0], cfg.chi)?;
    let eta = total_eta(cfg, d)?;
    Ok(KeyPoint {
        distance_km: d,
        gamma_max: gamma_max.to_vec(),
        bound,
        opt,
        plob: plob(eta)?,
        direct: direct_transmission_key(eta, cfg.beta)?,
    })
}

/// Optimized key rate at every distance for one bound mode.
pub fn key_points(cfg: &ExperimentConfig, bound: BoundName) -> RunResult<Vec<KeyPoint>> {
    let template = cfg.chain(cfg.distances_km[0], bound);
    template.validate()?;
    let grids = GridSet::for_config(&template);
    par_map(cfg.workers, &cfg.distances_km, |&d| {
        key_point(cfg, &grids, &cfg.gamma_max, d, bound)
    })
}

/// Like [`key_points`], additionally choosing the best base-round radius
/// from `cfg.gamma_scan` (two-link chains only).
pub fn optimize_points(cfg: &ExperimentConfig) -> RunResult<Vec<KeyPoint>> {
    if cfg.gamma_scan.is_empty() {
        return key_points(cfg, cfg.bound);
    }
    if cfg.links != 2 {
        return Err(RunError::Config("gamma_scan needs a two-link chain".into()));
    }
    let grids: Vec<(Vec<f64>, GridSet)> = cfg
        .gamma_scan
        .iter()
        .map(|&g| {
            let mut c = cfg.chain(cfg.distances_km[0], cfg.bound);
            c.gamma_max = vec![g];
            (vec![g], GridSet::for_config(&c))
        })
        .collect();
    par_map(cfg.workers, &cfg.distances_km, |&d| {
        let mut best: Option<KeyPoint> = None;
        for (gm, gs) in &grids {
            let p = key_point(cfg, gs, gm, d, cfg.bound)?;
            if best.as_ref().map_or(true, |b| p.skr() > b.skr()) {
                best = Some(p);
            }
        }
        Ok(best.expect("non-empty scan"))
    })
}

fn report_columns(levels: usize) -> Vec<Column> {
    let mut c = vec![
        col("chi", "1", Check::Probability),
        col("g", "1", Check::NonNegative),
    ];
    for i in 0..levels {
        c.push(col(format!("gamma_max_l{i}"), "1", Check::NonNegative));
    }
    for i in 0..levels {
        c.push(col(format!("lambda_a_l{i}"), "1", Check::Finite));
        c.push(col(format!("lambda_b_l{i}"), "1", Check::Finite));
    }
    c.extend([
        col("eta_link", "1", Check::Probability),
        col("p_nla", "1", Check::Probability),
    ]);
    for i in 0..levels {
        c.push(col(format!("p_ps_l{i}"), "1", Check::Probability));
    }
    c.extend([
        col("r_rep", "1/cycle", Check::Probability),
        col("i_ab", "bit/use", Check::NonNegative),
        col("i_be", "bit/use", Check::NonNegative),
        col("raw_key_unclamped", "bit/use", Check::Finite),
        col("raw_key", "bit/use", Check::NonNegative),
        col("skr", "bit/use", Check::NonNegative),
        col("eof", "ebit", Check::NonNegative),
        col("cm_a", "SNU", Check::Symplectic),
        col("cm_b", "SNU", Check::Symplectic),
        col("cm_c", "SNU", Check::NonNegative),
        col("nu_1", "SNU", Check::Symplectic),
        col("nu_2", "SNU", Check::Symplectic),
    ]);
    c
}

fn report_cells(chi: f64, g: f64, gamma_max: &[f64], r: &ChainReport) -> RunResult<Vec<Value>> {
    let mut v: Vec<Value> = vec![chi.into(), g.into()];
    v.extend(gamma_max.iter().map(|&x| Value::F(x)));
    for gains in &r.gains {
        v.push(gains.lambda_a.into());
        v.push(gains.lambda_b.into());
    }
    v.extend([r.eta_link.into(), r.p_nla.into()]);
    v.extend(r.p_ps.iter().map(|&x| Value::F(x)));
    let (nu1, nu2) = symplectic_eigs(&r.cm)?;
    v.extend([
        r.r_rep.into(),
        r.i_ab.into(),
        r.i_be.into(),
        r.raw_key_unclamped.into(),
        r.raw_key.into(),
        r.secret_key_rate.into(),
        r.eof.into(),
        r.cm.a.into(),
        r.cm.b.into(),
        r.cm.c.into(),
        nu1.into(),
        nu2.into(),
    ]);
    Ok(v)
}

fn key_table(cfg: &ExperimentConfig, pts: &[KeyPoint]) -> RunResult<Table> {
    let levels = cfg.levels() as usize;
    let mut cols = vec![
        col("distance_km", "km", Check::NonNegative),
        col("n_links", "1", Check::NonNegative),
        col("bound", "-", Check::Text),
        col("protocol", "-", Check::Text),
    ];
    cols.extend(report_columns(levels));
    cols.extend([
        col("plob", "bit/use", Check::NonNegative),
        col("skr_over_plob", "1", Check::NonNegative),
        col("direct_key", "bit/use", Check::NonNegative),
        col("direct_chi", "1", Check::Probability),
        col("evals", "1", Check::NonNegative),
        col("failed_evals", "1", Check::NonNegative),
        col("chi_at_bound", "bool", Check::NonNegative),
        col("converged", "bool", Check::NonNegative),
    ]);
    let mut t = Table::new(cols);
    for (i, p) in pts.iter().enumerate() {
        let mut row: Vec<Value> = vec![
            p.distance_km.into(),
            cfg.links.into(),
            p.bound.name().into(),
            match cfg.protocol {
                crate::config::ProtocolName::Hom => "hom".into(),
                crate::config::ProtocolName::Het => "het".into(),
            },
        ];
        row.extend(report_cells(p.opt.chi, p.opt.g, &p.gamma_max, &p.opt.report)?);
        row.extend([
            p.plob.into(),
            (p.skr() / p.plob).into(),
            p.direct.key.into(),
            p.direct.chi.into(),
            p.opt.evals.into(),
            p.opt.failures.into(),
            p.opt.chi_at_bound(&cfg.optimizer).into(),
            p.opt.converged.into(),
        ]);
        t.rows.push(row);
        t.diagnostics.push(json!({ "row": i, "optimizer": p.opt.trace_json() }));
        if !p.opt.converged {
            t.unconverged.push(i);
        }
    }
    Ok(t)
}

// ---------------------------------------------------------------- bounds

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsPoint {
    pub distance_km: f64,
    /// Independently optimized rate per mode.
    pub optimized: Vec<(BoundName, KeyOptimum)>,
    /// Reference parameters: the optimum of the tightest available mode.
    pub ref_chi: f64,
    pub ref_g: f64,
    /// Every mode evaluated at the reference parameters.
    pub at_ref: Vec<(BoundName, ChainReport)>,
    pub plob: f64,
}

impl BoundsPoint {
    pub fn optimized_skr(&self, b: BoundName) -> Option<f64> {
        self.optimized
            .iter()
            .find(|(m, _)| *m == b)
            .map(|(_, o)| o.report.secret_key_rate)
    }

    pub fn skr_at_ref(&self, b: BoundName) -> Option<f64> {
        self.at_ref
            .iter()
            .find(|(m, _)| *m == b)
            .map(|(_, r)| r.secret_key_rate)
    }
}

pub fn bound_modes(links: u32) -> Vec<BoundName> {
    if links == 2 {
        vec![BoundName::Lower, BoundName::Numeric, BoundName::Upper]
    } else {
        vec![BoundName::Lower, BoundName::Upper]
    }
}

pub fn bounds_points(cfg: &ExperimentConfig) -> RunResult<Vec<BoundsPoint>> {
    let template = cfg.chain(cfg.distances_km[0], BoundName::Lower);
    template.validate()?;
    let grids = GridSet::for_config(&template);
    let modes = bound_modes(cfg.links);
    let reference = if cfg.links == 2 {
        BoundName::Numeric
    } else {
        BoundName::Lower
    };
    par_map(cfg.workers, &cfg.distances_km, |&d| {
        let mut optimized = Vec::new();
        for &m in &modes {
            let chain = cfg.chain(d, m);
            optimized.push((m, optimize_key(&chain, &grids, &cfg.optimizer, cfg.gain_max[0], cfg.chi)?));
        }
        let best = &optimized.iter().find(|(m, _)| *m == reference).expect("reference mode").1;
        let (ref_chi, ref_g) = (best.chi, best.g);
        let mut at_ref = Vec::new();
        for &m in &modes {
            let mut chain = cfg.chain(d, m);
            chain.chi = ref_chi;
            chain.g = ref_g;
            at_ref.push((m, chain_evaluate_with(&chain, &grids)?));
        }
        Ok(BoundsPoint {
            distance_km: d,
            optimized,
            ref_chi,
            ref_g,
            at_ref,
            plob: plob(total_eta(cfg, d)?)?,
        })
    })
}

fn bounds_table(cfg: &ExperimentConfig, pts: &[BoundsPoint]) -> Table {
    let modes = bound_modes(cfg.links);
    let mut cols = vec![
        col("distance_km", "km", Check::NonNegative),
        col("n_links", "1", Check::NonNegative),
    ];
    for m in &modes {
        cols.push(col(format!("chi_{}", m.name()), "1", Check::Probability));
        cols.push(col(format!("g_{}", m.name()), "1", Check::NonNegative));
        cols.push(col(format!("skr_{}", m.name()), "bit/use", Check::NonNegative));
    }
    cols.push(col("ref_chi", "1", Check::Probability));
    cols.push(col("ref_g", "1", Check::NonNegative));
    for m in &modes {
        cols.push(col(format!("skr_{}_at_ref", m.name()), "bit/use", Check::NonNegative));
    }
    cols.push(col("plob", "bit/use", Check::NonNegative));
    cols.push(col("converged", "bool", Check::NonNegative));
    let mut t = Table::new(cols);
    for (i, p) in pts.iter().enumerate() {
        let mut row: Vec<Value> = vec![p.distance_km.into(), cfg.links.into()];
        for (_, o) in &p.optimized {
            row.extend([o.chi.into(), o.g.into(), o.report.secret_key_rate.into()]);
        }
        row.extend([p.ref_chi.into(), p.ref_g.into()]);
        for (_, r) in &p.at_ref {
            row.push(r.secret_key_rate.into());
        }
        let converged = p.optimized.iter().all(|(_, o)| o.converged);
        row.extend([p.plob.into(), converged.into()]);
        t.rows.push(row);
        let traces: Vec<_> = p
            .optimized
            .iter()
            .map(|(m, o)| json!({ "bound": m.name(), "optimizer": o.trace_json() }))
            .collect();
        t.diagnostics.push(json!({ "row": i, "searches": traces }));
        if !converged {
            t.unconverged.push(i);
        }
    }
    t
}

// ---------------------------------------------------------------- baselines

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselinePoint {
    pub distance_km: f64,
    pub eta: f64,
    pub plob: f64,
    pub direct: DirectKey,
    pub eof_inf: f64,
}

pub fn baseline_points(cfg: &ExperimentConfig) -> RunResult<Vec<BaselinePoint>> {
    par_map(cfg.workers, &cfg.distances_km, |&d| {
        let eta = total_eta(cfg, d)?;
        Ok(BaselinePoint {
            distance_km: d,
            eta,
            plob: plob(eta)?,
            direct: direct_transmission_key(eta, cfg.beta)?,
            eof_inf: direct_eof_infinite_squeezing(eta)?,
        })
    })
}

fn baseline_table(pts: &[BaselinePoint]) -> Table {
    let mut t = Table::new(vec![
        col("distance_km", "km", Check::NonNegative),
        col("eta", "1", Check::Probability),
        col("plob", "bit/use", Check::NonNegative),
        col("direct_key", "bit/use", Check::NonNegative),
        col("direct_chi", "1", Check::Probability),
        col("direct_chi_at_bound", "bool", Check::NonNegative),
        col("eof_direct_inf", "ebit", Check::NonNegative),
    ]);
    for p in pts {
        t.rows.push(vec![
            p.distance_km.into(),
            p.eta.into(),
            p.plob.into(),
            p.direct.key.into(),
            p.direct.chi.into(),
            p.direct.at_bound.into(),
            p.eof_inf.into(),
        ]);
    }
    t
}

// ---------------------------------------------------------------- Z_n

pub const ZNP_LEVELS: [u32; 4] = [0, 1, 2, 3];
pub const ZNP_PROBS: [f64; 4] = [0.01, 0.1, 0.5, 0.9];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZnpPoint {
    pub n: u32,
    pub p: f64,
    pub z: f64,
    pub z_expectation: f64,
    pub z_monte_carlo: f64,
}

impl ZnpPoint {
    pub fn rel_err(&self) -> f64 {
        (self.z_monte_carlo - self.z).abs() / self.z
    }
}

/// Mean over `trials` of the time at which the last of `2^n` independent
/// geometric processes succeeds.
pub fn z_monte_carlo(n: u32, p: f64, trials: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_q = (-p).ln_1p();
    let mut total = 0u64;
    for _ in 0..trials {
        let mut worst = 0u64;
        for _ in 0..1u32 << n {
            let t = if p >= 1.0 {
                1
            } else {
                let u: f64 = 1.0 - rng.gen::<f64>();
                (u.ln() / log_q).floor() as u64 + 1
            };
            worst = worst.max(t);
        }
        total += worst;
    }
    total as f64 / trials as f64
}

pub fn znp_points(cfg: &ExperimentConfig) -> RunResult<Vec<ZnpPoint>> {
    let mut items = Vec::new();
    for n in ZNP_LEVELS {
        for p in ZNP_PROBS {
            items.push((n, p));
        }
    }
    par_map(cfg.workers, &items, |&(n, p)| {
        let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add((n as u64) << 32 | (p * 1e6) as u64);
        Ok(ZnpPoint {
            n,
            p,
            z: z_steps(n, p)?,
            z_expectation: z_steps_expectation(n, p)?,
            z_monte_carlo: z_monte_carlo(n, p, cfg.trials, seed),
        })
    })
}

fn znp_table(cfg: &ExperimentConfig, pts: &[ZnpPoint]) -> Table {
    let mut t = Table::new(vec![
        col("n", "1", Check::NonNegative),
        col("p", "1", Check::Probability),
        col("z_alternating", "steps", Check::NonNegative),
        col("z_expectation", "steps", Check::NonNegative),
        col("z_monte_carlo", "steps", Check::NonNegative),
        col("rel_err", "1", Check::NonNegative),
        col("trials", "1", Check::NonNegative),
    ]);
    for p in pts {
        t.rows.push(vec![
            p.n.into(),
            p.p.into(),
            p.z.into(),
            p.z_expectation.into(),
            p.z_monte_carlo.into(),
            p.rel_err().into(),
            Value::I(cfg.trials as i64),
        ]);
    }
    t
}

// ---------------------------------------------------------------- dispatch

pub fn run(cfg: &ExperimentConfig) -> RunResult<Table> {
    match cfg.experiment {
        ExperimentKind::EofSingle | ExperimentKind::EofMulti => Ok(eof_table(cfg, &eof_points(cfg)?)),
        ExperimentKind::KeyrateSingle => key_table(cfg, &key_points(cfg, cfg.bound)?),
        ExperimentKind::Optimize => key_table(cfg, &optimize_points(cfg)?),
        ExperimentKind::KeyrateBounds => Ok(bounds_table(cfg, &bounds_points(cfg)?)),
        ExperimentKind::Baselines => Ok(baseline_table(&baseline_points(cfg)?)),
        ExperimentKind::ZnpTable => Ok(znp_table(cfg, &znp_points(cfg)?)),
    }
}
