//! `2^n`-link chains: per-level post-selection, bound paths and key rates.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::{
    as_level_input, averaged_state, mean_nulling_gains, mixture_moments, nested_project,
    probe_moments, ps_probability, DisplacementGains, GridNode, LinkParams, NestedFamily,
    OutcomeFamily, PostSelectionGrid, PostSelectionRule, QuadratureConfig, TwoLinkFamily,
    TwoLinkSource, MODE_A, MODE_B,
};
use crate::channel::{transmissivity, FiberChannel, DEFAULT_ATTENUATION_DB_PER_KM};
use crate::error::{check_range, Error, Result};
use crate::fock::MultiModeDensity;
use crate::linalg::CMatrix;
use crate::metrics::{
    check_physical, eof_gaussian, holevo_reverse, mutual_info, raw_key_unclamped,
    CovarianceMatrixTM, KeyRateInputs,
};
use crate::rates::{repeater_rate, secret_key_rate, StageProbabilities};
use crate::scissor::p_nla;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundMode {
    /// Outcome-resolved integration of the output moments (two links only).
    Numeric,
    /// Every swap conditioned on `gamma = 0`; probabilities from the lower path.
    Upper,
    /// States averaged over the accepted disk before each further swap.
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainsRule {
    /// Null the conditional output means at the grid probe, level by level.
    MeanNulling,
    /// Fixed gains per level, base round first.
    Fixed(Vec<DisplacementGains>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// The chain has `2^n_levels` links.
    pub n_levels: u32,
    pub total_distance_km: f64,
    pub attenuation_db_per_km: f64,
    /// Post-selection radius per swap round, base round first.
    pub gamma_max: Vec<f64>,
    pub chi: f64,
    pub g: f64,
    pub cutoff: usize,
    pub key: KeyRateInputs,
    pub bound_mode: BoundMode,
    pub quadrature: QuadratureConfig,
    pub gains: GainsRule,
}

impl ChainConfig {
    pub fn new(n_levels: u32, total_distance_km: f64, chi: f64, g: f64, gamma_max: Vec<f64>) -> Self {
        Self {
            n_levels,
            total_distance_km,
            attenuation_db_per_km: DEFAULT_ATTENUATION_DB_PER_KM,
            gamma_max,
            chi,
            g,
            cutoff: 12,
            key: KeyRateInputs::default(),
            bound_mode: BoundMode::Lower,
            quadrature: QuadratureConfig::default(),
            gains: GainsRule::MeanNulling,
        }
    }

    pub fn links(&self) -> usize {
        1usize << self.n_levels
    }

    pub fn link_length_km(&self) -> f64 {
        self.total_distance_km / self.links() as f64
    }

    pub fn eta_link(&self) -> Result<f64> {
        transmissivity(&FiberChannel {
            length_km: self.link_length_km(),
            attenuation_db_per_km: self.attenuation_db_per_km,
        })
    }

    pub fn link_params(&self) -> Result<LinkParams> {
        Ok(LinkParams {
            chi: self.chi,
            eta: self.eta_link()?,
            g: self.g,
            cutoff: self.cutoff,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_range("n_levels", self.n_levels as f64, (1..=4).contains(&self.n_levels), "1..=4")?;
        if self.gamma_max.len() != self.n_levels as usize {
            return Err(Error::LengthMismatch {
                expected: self.n_levels as usize,
                got: self.gamma_max.len(),
            });
        }
        for &gm in &self.gamma_max {
            PostSelectionRule::new(gm)?;
        }
        check_range("chi", self.chi, (0.0..1.0).contains(&self.chi), "[0, 1)")?;
        check_range("g", self.g, self.g > 0.0, "> 0")?;
        check_range("cutoff", self.cutoff as f64, self.cutoff >= 1, ">= 1")?;
        check_range(
            "beta",
            self.key.beta,
            (0.0..=1.0).contains(&self.key.beta),
            "[0, 1]",
        )?;
        if let GainsRule::Fixed(g) = &self.gains {
            if g.len() != self.n_levels as usize {
                return Err(Error::LengthMismatch {
                    expected: self.n_levels as usize,
                    got: g.len(),
                });
            }
        }
        if self.bound_mode == BoundMode::Numeric && self.n_levels > 1 {
            return Err(Error::Intractable {
                links: self.links(),
            });
        }
        Ok(())
    }
}

/// Outcome grids for every round of a chain. They depend only on the
/// cutoff, the radii and the quadrature settings, so one set serves every
/// `(chi, g, distance)` point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    pub levels: Vec<PostSelectionGrid>,
    cutoff: usize,
}

impl GridSet {
    pub fn for_config(cfg: &ChainConfig) -> Self {
        let levels = cfg
            .gamma_max
            .iter()
            .enumerate()
            .map(|(i, &gm)| {
                let in_cut = if i == 0 { 1 } else { cfg.cutoff };
                PostSelectionGrid::new(
                    PostSelectionRule { gamma_max: gm },
                    cfg.quadrature,
                    cfg.cutoff,
                    in_cut,
                    true,
                )
            })
            .collect();
        Self {
            levels,
            cutoff: cfg.cutoff,
        }
    }

    fn matches(&self, cfg: &ChainConfig) -> bool {
        self.cutoff == cfg.cutoff
            && self.levels.len() == cfg.gamma_max.len()
            && self
                .levels
                .iter()
                .zip(&cfg.gamma_max)
                .all(|(g, &r)| g.rule.gamma_max == r && g.quadrature == cfg.quadrature)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub cm: CovarianceMatrixTM,
    pub eta_link: f64,
    pub p_nla: f64,
    /// Post-selection probability per round, base round first.
    pub p_ps: Vec<f64>,
    /// Half-order quadrature residual of each `p_ps`.
    pub ps_residuals: Vec<f64>,
    pub gains: Vec<DisplacementGains>,
    pub i_ab: f64,
    pub i_be: f64,
    pub raw_key_unclamped: f64,
    pub raw_key: f64,
    pub r_rep: f64,
    pub secret_key_rate: f64,
    pub eof: f64,
}

struct LevelTrace {
    p_ps: Vec<f64>,
    residuals: Vec<f64>,
    gains: Vec<DisplacementGains>,
    last: Option<MultiModeDensity>,
}

fn choose_gains<F: OutcomeFamily>(
    cfg: &ChainConfig,
    level: usize,
    undisplaced: &F,
    grid: &PostSelectionGrid,
) -> Result<DisplacementGains> {
    match &cfg.gains {
        GainsRule::Fixed(g) => Ok(g[level]),
        GainsRule::MeanNulling => {
            let m = probe_moments(undisplaced, grid)?;
            Ok(mean_nulling_gains(&m, grid.probe.gamma.re))
        }
    }
}

/// Averaged-state recursion. With `keep_final = false` the last round only
/// yields its probability.
fn lower_levels(
    cfg: &ChainConfig,
    grids: &GridSet,
    source: &TwoLinkSource,
    keep_final: bool,
) -> Result<LevelTrace> {
    let n = cfg.n_levels as usize;
    let mut trace = LevelTrace {
        p_ps: Vec::with_capacity(n),
        residuals: Vec::with_capacity(n),
        gains: Vec::with_capacity(n),
        last: None,
    };
    let base = TwoLinkFamily {
        source,
        gains: None,
    };
    let grid0 = &grids.levels[0];
    let ps = ps_probability(&base, grid0)?;
    trace.p_ps.push(ps.value);
    trace.residuals.push(ps.residual);
    let gains = choose_gains(cfg, 0, &base, grid0)?;
    trace.gains.push(gains);
    if n == 1 && !keep_final {
        return Ok(trace);
    }
    let mut state = averaged_state(
        &TwoLinkFamily {
            source,
            gains: Some(gains),
        },
        grid0,
    )?
    .state;
    for level in 1..n {
        let grid = &grids.levels[level];
        let fam = NestedFamily::new(&state, None)?;
        let ps = ps_probability(&fam, grid)?;
        trace.p_ps.push(ps.value);
        trace.residuals.push(ps.residual);
        let gains = choose_gains(cfg, level, &fam, grid)?;
        trace.gains.push(gains);
        if level + 1 == n && !keep_final {
            return Ok(trace);
        }
        let avg = averaged_state(&fam.with_gains(Some(gains)), grid)?;
        state = as_level_input(&avg.state)?;
    }
    trace.last = Some(state);
    Ok(trace)
}

/// CM of the chain output when every swap is conditioned on `gamma = 0`.
pub fn gamma_zero_cm(params: LinkParams, n_levels: u32) -> Result<CovarianceMatrixTM> {
    check_range("n_levels", n_levels as f64, n_levels >= 1, ">= 1")?;
    let source = TwoLinkSource::new(params)?;
    let node = GridNode::new(Complex64::new(0.0, 0.0), 0.0, params.cutoff, 1);
    let mut state = source.conditional_state(&node.shift)?.normalized()?;
    let cut = params.cutoff;
    // D(0) from B's levels to M's levels
    let shift = CMatrix::identity(cut + 1);
    for _ in 1..n_levels {
        let padded = pad_mode(&state, MODE_B, cut)?;
        let right = padded.relabel(&[(MODE_A, super::MODE_M), (MODE_B, super::MODE_N)])?;
        let out = nested_project(&padded, &right, &shift)?.normalized()?;
        state = as_level_input(&out)?;
    }
    let state = pad_mode(&state, MODE_B, cut)?;
    let m = state.moments(MODE_A, MODE_B)?;
    Ok(CovarianceMatrixTM::from_full(m.covariance(), m.mean))
}

/// Embeds a mode into `0..=cutoff` levels (zero padding).
fn pad_mode(rho: &MultiModeDensity, id: crate::fock::ModeId, cutoff: usize) -> Result<MultiModeDensity> {
    let mode = rho
        .modes()
        .iter()
        .find(|m| m.id == id)
        .ok_or(Error::UnknownMode(id))?;
    if mode.cutoff >= cutoff {
        return Ok(rho.clone());
    }
    let embed = CMatrix::identity(cutoff + 1).crop(cutoff + 1, mode.levels());
    rho.apply_local(id, &embed)
}

fn key_report(
    cfg: &ChainConfig,
    cm: CovarianceMatrixTM,
    eta_link: f64,
    p_nla: f64,
    trace: LevelTrace,
) -> Result<ChainReport> {
    check_physical(&cm)?;
    let i_ab = mutual_info(&cm, cfg.key.protocol);
    let i_be = holevo_reverse(&cm, cfg.key.protocol)?;
    let k_raw = raw_key_unclamped(&cm, &cfg.key)?;
    let raw_key = k_raw.max(0.0);
    for &p in &trace.p_ps {
        check_range("p_ps", p, p > 0.0 && p <= 1.0, "(0, 1]")?;
    }
    let sp = StageProbabilities::from_rounds(p_nla, &trace.p_ps);
    let r_rep = repeater_rate(&sp, cfg.n_levels)?;
    let skr = secret_key_rate(raw_key, r_rep)?;
    let eof = eof_gaussian(&cm)?;
    Ok(ChainReport {
        cm,
        eta_link,
        p_nla,
        p_ps: trace.p_ps,
        ps_residuals: trace.residuals,
        gains: trace.gains,
        i_ab,
        i_be,
        raw_key_unclamped: k_raw,
        raw_key,
        r_rep,
        secret_key_rate: skr,
        eof,
    })
}

pub fn chain_evaluate(cfg: &ChainConfig) -> Result<ChainReport> {
    let grids = GridSet::for_config(cfg);
    chain_evaluate_with(cfg, &grids)
}

pub fn chain_evaluate_with(cfg: &ChainConfig, grids: &GridSet) -> Result<ChainReport> {
    cfg.validate()?;
    if !grids.matches(cfg) {
        return Err(Error::Domain {
            name: "grids",
            value: cfg.cutoff as f64,
            expected: "a grid set built for this configuration",
        });
    }
    let params = cfg.link_params()?;
    let p_nla = p_nla(cfg.chi, params.eta, cfg.g)?;
    let source = TwoLinkSource::new(params)?;
    match cfg.bound_mode {
        BoundMode::Numeric => {
            let base = TwoLinkFamily {
                source: &source,
                gains: None,
            };
            let grid = &grids.levels[0];
            let ps = ps_probability(&base, grid)?;
            let gains = choose_gains(cfg, 0, &base, grid)?;
            let cm = if grid.disk.is_empty() {
                gamma_zero_cm(params, 1)?
            } else {
                let mix = mixture_moments(&base, grid, &gains)?;
                CovarianceMatrixTM::from_full(mix.moments.covariance(), mix.moments.mean)
            };
            let trace = LevelTrace {
                p_ps: vec![ps.value],
                residuals: vec![ps.residual],
                gains: vec![gains],
                last: None,
            };
            key_report(cfg, cm, params.eta, p_nla, trace)
        }
        BoundMode::Lower => {
            let mut trace = lower_levels(cfg, grids, &source, true)?;
            let state = trace.last.take().expect("final state kept");
            let m = state.moments(MODE_A, MODE_B)?;
            let cm = CovarianceMatrixTM::from_full(m.covariance(), m.mean);
            key_report(cfg, cm, params.eta, p_nla, trace)
        }
        BoundMode::Upper => {
            let trace = lower_levels(cfg, grids, &source, false)?;
            let cm = gamma_zero_cm(params, cfg.n_levels)?;
            key_report(cfg, cm, params.eta, p_nla, trace)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Protocol;

    fn cfg(mode: BoundMode, n: u32, dist: f64, gm: Vec<f64>) -> ChainConfig {
        let mut c = ChainConfig::new(n, dist, 0.33, 20.0, gm);
        c.bound_mode = mode;
        c.cutoff = 8;
        c
    }

    #[test]
    fn numeric_mode_rejects_deep_chains() {
        let c = cfg(BoundMode::Numeric, 2, 300.0, vec![0.2, 0.45]);
        assert!(matches!(chain_evaluate(&c), Err(Error::Intractable { links: 4 })));
    }

    #[test]
    fn gamma_list_must_match_levels() {
        let c = cfg(BoundMode::Lower, 2, 300.0, vec![0.2]);
        assert!(matches!(
            chain_evaluate(&c),
            Err(Error::LengthMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn two_link_lower_equals_numeric() {
        let lo = chain_evaluate(&cfg(BoundMode::Lower, 1, 300.0, vec![0.5])).unwrap();
        let nu = chain_evaluate(&cfg(BoundMode::Numeric, 1, 300.0, vec![0.5])).unwrap();
        for (x, y) in [(lo.cm.a, nu.cm.a), (lo.cm.b, nu.cm.b), (lo.cm.c, nu.cm.c)] {
            assert!((x - y).abs() < 1e-6 * x.abs().max(1.0), "{x} vs {y}");
        }
        assert_eq!(lo.p_ps, nu.p_ps);
    }

    #[test]
    fn mean_nulling_zeroes_output_means() {
        let mut c = cfg(BoundMode::Numeric, 1, 300.0, vec![0.5]);
        c.cutoff = 12;
        let params = c.link_params().unwrap();
        let src = TwoLinkSource::new(params).unwrap();
        let grids = GridSet::for_config(&c);
        let grid = &grids.levels[0];
        let gains = choose_gains(&c, 0, &TwoLinkFamily { source: &src, gains: None }, grid).unwrap();
        let disp = TwoLinkFamily {
            source: &src,
            gains: Some(gains),
        };
        let rho = disp.density(&grid.probe).unwrap().normalized().unwrap();
        let m = rho.moments(MODE_A, MODE_B).unwrap();
        assert!(m.mean[0].abs() < 1e-8 && m.mean[2].abs() < 1e-8, "{:?}", m.mean);
    }

    #[test]
    fn upper_key_at_least_lower_key() {
        for n in [1u32, 2] {
            let gm = if n == 1 { vec![0.5] } else { vec![0.2, 0.45] };
            let lo = chain_evaluate(&cfg(BoundMode::Lower, n, 300.0, gm.clone())).unwrap();
            let up = chain_evaluate(&cfg(BoundMode::Upper, n, 300.0, gm)).unwrap();
            assert_eq!(lo.p_ps, up.p_ps);
            assert!(up.raw_key >= lo.raw_key, "n={n}: {} < {}", up.raw_key, lo.raw_key);
        }
    }

    #[test]
    fn repeater_rate_uses_base_first_probabilities() {
        let r = chain_evaluate(&cfg(BoundMode::Lower, 2, 300.0, vec![0.2, 0.45])).unwrap();
        let sp = StageProbabilities {
            p_nla: r.p_nla,
            p_ps: vec![r.p_ps[1], r.p_ps[0]],
        };
        assert_eq!(r.r_rep, repeater_rate(&sp, 2).unwrap());
        assert!(r.p_ps[0] < r.p_ps[1]);
    }

    #[test]
    fn het_protocol_runs() {
        let mut c = cfg(BoundMode::Numeric, 1, 250.0, vec![0.4]);
        c.key.protocol = Protocol::Heterodyne;
        let r = chain_evaluate(&c).unwrap();
        assert!(r.i_ab > 0.0 && r.secret_key_rate >= 0.0);
    }
}
