//! Post-selected dual-homodyne entanglement swapping.
//!
//! Two distilled links `(A, C, D)` and `(F, B, E)` are joined by projecting
//! `(C, F)` onto the dual-homodyne outcome `gamma`, then displacing the outer
//! modes. Nested rounds join two averaged two-mode states the same way.
//!
//! Every family of conditional states produced here is phase covariant:
//! `rho(e^{i t} gamma) = U rho(gamma) U†` with `U = exp(i t (n_right - n_left))`.
//! The left output mean therefore follows `conj(gamma)` and the right one
//! `gamma`, and the displacements are `D_left(lambda_a conj(gamma))`,
//! `D_right(lambda_b gamma)`.

pub mod chain;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::{Float, Zero};

use crate::error::{check_range, Error, Result};
use crate::fock::{displacement_rect, ModeId, Moments, MultiModeDensity, MultiModeKet};
use crate::linalg::CMatrix;
use crate::quadrature::{phase_nodes, radial_disk_rule};
use crate::scissor::distilled_link_labeled;

pub const MODE_A: ModeId = ModeId('A');
pub const MODE_B: ModeId = ModeId('B');
pub const MODE_C: ModeId = ModeId('C');
pub const MODE_D: ModeId = ModeId('D');
pub const MODE_E: ModeId = ModeId('E');
pub const MODE_F: ModeId = ModeId('F');
pub const MODE_M: ModeId = ModeId('M');
pub const MODE_N: ModeId = ModeId('N');

/// Per-link physical configuration (identical across links).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub chi: f64,
    pub eta: f64,
    pub g: f64,
    /// Fock cutoff of source and environment modes.
    pub cutoff: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapOutcome {
    pub gamma: Complex64,
    pub modes: (ModeId, ModeId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostSelectionRule {
    pub gamma_max: f64,
}

impl PostSelectionRule {
    pub fn new(gamma_max: f64) -> Result<Self> {
        check_range("gamma_max", gamma_max, gamma_max >= 0.0, ">= 0")?;
        Ok(Self { gamma_max })
    }
}

/// Displacement scale factors for the left (`lambda_a`) and right
/// (`lambda_b`) output modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementGains {
    pub lambda_a: f64,
    pub lambda_b: f64,
}

impl DisplacementGains {
    pub const NONE: DisplacementGains = DisplacementGains {
        lambda_a: 0.0,
        lambda_b: 0.0,
    };

    fn check(&self) -> Result<()> {
        check_range("lambda_a", self.lambda_a, true, "finite")?;
        check_range("lambda_b", self.lambda_b, true, "finite")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Gauss–Legendre nodes in `|gamma|` on the acceptance disk and on the tail disk.
    pub radial_nodes: usize,
    /// Uniform phase nodes when the integrand is not phase covariant.
    pub phase_nodes: usize,
    /// Radius standing in for the whole outcome plane.
    pub tail_radius: f64,
    /// Largest accepted relative change between the full and half-order rules.
    pub residual_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            radial_nodes: 32,
            phase_nodes: 16,
            tail_radius: 6.0,
            residual_tol: 1e-4,
        }
    }
}

/// One outcome on an integration grid with its weight and `D(-gamma)`
/// restricted to `in -> out` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct GridNode {
    pub gamma: Complex64,
    pub weight: f64,
    pub shift: CMatrix,
}

impl GridNode {
    pub fn new(gamma: Complex64, weight: f64, out_cutoff: usize, in_cutoff: usize) -> Self {
        Self {
            gamma,
            weight,
            shift: displacement_rect(-gamma, out_cutoff, in_cutoff),
        }
    }

    fn rotated(&self, theta: f64, weight: f64) -> Self {
        // <y|D(-r e^{it})|x> = e^{it(y-x)} <y|D(-r)|x>
        let mut shift = self.shift.clone();
        for y in 0..shift.rows {
            for x in 0..shift.cols {
                let ph = Complex64::from_polar(1.0, theta * (y as f64 - x as f64));
                let v = shift.get(y, x) * ph;
                shift.set(y, x, v);
            }
        }
        Self {
            gamma: self.gamma * Complex64::from_polar(1.0, theta),
            weight,
            shift,
        }
    }
}

/// Precomputed outcome nodes for the acceptance disk, the tail disk (whole
/// plane) and their half-order companions, plus the mean-nulling probe.
#[derive(Debug, Clone, PartialEq)]
pub struct PostSelectionGrid {
    pub rule: PostSelectionRule,
    pub quadrature: QuadratureConfig,
    /// Radial nodes only (weights carry the full `2 pi`) when true.
    pub covariant: bool,
    pub disk: Vec<GridNode>,
    pub disk_half: Vec<GridNode>,
    pub tail: Vec<GridNode>,
    pub tail_half: Vec<GridNode>,
    pub probe: GridNode,
    pub out_cutoff: usize,
    pub in_cutoff: usize,
}

fn radial_nodes(
    n: usize,
    r_max: f64,
    out_cutoff: usize,
    in_cutoff: usize,
    covariant: bool,
    phases: usize,
) -> Vec<GridNode> {
    if r_max <= 0.0 {
        return Vec::new();
    }
    let rule = radial_disk_rule(n, r_max);
    let mut nodes = Vec::new();
    for (&r, &w) in rule.nodes.iter().zip(&rule.weights) {
        let base = GridNode::new(Complex64::new(r, 0.0), w, out_cutoff, in_cutoff);
        if covariant {
            nodes.push(base);
        } else {
            for th in phase_nodes(phases) {
                nodes.push(base.rotated(th, w / phases as f64));
            }
        }
    }
    nodes
}

impl PostSelectionGrid {
    pub fn new(
        rule: PostSelectionRule,
        quadrature: QuadratureConfig,
        out_cutoff: usize,
        in_cutoff: usize,
        covariant: bool,
    ) -> Self {
        let n = quadrature.radial_nodes;
        let half = (n / 2).max(1);
        let tail_r = quadrature.tail_radius.max(rule.gamma_max);
        let mk = |count: usize, r: f64| {
            radial_nodes(count, r, out_cutoff, in_cutoff, covariant, quadrature.phase_nodes)
        };
        let probe_r = if rule.gamma_max > 0.0 {
            0.5 * rule.gamma_max
        } else {
            0.25
        };
        Self {
            rule,
            quadrature,
            covariant,
            disk: mk(n, rule.gamma_max),
            disk_half: mk(half, rule.gamma_max),
            tail: mk(n, tail_r),
            tail_half: mk(half, tail_r),
            probe: GridNode::new(Complex64::new(probe_r, 0.0), 0.0, out_cutoff, in_cutoff),
            out_cutoff,
            in_cutoff,
        }
    }
}

/// A family `gamma -> rho(gamma)` of unnormalized conditional two-mode states.
pub trait OutcomeFamily {
    /// Output modes `(left, right)`.
    fn output_modes(&self) -> (ModeId, ModeId);
    /// Conditional state at `node.gamma` (displacements included).
    fn density(&self, node: &GridNode) -> Result<MultiModeDensity>;
    /// Outcome probability density `Tr rho(gamma)`.
    fn outcome_density(&self, node: &GridNode) -> Result<f64> {
        Ok(self.density(node)?.trace())
    }
    /// Charges of the phase covariance, if the family has one.
    fn phase_charges(&self) -> Option<[(ModeId, i32); 2]> {
        None
    }
}

/// Post-selection probability with its half-order residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsEstimate {
    pub value: f64,
    pub residual: f64,
}

fn weighted_trace<F: OutcomeFamily + ?Sized>(family: &F, nodes: &[GridNode]) -> Result<f64> {
    let mut s = 0.0;
    for n in nodes {
        s += n.weight * family.outcome_density(n)?;
    }
    Ok(s)
}

/// Ratio of the outcome-density integral over the acceptance disk to the
/// integral over the tail disk.
pub fn ps_probability<F: OutcomeFamily + ?Sized>(
    family: &F,
    grid: &PostSelectionGrid,
) -> Result<PsEstimate> {
    if grid.disk.is_empty() {
        return Ok(PsEstimate {
            value: 0.0,
            residual: 0.0,
        });
    }
    let full = weighted_trace(family, &grid.disk)? / weighted_trace(family, &grid.tail)?;
    let half = weighted_trace(family, &grid.disk_half)? / weighted_trace(family, &grid.tail_half)?;
    let est = PsEstimate {
        value: full.clamp(0.0, 1.0),
        residual: (full - half).abs(),
    };
    check_residual(est, grid.quadrature.residual_tol)?;
    Ok(est)
}

fn check_residual(est: PsEstimate, tol: f64) -> Result<()> {
    if !est.value.is_finite() || est.residual > tol * est.value.max(1e-300) {
        return Err(Error::Quadrature {
            residual: est.residual,
        });
    }
    Ok(())
}

/// Normalized average of `rho(gamma)` over the acceptance disk together with
/// the unnormalized disk weight `int Tr rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedState {
    pub state: MultiModeDensity,
    pub weight: f64,
}

pub fn averaged_state<F: OutcomeFamily + ?Sized>(
    family: &F,
    grid: &PostSelectionGrid,
) -> Result<AveragedState> {
    let charges = family.phase_charges();
    if grid.covariant && charges.is_none() {
        return Err(Error::Domain {
            name: "grid",
            value: 0.0,
            expected: "a phase-covariant family for a radial grid",
        });
    }
    let nodes: Vec<GridNode> = if grid.disk.is_empty() {
        // continuity at gamma_max -> 0
        vec![GridNode::new(Complex64::zero(), 1.0, grid.out_cutoff, grid.in_cutoff)]
    } else {
        grid.disk.clone()
    };
    let mut acc: Option<MultiModeDensity> = None;
    let mut weight = 0.0;
    for n in &nodes {
        let rho = family.density(n)?;
        weight += n.weight * family.outcome_density(n)?;
        match acc.as_mut() {
            None => acc = Some(rho.scaled(n.weight)),
            Some(a) => a.add_scaled(&rho, n.weight)?,
        }
    }
    let mut avg = acc.expect("at least one node");
    if grid.covariant {
        if let Some(q) = charges {
            avg = avg.phase_average(&q)?;
        }
    }
    Ok(AveragedState {
        state: avg.normalized()?,
        weight: if grid.disk.is_empty() { 0.0 } else { weight },
    })
}

/// Kernel `K[c][f] = <f|D(-gamma)|c> / sqrt(pi)` of `<gamma|_{FC}`.
pub fn dual_hd_kernel(shift: &CMatrix) -> CMatrix {
    let s = 1.0 / PI.sqrt();
    let mut k = CMatrix::zeros(shift.cols, shift.rows);
    for f in 0..shift.rows {
        for c in 0..shift.cols {
            k.set(c, f, shift.get(f, c) * s);
        }
    }
    k
}

/// Projects modes `(m_f, m_c)` onto the dual-homodyne outcome `gamma`:
/// contraction with `(1/sqrt(pi)) sum_n <n|_C D_C(gamma)† <n|_F`.
pub fn dual_hd_project(
    state: &MultiModeKet,
    m_f: ModeId,
    m_c: ModeId,
    gamma: Complex64,
) -> Result<MultiModeKet> {
    let c = state.mode(m_c)?;
    let f = state.mode(m_f)?;
    let shift = displacement_rect(-gamma, f.cutoff, c.cutoff);
    state.contract_pair(m_c, m_f, &dual_hd_kernel(&shift))
}

/// Mean-nulling gains from the conditional means at a real probe outcome.
pub fn mean_nulling_gains(moments: &Moments, probe: f64) -> DisplacementGains {
    // <a> = (<x> + i<p>)/2; left mean follows conj(gamma), right mean gamma
    DisplacementGains {
        lambda_a: -0.5 * moments.mean[0] / probe,
        lambda_b: -0.5 * moments.mean[2] / probe,
    }
}

fn displace_outputs(
    rho: MultiModeDensity,
    left: ModeId,
    right: ModeId,
    gamma: Complex64,
    gains: &DisplacementGains,
    cutoff: usize,
) -> Result<MultiModeDensity> {
    let l = rho.modes().iter().find(|m| m.id == left).ok_or(Error::UnknownMode(left))?;
    let r = rho.modes().iter().find(|m| m.id == right).ok_or(Error::UnknownMode(right))?;
    let (lc, rc) = (l.cutoff, r.cutoff);
    let dl = displacement_rect(gamma.conj() * gains.lambda_a, cutoff.max(lc), lc);
    let dr = displacement_rect(gamma * gains.lambda_b, cutoff.max(rc), rc);
    rho.apply_local(left, &dl)?.apply_local(right, &dr)
}

/// The two distilled links `(A, C, D)` and `(F, B, E)` as one ket, stored
/// in the order `(A, D, B, E, C, F)` so that projections contract the last
/// two modes.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLinkSource {
    pub params: LinkParams,
    product: MultiModeKet,
    /// `||link||^2` of one distilled link.
    pub link_norm_sqr: f64,
}

impl TwoLinkSource {
    pub fn new(params: LinkParams) -> Result<Self> {
        let LinkParams { chi, eta, g, cutoff } = params;
        let l1 = distilled_link_labeled(chi, eta, g, cutoff, ['A', 'C', 'D'])?;
        let l2 = distilled_link_labeled(chi, eta, g, cutoff, ['F', 'B', 'E'])?;
        let link_norm_sqr = l1.norm_sqr();
        let product = l1
            .tensor(&l2)?
            .permute(&[MODE_A, MODE_D, MODE_B, MODE_E, MODE_C, MODE_F])?;
        Ok(Self {
            params,
            product,
            link_norm_sqr,
        })
    }

    /// Levels of the measured `(C, F)` pair.
    pub fn measured_cutoffs(&self) -> (usize, usize) {
        (1, self.params.cutoff)
    }

    /// Projected ket over `(A, D, B, E)`.
    pub fn project(&self, shift: &CMatrix) -> Result<MultiModeKet> {
        self.product.contract_pair(MODE_C, MODE_F, &dual_hd_kernel(shift))
    }

    /// Unnormalized conditional state over `(A, B)` without displacements.
    pub fn conditional_state(&self, shift: &CMatrix) -> Result<MultiModeDensity> {
        self.project(shift)?.reduced_density(&[MODE_A, MODE_B])
    }
}

/// Two-link conditional states with optional output displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLinkFamily<'a> {
    pub source: &'a TwoLinkSource,
    pub gains: Option<DisplacementGains>,
}

impl OutcomeFamily for TwoLinkFamily<'_> {
    fn output_modes(&self) -> (ModeId, ModeId) {
        (MODE_A, MODE_B)
    }

    fn density(&self, node: &GridNode) -> Result<MultiModeDensity> {
        let rho = self.source.conditional_state(&node.shift)?;
        match &self.gains {
            None => Ok(rho),
            Some(g) => {
                g.check()?;
                displace_outputs(rho, MODE_A, MODE_B, node.gamma, g, self.source.params.cutoff)
            }
        }
    }

    fn outcome_density(&self, node: &GridNode) -> Result<f64> {
        Ok(self.source.project(&node.shift)?.norm_sqr())
    }

    fn phase_charges(&self) -> Option<[(ModeId, i32); 2]> {
        Some([(MODE_A, -1), (MODE_B, 1)])
    }
}

/// Conditional two-link output state at `gamma`, displaced by
/// `D_A(lambda_a conj(gamma)) D_B(lambda_b gamma)`; trace is the outcome density.
pub fn link_output_state(
    params: LinkParams,
    gamma: Complex64,
    gains: DisplacementGains,
) -> Result<MultiModeDensity> {
    let src = TwoLinkSource::new(params)?;
    let node = GridNode::new(gamma, 0.0, params.cutoff, 1);
    TwoLinkFamily {
        source: &src,
        gains: Some(gains),
    }
    .density(&node)
}

/// Nested swap of `rho1` on `(A, B)` and `rho2` on `(M, N)`: projects
/// `(B, M)` with `D(-gamma)` given by `shift` (levels of B -> levels of M)
/// and returns the unnormalized state on `(A, N)`.
pub fn nested_project(
    rho1: &MultiModeDensity,
    rho2: &MultiModeDensity,
    shift: &CMatrix,
) -> Result<MultiModeDensity> {
    expect_modes(rho1, [MODE_A, MODE_B])?;
    expect_modes(rho2, [MODE_M, MODE_N])?;
    let [ma, mb] = [rho1.modes()[0], rho1.modes()[1]];
    let [mm, mn] = [rho2.modes()[0], rho2.modes()[1]];
    if shift.cols != mb.levels() || shift.rows != mm.levels() {
        return Err(Error::LengthMismatch {
            expected: mb.levels() * mm.levels(),
            got: shift.cols * shift.rows,
        });
    }
    let r1 = rho1.apply_local(MODE_B, shift)?;
    let (da, dm, dn) = (ma.levels(), mm.levels(), mn.levels());
    let m1 = r1.matrix();
    let m2 = rho2.matrix();
    let d1 = da * dm;
    let dout = da * dn;
    let mut out = CMatrix::zeros(dout, dout);
    for m in 0..dm {
        for n in 0..dn {
            let row2 = m * dn + n;
            for mp in 0..dm {
                for np in 0..dn {
                    let v = m2.get(row2, mp * dn + np);
                    if v.is_zero() {
                        continue;
                    }
                    for a in 0..da {
                        let src = &m1.data[(a * dm + m) * d1..(a * dm + m + 1) * d1];
                        let orow = (a * dn + n) * dout;
                        for ap in 0..da {
                            out.data[orow + ap * dn + np] += src[ap * dm + mp] * v;
                        }
                    }
                }
            }
        }
    }
    out.scale(Complex64::new(1.0 / PI, 0.0));
    MultiModeDensity::new(vec![ma, mn], out)
}

fn expect_modes(rho: &MultiModeDensity, ids: [ModeId; 2]) -> Result<()> {
    let m = rho.modes();
    if m.len() != 2 {
        return Err(Error::LengthMismatch {
            expected: 2,
            got: m.len(),
        });
    }
    for (i, id) in ids.iter().enumerate() {
        if m[i].id != *id {
            return Err(Error::UnknownMode(*id));
        }
    }
    Ok(())
}

/// Nested swap at outcome `gamma` with output displacements
/// `D_A(lambda_a conj(gamma)) D_N(lambda_b gamma)`.
pub fn nested_swap(
    rho1: &MultiModeDensity,
    rho2: &MultiModeDensity,
    gamma: Complex64,
    gains: DisplacementGains,
) -> Result<MultiModeDensity> {
    expect_modes(rho1, [MODE_A, MODE_B])?;
    expect_modes(rho2, [MODE_M, MODE_N])?;
    let shift = displacement_rect(-gamma, rho2.modes()[0].cutoff, rho1.modes()[1].cutoff);
    let out = nested_project(rho1, rho2, &shift)?;
    let cutoff = rho1.modes()[0].cutoff.max(rho2.modes()[1].cutoff);
    displace_outputs(out, MODE_A, MODE_N, gamma, &gains, cutoff)
}

/// Conditional states of a nested round fed with two copies of one
/// averaged state on `(A, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedFamily {
    left: MultiModeDensity,
    right: MultiModeDensity,
    /// Reduced state of the left copy on B and of the right copy on M.
    inner_left: MultiModeDensity,
    inner_right: MultiModeDensity,
    pub gains: Option<DisplacementGains>,
}

impl NestedFamily {
    pub fn new(input: &MultiModeDensity, gains: Option<DisplacementGains>) -> Result<Self> {
        expect_modes(input, [MODE_A, MODE_B])?;
        let right = input.relabel(&[(MODE_A, MODE_M), (MODE_B, MODE_N)])?;
        Ok(Self {
            inner_left: input.partial_trace(&[MODE_B])?,
            inner_right: right.partial_trace(&[MODE_M])?,
            left: input.clone(),
            right,
            gains,
        })
    }

    pub fn with_gains(&self, gains: Option<DisplacementGains>) -> Self {
        Self {
            gains,
            ..self.clone()
        }
    }

    /// `(levels of B, levels of M)` of the projected pair.
    pub fn measured_cutoffs(&self) -> (usize, usize) {
        (self.left.modes()[1].cutoff, self.right.modes()[0].cutoff)
    }

    fn output_cutoff(&self) -> usize {
        self.left.modes()[0].cutoff.max(self.right.modes()[1].cutoff)
    }
}

impl OutcomeFamily for NestedFamily {
    fn output_modes(&self) -> (ModeId, ModeId) {
        (MODE_A, MODE_N)
    }

    fn density(&self, node: &GridNode) -> Result<MultiModeDensity> {
        let out = nested_project(&self.left, &self.right, &node.shift)?;
        match &self.gains {
            None => Ok(out),
            Some(g) => {
                g.check()?;
                displace_outputs(out, MODE_A, MODE_N, node.gamma, g, self.output_cutoff())
            }
        }
    }

    fn outcome_density(&self, node: &GridNode) -> Result<f64> {
        // Tr = (1/pi) sum_{m m'} (D tau D†)[m][m'] sigma[m][m']
        let s = &node.shift;
        let tau = s.matmul(self.inner_left.matrix()).matmul(&s.adjoint());
        let sigma = self.inner_right.matrix();
        let t: Complex64 = tau.data.iter().zip(&sigma.data).map(|(a, b)| a * b).sum();
        Ok(t.re / PI)
    }

    fn phase_charges(&self) -> Option<[(ModeId, i32); 2]> {
        Some([(MODE_A, -1), (MODE_N, 1)])
    }
}

/// Normalized moments of the family at the grid probe (no displacements).
pub fn probe_moments<F: OutcomeFamily + ?Sized>(family: &F, grid: &PostSelectionGrid) -> Result<Moments> {
    let (l, r) = family.output_modes();
    family.density(&grid.probe)?.normalized()?.moments(l, r)
}

/// Rotates the moments of the state at real `r` to the outcome `r e^{i t}`
/// (left mode by `-t`, right mode by `+t`).
pub fn rotate_moments(m: &Moments, theta: f64) -> Moments {
    let (c, s) = (theta.cos(), theta.sin());
    let mut rot = [[0.0; 4]; 4];
    rot[0][0] = c;
    rot[0][1] = s;
    rot[1][0] = -s;
    rot[1][1] = c;
    rot[2][2] = c;
    rot[2][3] = -s;
    rot[3][2] = s;
    rot[3][3] = c;
    let mut mean = [0.0; 4];
    let mut second = [[0.0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            mean[i] += rot[i][k] * m.mean[k];
        }
    }
    for i in 0..4 {
        for j in 0..4 {
            let mut v = 0.0;
            for k in 0..4 {
                for l in 0..4 {
                    v += rot[i][k] * m.second[k][l] * rot[j][l];
                }
            }
            second[i][j] = v;
        }
    }
    Moments { mean, second }
}

/// Mixture moments over the acceptance disk from undisplaced conditional
/// states; displacements enter analytically as mean shifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureMoments {
    pub moments: Moments,
    pub weight: f64,
}

pub fn mixture_moments<F: OutcomeFamily + ?Sized>(
    family: &F,
    grid: &PostSelectionGrid,
    gains: &DisplacementGains,
) -> Result<MixtureMoments> {
    if !grid.covariant {
        return Err(Error::Domain {
            name: "grid",
            value: 0.0,
            expected: "a radial grid",
        });
    }
    let (l, r) = family.output_modes();
    let phases = phase_nodes(grid.quadrature.phase_nodes);
    let mut w_tot = 0.0;
    let mut m1 = [0.0; 4];
    let mut m2 = [[0.0; 4]; 4];
    for node in &grid.disk {
        let rho = family.density(node)?;
        let t = rho.trace();
        let base = rho.normalized()?.moments(l, r)?;
        let w = node.weight * t / phases.len() as f64;
        for &th in &phases {
            let mm = rotate_moments(&base, th);
            let gamma = node.gamma * Complex64::from_polar(1.0, th);
            let da = gamma.conj() * gains.lambda_a;
            let db = gamma * gains.lambda_b;
            let d = [2.0 * da.re, 2.0 * da.im, 2.0 * db.re, 2.0 * db.im];
            w_tot += w;
            for i in 0..4 {
                m1[i] += w * (mm.mean[i] + d[i]);
                for j in 0..4 {
                    m2[i][j] += w
                        * (mm.second[i][j] + mm.mean[i] * d[j] + d[i] * mm.mean[j] + d[i] * d[j]);
                }
            }
        }
    }
    if !(w_tot > 0.0) {
        return Err(Error::NotNormalized(w_tot));
    }
    for i in 0..4 {
        m1[i] /= w_tot;
        for j in 0..4 {
            m2[i][j] /= w_tot;
        }
    }
    Ok(MixtureMoments {
        moments: Moments {
            mean: m1,
            second: m2,
        },
        weight: w_tot,
    })
}

/// Output modes of a chain level are renamed to `(A, B)` before the next round.
pub fn as_level_input(rho: &MultiModeDensity) -> Result<MultiModeDensity> {
    let ids: Vec<ModeId> = rho.modes().iter().map(|m| m.id).collect();
    if ids.len() != 2 {
        return Err(Error::LengthMismatch {
            expected: 2,
            got: ids.len(),
        });
    }
    rho.relabel(&[(ids[0], MODE_A), (ids[1], MODE_B)])
}
