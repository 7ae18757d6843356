//! Truncated multimode Fock space: labelled modes, kets, density matrices,
//! tensor/trace/projection primitives and quadrature moments.
//!
//! Quadratures follow `x = a + a†`, `p = -i(a - a†)`, so the vacuum has unit
//! variance (shot-noise units). Moment vectors are ordered `(x1, p1, x2, p2)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use num_traits::{Float, Zero};

use crate::error::{Error, Result};
use crate::linalg::{expm, hermitian_eigenvalues, CMatrix, Mat4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeId(pub char);

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub id: ModeId,
    /// Largest photon number kept.
    pub cutoff: usize,
}

impl Mode {
    pub fn new(id: char, cutoff: usize) -> Self {
        Self {
            id: ModeId(id),
            cutoff,
        }
    }

    #[inline]
    pub fn levels(&self) -> usize {
        self.cutoff + 1
    }
}

fn check_distinct(modes: &[Mode]) -> Result<()> {
    for (i, m) in modes.iter().enumerate() {
        if modes[..i].iter().any(|o| o.id == m.id) {
            return Err(Error::ModeCollision(m.id));
        }
    }
    Ok(())
}

fn dim_of(modes: &[Mode]) -> usize {
    modes.iter().map(Mode::levels).product()
}

fn strides_of(modes: &[Mode]) -> Vec<usize> {
    let mut s = vec![1; modes.len()];
    for k in (0..modes.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * modes[k + 1].levels();
    }
    s
}

fn position(modes: &[Mode], id: ModeId) -> Result<usize> {
    modes
        .iter()
        .position(|m| m.id == id)
        .ok_or(Error::UnknownMode(id))
}

/// For each flat index of `modes` reordered by `order` (positions into the
/// original list), the flat index in the original layout.
fn permutation_map(modes: &[Mode], order: &[usize]) -> Vec<usize> {
    let strides = strides_of(modes);
    let dims: Vec<usize> = order.iter().map(|&p| modes[p].levels()).collect();
    let ostr: Vec<usize> = order.iter().map(|&p| strides[p]).collect();
    let total = dim_of(modes);
    let mut map = Vec::with_capacity(total);
    let mut occ = vec![0usize; order.len()];
    let mut old = 0usize;
    for _ in 0..total {
        map.push(old);
        for k in (0..order.len()).rev() {
            occ[k] += 1;
            old += ostr[k];
            if occ[k] < dims[k] {
                break;
            }
            old -= ostr[k] * dims[k];
            occ[k] = 0;
        }
    }
    map
}

/// Pure state over labelled modes. May be deliberately unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModeKet {
    modes: Vec<Mode>,
    amps: Vec<Complex64>,
}

impl MultiModeKet {
    pub fn new(modes: Vec<Mode>, amps: Vec<Complex64>) -> Result<Self> {
        check_distinct(&modes)?;
        let dim = dim_of(&modes);
        if amps.len() != dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                got: amps.len(),
            });
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Domain {
                name: "amplitude",
                value: f64::NAN,
                expected: "finite values",
            });
        }
        Ok(Self { modes, amps })
    }

    pub fn vacuum(modes: Vec<Mode>) -> Result<Self> {
        let dim = dim_of(&modes);
        let mut amps = vec![Complex64::zero(); dim];
        amps[0] = Complex64::new(1.0, 0.0);
        Self::new(modes, amps)
    }

    /// Single-mode number state `|n>`.
    pub fn number(id: char, cutoff: usize, n: usize) -> Self {
        let mut amps = vec![Complex64::zero(); cutoff + 1];
        amps[n] = Complex64::new(1.0, 0.0);
        Self {
            modes: vec![Mode::new(id, cutoff)],
            amps,
        }
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn mode(&self, id: ModeId) -> Result<Mode> {
        position(&self.modes, id).map(|p| self.modes[p])
    }

    /// Amplitude at an occupation tuple given in mode order.
    pub fn amplitude(&self, occupation: &[usize]) -> Complex64 {
        let strides = strides_of(&self.modes);
        let idx: usize = occupation.iter().zip(&strides).map(|(n, s)| n * s).sum();
        self.amps[idx]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for a in &mut self.amps {
            *a *= s;
        }
        self
    }

    pub fn tensor(&self, other: &MultiModeKet) -> Result<MultiModeKet> {
        for m in &other.modes {
            if self.modes.iter().any(|o| o.id == m.id) {
                return Err(Error::ModeCollision(m.id));
            }
        }
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        let mut modes = self.modes.clone();
        modes.extend_from_slice(&other.modes);
        Ok(MultiModeKet { modes, amps })
    }

    pub fn relabel(&self, pairs: &[(ModeId, ModeId)]) -> Result<MultiModeKet> {
        let mut modes = self.modes.clone();
        for m in &mut modes {
            if let Some(&(_, to)) = pairs.iter().find(|(from, _)| *from == m.id) {
                m.id = to;
            }
        }
        check_distinct(&modes)?;
        Ok(MultiModeKet {
            modes,
            amps: self.amps.clone(),
        })
    }

    /// Reorders the modes; `order` must name every mode exactly once.
    pub fn permute(&self, order: &[ModeId]) -> Result<MultiModeKet> {
        if order.len() != self.modes.len() {
            return Err(Error::LengthMismatch {
                expected: self.modes.len(),
                got: order.len(),
            });
        }
        let pos: Vec<usize> = order
            .iter()
            .map(|&id| position(&self.modes, id))
            .collect::<Result<_>>()?;
        let modes: Vec<Mode> = pos.iter().map(|&p| self.modes[p]).collect();
        check_distinct(&modes)?;
        let map = permutation_map(&self.modes, &pos);
        let amps = map.iter().map(|&i| self.amps[i]).collect();
        Ok(MultiModeKet { modes, amps })
    }

    /// Applies `op` (`(out_cutoff+1) x (cutoff+1)`) to one mode; the mode's
    /// cutoff becomes `op.rows - 1`.
    pub fn apply_local(&self, id: ModeId, op: &CMatrix) -> Result<MultiModeKet> {
        let p = position(&self.modes, id)?;
        let mode = self.modes[p];
        if op.cols != mode.levels() {
            return Err(Error::LengthMismatch {
                expected: mode.levels(),
                got: op.cols,
            });
        }
        let outer: usize = self.modes[..p].iter().map(Mode::levels).product();
        let inner: usize = self.modes[p + 1..].iter().map(Mode::levels).product();
        let nin = mode.levels();
        let nout = op.rows;
        let mut amps = vec![Complex64::zero(); outer * nout * inner];
        for o in 0..outer {
            for r in 0..nout {
                let dst = &mut amps[(o * nout + r) * inner..(o * nout + r + 1) * inner];
                for c in 0..nin {
                    let w = op.get(r, c);
                    if w.is_zero() {
                        continue;
                    }
                    let src = &self.amps[(o * nin + c) * inner..(o * nin + c + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        let mut modes = self.modes.clone();
        modes[p].cutoff = nout - 1;
        Ok(MultiModeKet { modes, amps })
    }

    /// Applies a square operator on the joint space of two modes
    /// (basis index `n1 * levels2 + n2`).
    pub fn apply_pair(&self, m1: ModeId, m2: ModeId, op: &CMatrix) -> Result<MultiModeKet> {
        let p1 = position(&self.modes, m1)?;
        let p2 = position(&self.modes, m2)?;
        let d = self.modes[p1].levels() * self.modes[p2].levels();
        if op.rows != d || op.cols != d {
            return Err(Error::LengthMismatch {
                expected: d,
                got: op.rows,
            });
        }
        let original: Vec<ModeId> = self.modes.iter().map(|m| m.id).collect();
        let mut order: Vec<ModeId> = original
            .iter()
            .copied()
            .filter(|&id| id != m1 && id != m2)
            .collect();
        order.push(m1);
        order.push(m2);
        let moved = self.permute(&order)?;
        let rest = moved.dim() / d;
        let mut amps = vec![Complex64::zero(); moved.dim()];
        for r in 0..rest {
            let src = &moved.amps[r * d..(r + 1) * d];
            let dst = &mut amps[r * d..(r + 1) * d];
            for i in 0..d {
                let mut acc = Complex64::zero();
                for (j, s) in src.iter().enumerate() {
                    acc += op.get(i, j) * s;
                }
                dst[i] = acc;
            }
        }
        MultiModeKet {
            modes: moved.modes,
            amps,
        }
        .permute(&original)
    }

    /// Contracts two modes against `kernel[n1][n2]`, removing both:
    /// `out(rest) = sum kernel[n1][n2] psi(rest, n1, n2)`.
    pub fn contract_pair(
        &self,
        m1: ModeId,
        m2: ModeId,
        kernel: &CMatrix,
    ) -> Result<MultiModeKet> {
        let p1 = position(&self.modes, m1)?;
        let p2 = position(&self.modes, m2)?;
        if kernel.rows != self.modes[p1].levels() || kernel.cols != self.modes[p2].levels() {
            return Err(Error::LengthMismatch {
                expected: self.modes[p1].levels() * self.modes[p2].levels(),
                got: kernel.rows * kernel.cols,
            });
        }
        let mut order: Vec<ModeId> = self
            .modes
            .iter()
            .map(|m| m.id)
            .filter(|&id| id != m1 && id != m2)
            .collect();
        order.push(m1);
        order.push(m2);
        let moved = self.permute(&order)?;
        let d = kernel.data.len();
        let rest = moved.dim() / d;
        let amps = (0..rest)
            .map(|r| {
                moved.amps[r * d..(r + 1) * d]
                    .iter()
                    .zip(&kernel.data)
                    .map(|(a, k)| a * k)
                    .sum()
            })
            .collect();
        let modes = moved.modes[..moved.modes.len() - 2].to_vec();
        Ok(MultiModeKet { modes, amps })
    }

    /// `Tr_rest |psi><psi|`, kept modes in the order given.
    pub fn reduced_density(&self, keep: &[ModeId]) -> Result<MultiModeDensity> {
        for &id in keep {
            position(&self.modes, id)?;
        }
        let mut order: Vec<ModeId> = keep.to_vec();
        order.extend(self.modes.iter().map(|m| m.id).filter(|id| !keep.contains(id)));
        let moved = self.permute(&order)?;
        let kmodes = moved.modes[..keep.len()].to_vec();
        let dk = dim_of(&kmodes);
        let dt = moved.dim() / dk;
        let mut rho = CMatrix::zeros(dk, dk);
        for i in 0..dk {
            let ri = &moved.amps[i * dt..(i + 1) * dt];
            for j in 0..=i {
                let rj = &moved.amps[j * dt..(j + 1) * dt];
                let v: Complex64 = ri.iter().zip(rj).map(|(a, b)| a * b.conj()).sum();
                rho.set(i, j, v);
                rho.set(j, i, v.conj());
            }
        }
        Ok(MultiModeDensity {
            modes: kmodes,
            rho,
        })
    }

    pub fn to_density(&self) -> MultiModeDensity {
        let ids: Vec<ModeId> = self.modes.iter().map(|m| m.id).collect();
        self.reduced_density(&ids).expect("all modes present")
    }
}

/// Density operator over labelled modes; not necessarily normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModeDensity {
    modes: Vec<Mode>,
    rho: CMatrix,
}

/// First and second quadrature moments of a two-mode reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `(<x1>, <p1>, <x2>, <p2>)`.
    pub mean: [f64; 4],
    /// Symmetrized second moments `<{q_i, q_j}>/2` (not centered).
    pub second: Mat4,
}

impl Moments {
    /// Centered covariance matrix.
    pub fn covariance(&self) -> Mat4 {
        let mut v = self.second;
        for (i, row) in v.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x -= self.mean[i] * self.mean[j];
            }
        }
        v
    }
}

impl MultiModeDensity {
    pub fn new(modes: Vec<Mode>, rho: CMatrix) -> Result<Self> {
        check_distinct(&modes)?;
        let dim = dim_of(&modes);
        if rho.rows != dim || rho.cols != dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                got: rho.rows,
            });
        }
        Ok(Self { modes, rho })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.rows
    }

    pub fn element(&self, row: &[usize], col: &[usize]) -> Complex64 {
        let strides = strides_of(&self.modes);
        let i: usize = row.iter().zip(&strides).map(|(n, s)| n * s).sum();
        let j: usize = col.iter().zip(&strides).map(|(n, s)| n * s).sum();
        self.rho.get(i, j)
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn normalized(&self) -> Result<MultiModeDensity> {
        let t = self.trace();
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::NotNormalized(t));
        }
        let mut rho = self.rho.clone();
        rho.scale(Complex64::new(1.0 / t, 0.0));
        Ok(MultiModeDensity {
            modes: self.modes.clone(),
            rho,
        })
    }

    pub fn scaled(&self, s: f64) -> MultiModeDensity {
        let mut rho = self.rho.clone();
        rho.scale(Complex64::new(s, 0.0));
        MultiModeDensity {
            modes: self.modes.clone(),
            rho,
        }
    }

    /// `self + w * other` for densities with identical mode layout.
    pub fn add_scaled(&mut self, other: &MultiModeDensity, w: f64) -> Result<()> {
        if self.modes != other.modes {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        for (a, b) in self.rho.data.iter_mut().zip(&other.rho.data) {
            *a += b * w;
        }
        Ok(())
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self.rho.get(i, j) - self.rho.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.rho)
    }

    /// `Tr rho^2 / (Tr rho)^2`.
    pub fn purity(&self) -> f64 {
        let p: f64 = self.rho.data.iter().map(|v| v.norm_sqr()).sum();
        p / (self.trace() * self.trace())
    }

    /// Von Neumann entropy (bits) of the normalized state.
    pub fn entropy(&self) -> f64 {
        let t = self.trace();
        self.eigenvalues()
            .into_iter()
            .map(|l| l / t)
            .filter(|&l| l > 1e-300)
            .map(|l| -l * l.log2())
            .sum()
    }

    pub fn relabel(&self, pairs: &[(ModeId, ModeId)]) -> Result<MultiModeDensity> {
        let mut modes = self.modes.clone();
        for m in &mut modes {
            if let Some(&(_, to)) = pairs.iter().find(|(from, _)| *from == m.id) {
                m.id = to;
            }
        }
        check_distinct(&modes)?;
        Ok(MultiModeDensity {
            modes,
            rho: self.rho.clone(),
        })
    }

    pub fn permute(&self, order: &[ModeId]) -> Result<MultiModeDensity> {
        if order.len() != self.modes.len() {
            return Err(Error::LengthMismatch {
                expected: self.modes.len(),
                got: order.len(),
            });
        }
        let pos: Vec<usize> = order
            .iter()
            .map(|&id| position(&self.modes, id))
            .collect::<Result<_>>()?;
        let modes: Vec<Mode> = pos.iter().map(|&p| self.modes[p]).collect();
        check_distinct(&modes)?;
        let map = permutation_map(&self.modes, &pos);
        let n = map.len();
        let mut rho = CMatrix::zeros(n, n);
        for (i, &oi) in map.iter().enumerate() {
            for (j, &oj) in map.iter().enumerate() {
                rho.set(i, j, self.rho.get(oi, oj));
            }
        }
        Ok(MultiModeDensity { modes, rho })
    }

    pub fn tensor(&self, other: &MultiModeDensity) -> Result<MultiModeDensity> {
        for m in &other.modes {
            if self.modes.iter().any(|o| o.id == m.id) {
                return Err(Error::ModeCollision(m.id));
            }
        }
        let (d1, d2) = (self.dim(), other.dim());
        let mut rho = CMatrix::zeros(d1 * d2, d1 * d2);
        for i1 in 0..d1 {
            for j1 in 0..d1 {
                let a = self.rho.get(i1, j1);
                if a.is_zero() {
                    continue;
                }
                for i2 in 0..d2 {
                    for j2 in 0..d2 {
                        rho.set(i1 * d2 + i2, j1 * d2 + j2, a * other.rho.get(i2, j2));
                    }
                }
            }
        }
        let mut modes = self.modes.clone();
        modes.extend_from_slice(&other.modes);
        Ok(MultiModeDensity { modes, rho })
    }

    /// Traces out every mode not in `keep`; kept modes in the order given.
    pub fn partial_trace(&self, keep: &[ModeId]) -> Result<MultiModeDensity> {
        for &id in keep {
            position(&self.modes, id)?;
        }
        let mut order: Vec<ModeId> = keep.to_vec();
        order.extend(self.modes.iter().map(|m| m.id).filter(|id| !keep.contains(id)));
        let moved = self.permute(&order)?;
        let kmodes = moved.modes[..keep.len()].to_vec();
        let dk = dim_of(&kmodes);
        let dt = moved.dim() / dk;
        let mut rho = CMatrix::zeros(dk, dk);
        for i in 0..dk {
            for j in 0..dk {
                let mut acc = Complex64::zero();
                for t in 0..dt {
                    acc += moved.rho.get(i * dt + t, j * dt + t);
                }
                rho.set(i, j, acc);
            }
        }
        Ok(MultiModeDensity { modes: kmodes, rho })
    }

    /// `op rho op†` on one mode; the mode's cutoff becomes `op.rows - 1`.
    pub fn apply_local(&self, id: ModeId, op: &CMatrix) -> Result<MultiModeDensity> {
        let p = position(&self.modes, id)?;
        let mode = self.modes[p];
        if op.cols != mode.levels() {
            return Err(Error::LengthMismatch {
                expected: mode.levels(),
                got: op.cols,
            });
        }
        let outer: usize = self.modes[..p].iter().map(Mode::levels).product();
        let inner: usize = self.modes[p + 1..].iter().map(Mode::levels).product();
        let (nin, nout) = (mode.levels(), op.rows);
        let big = |o: usize, k: usize, i: usize, n: usize| (o * n + k) * inner + i;
        let din = self.dim();
        let dout = outer * nout * inner;
        // left multiply: tmp = (I ⊗ op ⊗ I) rho
        let mut tmp = CMatrix::zeros(dout, din);
        for o in 0..outer {
            for i in 0..inner {
                for r in 0..nout {
                    let row = big(o, r, i, nout);
                    for c in 0..nin {
                        let w = op.get(r, c);
                        if w.is_zero() {
                            continue;
                        }
                        let src = big(o, c, i, nin);
                        let srow = &self.rho.data[src * din..(src + 1) * din];
                        let drow = &mut tmp.data[row * din..(row + 1) * din];
                        for (d, s) in drow.iter_mut().zip(srow) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
        // right multiply by (I ⊗ op† ⊗ I)
        let mut out = CMatrix::zeros(dout, dout);
        for row in 0..dout {
            let trow = &tmp.data[row * din..(row + 1) * din];
            let orow = &mut out.data[row * dout..(row + 1) * dout];
            for o in 0..outer {
                for i in 0..inner {
                    for c in 0..nin {
                        let t = trow[big(o, c, i, nin)];
                        if t.is_zero() {
                            continue;
                        }
                        for r in 0..nout {
                            let w = op.get(r, c);
                            if !w.is_zero() {
                                orow[big(o, r, i, nout)] += t * w.conj();
                            }
                        }
                    }
                }
            }
        }
        let mut modes = self.modes.clone();
        modes[p].cutoff = nout - 1;
        Ok(MultiModeDensity { modes, rho: out })
    }

    /// Keeps only elements whose total charge `sum_k w_k n_k` agrees between
    /// row and column: the uniform average over the phase rotations
    /// `exp(i theta sum_k w_k n_k)`.
    pub fn phase_average(&self, weights: &[(ModeId, i32)]) -> Result<MultiModeDensity> {
        let strides = strides_of(&self.modes);
        let mut wpos = Vec::with_capacity(weights.len());
        for &(id, w) in weights {
            wpos.push((position(&self.modes, id)?, w));
        }
        let charge: Vec<i32> = (0..self.dim())
            .map(|i| {
                wpos.iter()
                    .map(|&(p, w)| w * ((i / strides[p]) % self.modes[p].levels()) as i32)
                    .sum()
            })
            .collect();
        let mut rho = self.rho.clone();
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                if charge[i] != charge[j] {
                    rho.set(i, j, Complex64::zero());
                }
            }
        }
        Ok(MultiModeDensity {
            modes: self.modes.clone(),
            rho,
        })
    }

    /// `Tr(rho O)` for an operator mapping basis states of modes `(p1, p2)`
    /// to single basis states: `O|n1 n2> = c |n1' n2'>`.
    fn expect_map<F>(&self, p1: usize, p2: usize, f: F) -> Complex64
    where
        F: Fn(usize, usize) -> Option<(usize, usize, f64)>,
    {
        let strides = strides_of(&self.modes);
        let (s1, s2) = (strides[p1], strides[p2]);
        let (l1, l2) = (self.modes[p1].levels(), self.modes[p2].levels());
        let n = self.dim();
        let mut acc = Complex64::zero();
        for i in 0..n {
            let n1 = (i / s1) % l1;
            let n2 = (i / s2) % l2;
            if let Some((m1, m2, c)) = f(n1, n2) {
                if m1 >= l1 || m2 >= l2 {
                    continue;
                }
                let j = i - n1 * s1 - n2 * s2 + m1 * s1 + m2 * s2;
                acc += self.rho.get(i, j) * c;
            }
        }
        acc
    }

    /// Quadrature moments of modes `(m1, m2)`; the state must have unit trace.
    pub fn moments(&self, m1: ModeId, m2: ModeId) -> Result<Moments> {
        let t = self.trace();
        if (t - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(t));
        }
        if m1 == m2 {
            return Err(Error::ModeCollision(m1));
        }
        let p = [position(&self.modes, m1)?, position(&self.modes, m2)?];
        let sq = |n: usize| (n as f64).sqrt();
        // <a_m>, <a_m a_n>, <a_m† a_n> over mode slots 0/1
        let lower = |k: usize| -> Complex64 {
            if k == 0 {
                self.expect_map(p[0], p[1], |n1, n2| {
                    (n1 >= 1).then(|| (n1 - 1, n2, sq(n1)))
                })
            } else {
                self.expect_map(p[0], p[1], |n1, n2| {
                    (n2 >= 1).then(|| (n1, n2 - 1, sq(n2)))
                })
            }
        };
        let ll = |k: usize, l: usize| -> Complex64 {
            self.expect_map(p[0], p[1], |n1, n2| {
                let mut occ = [n1, n2];
                let mut c = sq(occ[l]);
                occ[l] = occ[l].checked_sub(1)?;
                c *= sq(occ[k]);
                occ[k] = occ[k].checked_sub(1)?;
                Some((occ[0], occ[1], c))
            })
        };
        let rl = |k: usize, l: usize| -> Complex64 {
            self.expect_map(p[0], p[1], |n1, n2| {
                let mut occ = [n1, n2];
                let mut c = sq(occ[l]);
                occ[l] = occ[l].checked_sub(1)?;
                occ[k] += 1;
                c *= sq(occ[k]);
                Some((occ[0], occ[1], c))
            })
        };
        let alpha = [Complex64::new(1.0, 0.0), Complex64::new(0.0, -1.0)];
        let slot = |i: usize| (i / 2, alpha[i % 2]);
        let a1 = [lower(0), lower(1)];
        let a2 = [[ll(0, 0), ll(0, 1)], [ll(1, 0), ll(1, 1)]];
        let n2 = [[rl(0, 0), rl(0, 1)], [rl(1, 0), rl(1, 1)]];
        let mut mean = [0.0; 4];
        let mut second = [[0.0; 4]; 4];
        for i in 0..4 {
            let (m, ai) = slot(i);
            mean[i] = 2.0 * (ai * a1[m]).re;
            for j in 0..4 {
                let (n, aj) = slot(j);
                let mut v = 2.0 * (ai * aj * a2[m][n]).re + 2.0 * (ai.conj() * aj * n2[m][n]).re;
                if m == n {
                    v += (ai * aj.conj()).re;
                }
                second[i][j] = v;
            }
        }
        for i in 0..4 {
            for j in 0..i {
                let s = 0.5 * (second[i][j] + second[j][i]);
                second[i][j] = s;
                second[j][i] = s;
            }
        }
        Ok(Moments { mean, second })
    }
}

/// Guard band added above the working cutoff when building displacements.
/// The last term covers the spread of the top column, `~2|alpha|sqrt(n)`.
pub fn displacement_guard(alpha: Complex64, cutoff: usize) -> usize {
    let g = (4.0 * alpha.norm_sqr()).ceil() as usize;
    let spread = (6.0 * alpha.norm() * ((cutoff + 1) as f64).sqrt()).ceil() as usize;
    let base = 8 + (12.0 * alpha.norm()).ceil() as usize;
    g.max(spread).max(base)
}

/// Matrix of `D(alpha)` from levels `0..=in_cutoff` to `0..=out_cutoff`:
/// the exponential of `alpha a† - conj(alpha) a` on the enlarged space
/// `0..=max(out, in) + guard`, applied to each needed basis column by
/// substepped Taylor series, then cropped.
pub fn displacement_rect(alpha: Complex64, out_cutoff: usize, in_cutoff: usize) -> CMatrix {
    let n = out_cutoff.max(in_cutoff) + displacement_guard(alpha, out_cutoff.max(in_cutoff)) + 1;
    let sq: Vec<f64> = (0..=n).map(|k| (k as f64).sqrt()).collect();
    let bound = 2.0 * alpha.norm() * sq[n];
    let steps = (bound / 0.5).ceil().max(1.0) as usize;
    let h = alpha / steps as f64;
    let hc = h.conj();
    let apply = |v: &[Complex64], out: &mut [Complex64]| {
        for k in 0..n {
            let mut w = Complex64::zero();
            if k > 0 {
                w += h * sq[k] * v[k - 1];
            }
            if k + 1 < n {
                w -= hc * sq[k + 1] * v[k + 1];
            }
            out[k] = w;
        }
    };
    let mut d = CMatrix::zeros(out_cutoff + 1, in_cutoff + 1);
    let mut v = vec![Complex64::zero(); n];
    let mut term = vec![Complex64::zero(); n];
    let mut next = vec![Complex64::zero(); n];
    for col in 0..=in_cutoff {
        v.iter_mut().for_each(|x| *x = Complex64::zero());
        v[col] = Complex64::new(1.0, 0.0);
        for _ in 0..steps {
            term.copy_from_slice(&v);
            for k in 1..60 {
                apply(&term, &mut next);
                let inv = 1.0 / k as f64;
                let mut biggest = 0.0f64;
                for (t, x) in term.iter_mut().zip(&next) {
                    *t = x * inv;
                    biggest = biggest.max(t.norm());
                }
                for (acc, t) in v.iter_mut().zip(&term) {
                    *acc += t;
                }
                if biggest < 1e-18 {
                    break;
                }
            }
        }
        for row in 0..=out_cutoff {
            d.set(row, col, v[row]);
        }
    }
    d
}

/// Dense-exponential construction of the same matrix (reference route).
pub fn displacement_rect_dense(alpha: Complex64, out_cutoff: usize, in_cutoff: usize) -> CMatrix {
    let n = out_cutoff.max(in_cutoff) + displacement_guard(alpha, out_cutoff.max(in_cutoff)) + 1;
    let mut gen = CMatrix::zeros(n, n);
    for k in 0..n - 1 {
        let s = ((k + 1) as f64).sqrt();
        gen.set(k + 1, k, alpha * s);
        gen.set(k, k + 1, -alpha.conj() * s);
    }
    expm(&gen).crop(out_cutoff + 1, in_cutoff + 1)
}

/// Square truncated displacement matrix.
pub fn displacement(alpha: Complex64, cutoff: usize) -> CMatrix {
    displacement_rect(alpha, cutoff, cutoff)
}

/// Truncated annihilation operator.
pub fn annihilation(cutoff: usize) -> CMatrix {
    let mut a = CMatrix::zeros(cutoff + 1, cutoff + 1);
    for n in 1..=cutoff {
        a.set(n - 1, n, Complex64::new((n as f64).sqrt(), 0.0));
    }
    a
}
