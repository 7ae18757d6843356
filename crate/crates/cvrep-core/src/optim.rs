//! Derivative-free minimizers: bounded Nelder–Mead and Brent's scalar method.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the simplex spread in `f` falls below this.
    pub f_tol: f64,
    /// Stop when every vertex lies within this distance of the best one.
    pub x_tol: f64,
    /// Initial step per coordinate, as a fraction of the box width.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 400,
            f_tol: 1e-10,
            x_tol: 1e-6,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.max(*l).min(*h);
    }
}

/// Nelder–Mead inside the box `[lo, hi]` (trial points are projected onto
/// the box). Projection can flatten the simplex against a face, so after
/// convergence a fresh simplex is built at the best point until that stops
/// helping.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut m = nm_run(&mut f, x0, lo, hi, opts, 0);
    for _ in 0..4 {
        if !m.converged || m.evals >= opts.max_evals {
            break;
        }
        let again = nm_run(&mut f, &m.x.clone(), lo, hi, opts, m.evals);
        let gain = m.f - again.f;
        let done = gain <= opts.f_tol * (1.0 + m.f.abs());
        if again.f <= m.f {
            m = again;
        } else {
            m.evals = again.evals;
        }
        if done {
            break;
        }
    }
    m
}

fn nm_run<F>(
    f: &mut F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
    used: usize,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = used;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut start = x0.to_vec();
    clamp_into(&mut start, lo, hi);
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for i in 0..n {
        let mut v = start.clone();
        let step = opts.initial_step * (hi[i] - lo[i]);
        v[i] = if v[i] + step <= hi[i] { v[i] + step } else { v[i] - step };
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();
    let mut converged = false;
    while evals < opts.max_evals {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap_or(core::cmp::Ordering::Equal));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        fv = idx.iter().map(|&i| fv[i]).collect();
        let spread_f = (fv[n] - fv[0]).abs();
        let spread_x = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread_f <= opts.f_tol * (1.0 + fv[0].abs()) && spread_x <= opts.x_tol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp_into(&mut p, lo, hi);
            p
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < fv[0] {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
        } else if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
        } else {
            let (xc, fc) = if fr < fv[n] {
                let x = along(0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < fv[n].min(fr) {
                simplex[n] = xc;
                fv[n] = fc;
            } else {
                for i in 1..=n {
                    let p: Vec<f64> = simplex[i]
                        .iter()
                        .zip(&simplex[0])
                        .map(|(v, b)| b + 0.5 * (v - b))
                        .collect();
                    fv[i] = eval(&p, &mut evals);
                    simplex[i] = p;
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap_or(core::cmp::Ordering::Equal))
        .unwrap();
    Minimum {
        x: simplex[best].clone(),
        f: fv[best],
        evals,
        converged,
    }
}

/// Nelder–Mead from several starting points; the best result wins, ties
/// resolved by start order.
pub fn nelder_mead_restarts<F>(
    mut f: F,
    starts: &[Vec<f64>],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut best: Option<Minimum> = None;
    let mut total = 0;
    for s in starts {
        let m = nelder_mead(&mut f, s, lo, hi, opts);
        total += m.evals;
        if best.as_ref().map_or(true, |b| m.f < b.f) {
            best = Some(m);
        }
    }
    let mut b = best.expect("at least one start");
    b.evals = total;
    b
}

/// Brent minimization of a scalar function on `[a, b]`.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Minimum {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut evals = 1;
    let mut converged = false;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            converged = true;
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        evals += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Minimum {
        x: vec![x],
        f: fx,
        evals,
        converged,
    }
}

/// Brent on the best bracket of a uniform pre-scan (guards against
/// multimodal or flat objectives).
pub fn scan_then_brent<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    samples: usize,
    tol: f64,
) -> Minimum {
    let samples = samples.max(3);
    let h = (b - a) / (samples - 1) as f64;
    let vals: Vec<f64> = (0..samples).map(|i| f(a + h * i as f64)).collect();
    let k = (0..samples)
        .min_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap_or(core::cmp::Ordering::Equal))
        .unwrap();
    let lo = a + h * k.saturating_sub(1) as f64;
    let hi = a + h * (k + 1).min(samples - 1) as f64;
    let mut m = brent(&mut f, lo, hi, tol, 200);
    if vals[k] < m.f {
        m.x = vec![a + h * k as f64];
        m.f = vals[k];
    }
    m.evals += samples;
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_evals: 4000,
            f_tol: 1e-14,
            x_tol: 1e-9,
            initial_step: 0.1,
        };
        let m = nelder_mead(f, &[-1.0, 1.5], &[-3.0, -3.0], &[3.0, 3.0], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn respects_box() {
        let f = |x: &[f64]| (x[0] - 5.0).powi(2) + x[1].powi(2);
        let m = nelder_mead(f, &[0.0, 0.5], &[-1.0, -1.0], &[2.0, 1.0], &Default::default());
        assert!((m.x[0] - 2.0).abs() < 1e-5 && m.x[1].abs() < 1e-3);
    }

    #[test]
    fn brent_parabola_and_cosine() {
        let m = brent(|x| (x - 0.3).powi(2) + 1.0, -2.0, 2.0, 1e-10, 200);
        assert!(m.converged && (m.x[0] - 0.3).abs() < 1e-8);
        let m = scan_then_brent(|x| x.cos(), 0.0, 6.0, 13, 1e-10);
        assert!((m.x[0] - core::f64::consts::PI).abs() < 1e-7);
    }
}
