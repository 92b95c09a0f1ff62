//! Limited-memory BFGS with a strong-Wolfe line search, plus an Adam fallback.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub window: usize,
    pub rel_improvement: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            window: 200,
            rel_improvement: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Stops on line-search failure.
    Lbfgs,
    /// Switches to Adam on line-search failure.
    AdamFallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIter,
    EarlyStop,
    LineSearchFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbfgsConfig {
    pub max_iterations: usize,
    pub memory: usize,
    pub early_stop: EarlyStop,
    /// Converged once every gradient component is at most this in magnitude.
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
    pub optimizer: Optimizer,
    pub adam_step: f64,
    /// Re-evaluate at the start of every iteration (the objective reads the iteration counter).
    pub resample_each_iteration: bool,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 4000,
            memory: 20,
            early_stop: EarlyStop::default(),
            grad_tol: 1e-12,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
            optimizer: Optimizer::AdamFallback,
            adam_step: 0.01,
            resample_each_iteration: false,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be >= 1"));
        }
        if self.memory == 0 {
            return Err(invalid("L-BFGS memory must be >= 1"));
        }
        if !(self.early_stop.rel_improvement > 0.0) || self.early_stop.window == 0 {
            return Err(invalid("early stop needs window >= 1 and rel_improvement > 0"));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(invalid("line search needs 0 < c1 < c2 < 1"));
        }
        if self.max_line_search == 0 || !(self.adam_step > 0.0) {
            return Err(invalid("max_line_search and adam_step must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimTrace<T> {
    /// Loss at the start and after each iteration.
    pub losses: Vec<T>,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub evaluations: usize,
    /// Iteration at which Adam took over, if it did.
    pub fallback_at: Option<usize>,
    #[serde(skip)]
    pub x: Vec<T>,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn max_abs<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

fn axpy<T: Real>(x: &[T], alpha: T, p: &[T]) -> Vec<T> {
    x.iter().zip(p).map(|(&a, &b)| a + alpha * b).collect()
}

fn checked<T: Real>(v: (T, Vec<T>), n: usize) -> Result<(T, Vec<T>)> {
    if v.1.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "gradient has {} entries, expected {n}",
            v.1.len()
        )));
    }
    Ok(v)
}

struct Point<T> {
    alpha: T,
    f: T,
    g: Vec<T>,
    dphi: T,
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, safeguarded to the
/// middle of the bracket.
fn cubic_step<T: Real>(a: T, fa: T, da: T, b: T, fb: T, db: T) -> T {
    let d1 = da + db - T::lit(3.0) * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let lo = a.min(b);
    let hi = a.max(b);
    let width = hi - lo;
    let fallback = (a + b) * T::lit(0.5);
    if !(disc >= T::zero()) {
        return fallback;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * ((db + d2 - d1) / (db - da + T::lit(2.0) * d2));
    if t.is_finite() && t > lo + T::lit(0.1) * width && t < hi - T::lit(0.1) * width {
        t
    } else {
        fallback
    }
}

enum Search<T> {
    Found(Point<T>),
    Failed(Option<Point<T>>),
}

/// Strong-Wolfe line search along `p` from `x` (Nocedal and Wright, algorithms 3.5 and 3.6).
#[allow(clippy::too_many_arguments)]
fn line_search<T, F>(
    f: &mut F,
    counter: u64,
    x: &[T],
    f0: T,
    d0: T,
    p: &[T],
    alpha0: T,
    cfg: &LbfgsConfig,
    evals: &mut usize,
) -> Result<Search<T>>
where
    T: Real,
    F: FnMut(&[T], u64) -> Result<(T, Vec<T>)>,
{
    let c1 = T::lit(cfg.c1);
    let c2 = T::lit(cfg.c2);
    let n = x.len();
    let mut eval = |alpha: T, evals: &mut usize| -> Result<Point<T>> {
        *evals += 1;
        let (fv, g) = checked(f(&axpy(x, alpha, p), counter)?, n)?;
        let dphi = dot(&g, p);
        Ok(Point {
            alpha,
            f: fv,
            g,
            dphi,
        })
    };
    let armijo = |pt: &Point<T>| pt.f.is_finite() && pt.f <= f0 + c1 * pt.alpha * d0;
    let mut best: Option<Point<T>> = None;
    let keep = |best: &mut Option<Point<T>>, pt: &Point<T>| {
        if armijo(pt) && best.as_ref().is_none_or(|b| pt.f < b.f) {
            *best = Some(Point {
                alpha: pt.alpha,
                f: pt.f,
                g: pt.g.clone(),
                dphi: pt.dphi,
            });
        }
    };

    let mut prev = Point {
        alpha: T::zero(),
        f: f0,
        g: Vec::new(),
        dphi: d0,
    };
    let mut alpha = alpha0;
    let mut used = 0;
    let (mut lo, mut hi);
    loop {
        if used >= cfg.max_line_search {
            return Ok(Search::Failed(best));
        }
        used += 1;
        let cur = eval(alpha, evals)?;
        keep(&mut best, &cur);
        if !cur.f.is_finite() || !armijo(&cur) || (used > 1 && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if cur.dphi.abs() <= -c2 * d0 {
            return Ok(Search::Found(cur));
        }
        if cur.dphi >= T::zero() {
            lo = cur;
            hi = prev;
            break;
        }
        prev = cur;
        alpha *= T::lit(2.0);
    }
    // zoom
    loop {
        if used >= cfg.max_line_search {
            return Ok(Search::Failed(best));
        }
        used += 1;
        let a = if hi.f.is_finite() && lo.f.is_finite() {
            cubic_step(lo.alpha, lo.f, lo.dphi, hi.alpha, hi.f, hi.dphi)
        } else {
            (lo.alpha + hi.alpha) * T::lit(0.5)
        };
        if (hi.alpha - lo.alpha).abs() <= T::epsilon() * lo.alpha.abs().max(T::one()) {
            return Ok(Search::Failed(best));
        }
        let cur = eval(a, evals)?;
        keep(&mut best, &cur);
        if !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.dphi.abs() <= -c2 * d0 {
                return Ok(Search::Found(cur));
            }
            if cur.dphi * (hi.alpha - lo.alpha) >= T::zero() {
                hi = lo;
            }
            lo = cur;
        }
    }
}

struct EarlyStopTracker<T> {
    best: Vec<T>,
    cfg: EarlyStop,
}

impl<T: Real> EarlyStopTracker<T> {
    fn push(&mut self, loss: T) -> bool {
        let b = match self.best.last() {
            Some(&prev) => prev.min(loss),
            None => loss,
        };
        self.best.push(b);
        let t = self.best.len() - 1;
        if t < self.cfg.window {
            return false;
        }
        let old = self.best[t - self.cfg.window];
        if old == T::zero() {
            return true;
        }
        (old - b) / old.abs() < T::lit(self.cfg.rel_improvement)
    }
}

/// Minimizes `f(x, iteration)` from `x0`.
///
/// The iteration counter lets stochastic objectives fix their randomness per
/// iteration; every evaluation inside one line search sees the same counter.
pub fn lbfgs_minimize<T, F>(mut f: F, x0: Vec<T>, cfg: &LbfgsConfig) -> Result<OptimTrace<T>>
where
    T: Real,
    F: FnMut(&[T], u64) -> Result<(T, Vec<T>)>,
{
    cfg.validate()?;
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = checked(f(&x, 0)?, n)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at the starting point".into()));
    }
    let mut evals = 1usize;
    let mut losses = vec![fx];
    let mut tracker = EarlyStopTracker {
        best: Vec::new(),
        cfg: cfg.early_stop,
    };
    tracker.push(fx);
    let mut pairs: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(cfg.memory);
    let grad_tol = T::lit(cfg.grad_tol);

    let finish = |losses: Vec<T>, reason, iterations, evals, fallback_at, x| OptimTrace {
        losses,
        stop_reason: reason,
        iterations,
        evaluations: evals,
        fallback_at,
        x,
    };

    for it in 1..=cfg.max_iterations {
        let counter = it as u64;
        if cfg.resample_each_iteration {
            let (fv, gv) = checked(f(&x, counter)?, n)?;
            evals += 1;
            fx = fv;
            g = gv;
        }
        if max_abs(&g) <= grad_tol {
            return Ok(finish(losses, StopReason::EarlyStop, it - 1, evals, None, x));
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = *rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * *yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * *si;
            }
        }
        let mut p: Vec<T> = q.into_iter().map(|v| -v).collect();
        let mut d0 = dot(&g, &p);
        if !(d0 < T::zero()) {
            pairs.clear();
            p = g.iter().map(|v| -*v).collect();
            d0 = dot(&g, &p);
        }
        let alpha0 = if pairs.is_empty() {
            (T::one() / max_abs(&g)).min(T::one())
        } else {
            T::one()
        };
        let found = match line_search(&mut f, counter, &x, fx, d0, &p, alpha0, cfg, &mut evals)? {
            Search::Found(pt) => Some(pt),
            Search::Failed(best) => best,
        };
        let Some(pt) = found else {
            return match cfg.optimizer {
                Optimizer::Lbfgs => Ok(finish(
                    losses,
                    StopReason::LineSearchFailure,
                    it - 1,
                    evals,
                    None,
                    x,
                )),
                Optimizer::AdamFallback => adam_continue(&mut f, x, fx, g, it, losses, tracker, evals, cfg),
            };
        };
        let s: Vec<T> = p.iter().map(|&v| pt.alpha * v).collect();
        let y: Vec<T> = pt.g.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s.clone(), y, T::one() / sy));
        }
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += *si;
        }
        fx = pt.f;
        g = pt.g;
        losses.push(fx);
        if tracker.push(fx) {
            return Ok(finish(losses, StopReason::EarlyStop, it, evals, None, x));
        }
    }
    Ok(finish(losses, StopReason::MaxIter, cfg.max_iterations, evals, None, x))
}

#[allow(clippy::too_many_arguments)]
fn adam_continue<T, F>(
    f: &mut F,
    mut x: Vec<T>,
    mut fx: T,
    mut g: Vec<T>,
    start: usize,
    mut losses: Vec<T>,
    mut tracker: EarlyStopTracker<T>,
    mut evals: usize,
    cfg: &LbfgsConfig,
) -> Result<OptimTrace<T>>
where
    T: Real,
    F: FnMut(&[T], u64) -> Result<(T, Vec<T>)>,
{
    let n = x.len();
    let (b1, b2, eps) = (T::lit(0.9), T::lit(0.999), T::lit(1e-8));
    let lr = T::lit(cfg.adam_step);
    let mut m = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut best = (fx, x.clone());
    let mut reason = StopReason::MaxIter;
    let mut last = cfg.max_iterations;
    for (k, it) in (start..=cfg.max_iterations).enumerate() {
        let t = (k + 1) as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        for i in 0..n {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            x[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
        let (fv, gv) = checked(f(&x, it as u64)?, n)?;
        evals += 1;
        if !fv.is_finite() {
            return Err(Error::NonFinite(format!("objective at iteration {it}")));
        }
        fx = fv;
        g = gv;
        if fx < best.0 {
            best = (fx, x.clone());
        }
        losses.push(fx);
        if tracker.push(fx) {
            reason = StopReason::EarlyStop;
            last = it;
            break;
        }
    }
    Ok(OptimTrace {
        losses,
        stop_reason: reason,
        iterations: last,
        evaluations: evals,
        fallback_at: Some(start),
        x: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(c: Vec<f64>) -> impl FnMut(&[f64], u64) -> Result<(f64, Vec<f64>)> {
        move |x, _| {
            let f = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            let g = x.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect();
            Ok((f, g))
        }
    }

    #[test]
    fn quadratic_converges() {
        let c: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        let tr = lbfgs_minimize(quad(c.clone()), vec![0.0; 10], &LbfgsConfig::default()).unwrap();
        assert!(tr.iterations <= 50);
        for (a, b) in tr.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], _| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((v, g))
        };
        let cfg = LbfgsConfig {
            max_iterations: 200,
            ..Default::default()
        };
        let tr = lbfgs_minimize(f, vec![-1.2, 1.0], &cfg).unwrap();
        assert!(*tr.losses.last().unwrap() < 1e-6, "{:?}", tr.losses.last());
        assert!(tr.losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn already_optimal() {
        let c = vec![1.0, 2.0];
        let tr = lbfgs_minimize(quad(c.clone()), c, &LbfgsConfig::default()).unwrap();
        assert_eq!(tr.stop_reason, StopReason::EarlyStop);
        assert!(tr.iterations <= LbfgsConfig::default().early_stop.window + 1);
    }

    #[test]
    fn non_finite_start() {
        let f = |_: &[f64], _| Ok((f64::NAN, vec![0.0]));
        assert!(lbfgs_minimize(f, vec![0.0], &LbfgsConfig::default()).is_err());
    }

    #[test]
    fn line_search_failure_reported_or_recovered() {
        // gradient points the wrong way: no descent step exists along -g
        let f = |x: &[f64], _| Ok((x[0], vec![-1.0]));
        let cfg = LbfgsConfig {
            optimizer: Optimizer::Lbfgs,
            max_iterations: 10,
            ..Default::default()
        };
        let tr = lbfgs_minimize(f, vec![0.0], &cfg).unwrap();
        assert_eq!(tr.stop_reason, StopReason::LineSearchFailure);
        let cfg = LbfgsConfig {
            optimizer: Optimizer::AdamFallback,
            ..cfg
        };
        let tr = lbfgs_minimize(f, vec![0.0], &cfg).unwrap();
        assert_eq!(tr.fallback_at, Some(1));
    }
}
