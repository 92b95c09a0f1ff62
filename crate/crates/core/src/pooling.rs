//! Pooling PMFs over integer offsets and their 2-D boundary-conditioned products.
//!
//! A pooling PMF `q_sigma(k)` weights how much the feature at offset `k` contributes
//! to the local distribution around a location. The canonical family is the
//! two-sided geometric distribution `q_sigma(k) = tanh(1 / (2 sigma)) * exp(-|k| / sigma)`,
//! which degenerates to the Kronecker delta at `sigma = 0`.

use std::fmt;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::scalar::{compensated_sum, Real};

/// Default bound on the probability mass dropped by truncating an infinite-support PMF.
pub const DEFAULT_TAIL_MASS_BOUND: f64 = 1e-9;

/// Largest one-sided support accepted for a materialized 1-D PMF.
pub const MAX_PMF_RADIUS: usize = 50_000_000;

/// Tolerance on the total mass of a PMF.
pub fn mass_tolerance<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(16.0))
}

/// A PMF over the integer offsets `-radius..=radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolingPmf<T> {
    sigma: T,
    radius: usize,
    weights: Vec<T>,
}

impl<T: Real> PoolingPmf<T> {
    /// Builds a PMF from explicit weights for offsets `-radius..=radius`.
    ///
    /// Only the probability axioms are validated here (nonnegative, unit mass);
    /// pooling-specific properties are checked by [`check_pmf_axioms`].
    pub fn from_weights(sigma: T, radius: usize, weights: Vec<T>) -> Result<Self> {
        if weights.len() != 2 * radius + 1 {
            return Err(invalid(format!(
                "expected {} weights for radius {radius}, got {}",
                2 * radius + 1,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(invalid("PMF weights must be finite and nonnegative"));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - T::one()).abs() > mass_tolerance::<T>() {
            return Err(invalid(format!("PMF weights sum to {total}, not 1")));
        }
        Ok(Self {
            sigma,
            radius,
            weights,
        })
    }

    pub fn delta() -> Self {
        Self {
            sigma: T::zero(),
            radius: 0,
            weights: vec![T::one()],
        }
    }

    #[inline]
    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// Truncation radius `R`: weights are zero for `|k| > R`.
    #[inline]
    pub fn radius(&self) -> usize {
        self.radius
    }

    #[inline]
    pub fn weight(&self, k: i64) -> T {
        let r = self.radius as i64;
        if k < -r || k > r {
            T::zero()
        } else {
            self.weights[(k + r) as usize]
        }
    }

    /// Weights for offsets `-R..=R`, in order.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `(offset, weight)` pairs over the support window.
    pub fn iter(&self) -> impl Iterator<Item = (i64, T)> + '_ {
        let r = self.radius as i64;
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (i as i64 - r, w))
    }

    pub fn total_mass(&self) -> T {
        compensated_sum(self.weights.iter().copied())
    }
}

fn check_sigma<T: Real>(sigma: T) -> Result<()> {
    if !sigma.is_finite() || sigma < T::zero() {
        return Err(invalid(format!("pooling width must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

/// Mass of the untruncated two-sided geometric PMF outside `|k| <= radius`.
pub fn tsg_tail_mass(sigma: f64, radius: usize) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let t = (-1.0 / sigma).exp();
    // 2 * sum_{k > R} c t^k with c = (1 - t) / (1 + t)
    2.0 * (-((radius as f64) + 1.0) / sigma).exp() / (1.0 + t)
}

/// Smallest radius whose dropped tail mass is below `tail_mass_bound`.
pub fn tsg_radius(sigma: f64, tail_mass_bound: f64) -> usize {
    if sigma == 0.0 {
        return 0;
    }
    let t = (-1.0 / sigma).exp();
    let x = sigma * (2.0 / (tail_mass_bound * (1.0 + t))).ln();
    let mut r = if x.is_finite() && x > 0.0 {
        x.floor() as usize
    } else {
        0
    };
    while tsg_tail_mass(sigma, r) >= tail_mass_bound {
        r += 1;
    }
    while r > 0 && tsg_tail_mass(sigma, r - 1) < tail_mass_bound {
        r -= 1;
    }
    r
}

fn check_tail_bound(tail_mass_bound: f64) -> Result<()> {
    if !(tail_mass_bound > 0.0 && tail_mass_bound < 1.0) {
        return Err(invalid(format!(
            "tail mass bound must lie in (0, 1), got {tail_mass_bound}"
        )));
    }
    Ok(())
}

/// Two-sided geometric pooling PMF, truncated once the dropped tail mass falls
/// below `tail_mass_bound` and renormalized. `sigma = 0` gives the Kronecker delta.
pub fn make_tsg_pmf<T: Real>(sigma: T, tail_mass_bound: T) -> Result<PoolingPmf<T>> {
    check_sigma(sigma)?;
    let bound = tail_mass_bound.as_f64();
    check_tail_bound(bound)?;
    if sigma == T::zero() {
        return Ok(PoolingPmf::delta());
    }
    let radius = tsg_radius(sigma.as_f64(), bound);
    if radius > MAX_PMF_RADIUS {
        return Err(invalid(format!(
            "pooling width {sigma} needs support radius {radius}, above {MAX_PMF_RADIUS}"
        )));
    }
    let scale = (T::one() / (T::lit(2.0) * sigma)).tanh();
    let r = radius as i64;
    let mut weights: Vec<T> = (-r..=r)
        .map(|k| scale * (-T::from_i64(k.abs()).unwrap() / sigma).exp())
        .collect();
    let total = compensated_sum(weights.iter().copied());
    for w in &mut weights {
        *w /= total;
    }
    Ok(PoolingPmf {
        sigma,
        radius,
        weights,
    })
}

/// Uniform PMF on `|k| <= floor(sigma)`.
pub fn make_box_pmf<T: Real>(sigma: T) -> Result<PoolingPmf<T>> {
    check_sigma(sigma)?;
    let radius = sigma.floor().to_usize().unwrap_or(usize::MAX);
    if radius > MAX_PMF_RADIUS {
        return Err(invalid("box width too large"));
    }
    let n = 2 * radius + 1;
    let w = T::one() / T::from_usize_lossy(n);
    Ok(PoolingPmf {
        sigma,
        radius,
        weights: vec![w; n],
    })
}

/// A separable 2-D pooling kernel at one location, restricted to the image and
/// renormalized over the offsets that stay in bounds.
///
/// Because the bounds are a rectangle and the two axes are independent, the
/// conditioned product is the product of the two conditioned marginals, so only
/// the marginals are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolingKernel2D<T> {
    sigma: T,
    center: (usize, usize),
    bounds: (usize, usize),
    row_start: usize,
    row_weights: Vec<T>,
    col_start: usize,
    col_weights: Vec<T>,
}

fn check_center(center: (usize, usize), bounds: (usize, usize)) -> Result<()> {
    if center.0 >= bounds.0 || center.1 >= bounds.1 {
        return Err(Error::OutOfBounds {
            row: center.0,
            col: center.1,
            height: bounds.0,
            width: bounds.1,
        });
    }
    Ok(())
}

/// Restricts `weight(k)` for `|k| <= radius` to `[0, extent)` around `center`.
/// Renormalizes only if clipping (or `always_normalize`) demands it.
fn clip_marginal<T: Real>(
    weight: impl Fn(i64) -> T,
    radius: usize,
    center: usize,
    extent: usize,
    always_normalize: bool,
) -> Result<(usize, Vec<T>)> {
    let lo = center.saturating_sub(radius);
    let hi = (center + radius).min(extent - 1);
    let clipped = lo + radius != center || hi != center + radius;
    let mut w: Vec<T> = (lo..=hi)
        .map(|p| weight(p as i64 - center as i64))
        .collect();
    if clipped || always_normalize {
        let total = compensated_sum(w.iter().copied());
        if !(total > T::zero()) {
            return Err(Error::Degenerate(
                "no pooling mass inside the image bounds".into(),
            ));
        }
        for x in &mut w {
            *x /= total;
        }
    }
    Ok((lo, w))
}

/// Product of a 1-D PMF with itself over `(dr, dc)`, conditioned on staying within `bounds`.
pub fn product_kernel_2d<T: Real>(
    pmf: &PoolingPmf<T>,
    center: (usize, usize),
    bounds: (usize, usize),
) -> Result<PoolingKernel2D<T>> {
    check_center(center, bounds)?;
    let (row_start, row_weights) =
        clip_marginal(|k| pmf.weight(k), pmf.radius, center.0, bounds.0, false)?;
    let (col_start, col_weights) =
        clip_marginal(|k| pmf.weight(k), pmf.radius, center.1, bounds.1, false)?;
    Ok(PoolingKernel2D {
        sigma: pmf.sigma,
        center,
        bounds,
        row_start,
        row_weights,
        col_start,
        col_weights,
    })
}

impl<T: Real> PoolingKernel2D<T> {
    /// Two-sided geometric kernel built directly on the clipped window.
    ///
    /// Equivalent to `product_kernel_2d(make_tsg_pmf(sigma, bound), ..)`; offsets
    /// outside the image are never materialized.
    pub fn two_sided_geometric(
        sigma: T,
        center: (usize, usize),
        bounds: (usize, usize),
        tail_mass_bound: T,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        check_center(center, bounds)?;
        let bound = tail_mass_bound.as_f64();
        check_tail_bound(bound)?;
        if sigma == T::zero() {
            return Ok(Self {
                sigma,
                center,
                bounds,
                row_start: center.0,
                row_weights: vec![T::one()],
                col_start: center.1,
                col_weights: vec![T::one()],
            });
        }
        let extent = bounds.0.max(bounds.1);
        let radius = tsg_radius(sigma.as_f64(), bound).min(extent);
        let weight = |k: i64| (-T::from_i64(k.abs()).unwrap() / sigma).exp();
        let (row_start, row_weights) = clip_marginal(weight, radius, center.0, bounds.0, true)?;
        let (col_start, col_weights) = clip_marginal(weight, radius, center.1, bounds.1, true)?;
        Ok(Self {
            sigma,
            center,
            bounds,
            row_start,
            row_weights,
            col_start,
            col_weights,
        })
    }

    /// Builds a kernel from explicit marginals (each must sum to one and stay in bounds).
    pub fn from_marginals(
        sigma: T,
        center: (usize, usize),
        bounds: (usize, usize),
        row_start: usize,
        row_weights: Vec<T>,
        col_start: usize,
        col_weights: Vec<T>,
    ) -> Result<Self> {
        check_center(center, bounds)?;
        for (start, w, extent) in [
            (row_start, &row_weights, bounds.0),
            (col_start, &col_weights, bounds.1),
        ] {
            if w.is_empty() || start + w.len() > extent {
                return Err(invalid("kernel marginal leaves the bounds"));
            }
            if w.iter().any(|x| !x.is_finite() || *x < T::zero()) {
                return Err(invalid("kernel weights must be finite and nonnegative"));
            }
            let total = compensated_sum(w.iter().copied());
            if (total - T::one()).abs() > mass_tolerance::<T>() {
                return Err(invalid(format!("kernel marginal sums to {total}")));
            }
        }
        Ok(Self {
            sigma,
            center,
            bounds,
            row_start,
            row_weights,
            col_start,
            col_weights,
        })
    }

    #[inline]
    pub fn sigma(&self) -> T {
        self.sigma
    }

    #[inline]
    pub fn center(&self) -> (usize, usize) {
        self.center
    }

    #[inline]
    pub fn bounds(&self) -> (usize, usize) {
        self.bounds
    }

    /// Absolute row indices covered, with their marginal weights.
    pub fn rows(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.row_weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (self.row_start + i, w))
    }

    pub fn cols(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.col_weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (self.col_start + i, w))
    }

    pub fn row_start(&self) -> usize {
        self.row_start
    }

    pub fn col_start(&self) -> usize {
        self.col_start
    }

    pub fn row_weights(&self) -> &[T] {
        &self.row_weights
    }

    pub fn col_weights(&self) -> &[T] {
        &self.col_weights
    }

    /// Number of `(dr, dc)` offsets in the support.
    pub fn len(&self) -> usize {
        self.row_weights.len() * self.col_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_delta(&self) -> bool {
        self.len() == 1
    }

    /// Probability of landing at absolute position `(row, col)`.
    pub fn weight_at(&self, row: usize, col: usize) -> T {
        let in_rows = row >= self.row_start && row < self.row_start + self.row_weights.len();
        let in_cols = col >= self.col_start && col < self.col_start + self.col_weights.len();
        if in_rows && in_cols {
            self.row_weights[row - self.row_start] * self.col_weights[col - self.col_start]
        } else {
            T::zero()
        }
    }

    /// `((dr, dc), probability)` over the support, row-major.
    pub fn offsets(&self) -> impl Iterator<Item = ((i64, i64), T)> + '_ {
        let (cr, cc) = (self.center.0 as i64, self.center.1 as i64);
        self.rows().flat_map(move |(r, wr)| {
            self.cols()
                .map(move |(c, wc)| ((r as i64 - cr, c as i64 - cc), wr * wc))
        })
    }
}

/// The pooling-PMF properties P.1 through P.6.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Axiom {
    Symmetry,
    Monotone,
    Delta,
    Continuity,
    TailMonotone,
    Vanishing,
}

impl Axiom {
    pub const ALL: [Axiom; 6] = [
        Axiom::Symmetry,
        Axiom::Monotone,
        Axiom::Delta,
        Axiom::Continuity,
        Axiom::TailMonotone,
        Axiom::Vanishing,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Axiom::Symmetry => "P.1",
            Axiom::Monotone => "P.2",
            Axiom::Delta => "P.3",
            Axiom::Continuity => "P.4",
            Axiom::TailMonotone => "P.5",
            Axiom::Vanishing => "P.6",
        }
    }
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Axiom::Symmetry => "symmetry",
            Axiom::Monotone => "monotone in |k|",
            Axiom::Delta => "delta at sigma=0",
            Axiom::Continuity => "continuity at sigma=0",
            Axiom::TailMonotone => "tail nondecreasing near sigma=0",
            Axiom::Vanishing => "pointwise vanishing for large sigma",
        };
        write!(f, "{} {}", self.label(), name)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomCheck {
    pub axiom: Axiom,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AxiomReport {
    pub checks: Vec<AxiomCheck>,
    /// Caveat on what a finite sample of widths can certify.
    pub note: String,
}

impl AxiomReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, axiom: Axiom) -> Option<&AxiomCheck> {
        self.checks.iter().find(|c| c.axiom == axiom)
    }

    pub fn passed(&self, axiom: Axiom) -> bool {
        self.check(axiom).is_some_and(|c| c.passed)
    }
}

/// The sampled grid on which pooling axioms are evaluated.
#[derive(Clone, Debug)]
pub struct AxiomGrid<T> {
    /// Ascending pooling widths, including 0.
    pub sigmas: Vec<T>,
    /// Offsets `|k| <= max_offset` are examined.
    pub max_offset: usize,
    /// Widths `<= near_zero` form the neighbourhood of 0 for P.4 and P.5.
    pub near_zero: T,
    /// The `K` of P.5.
    pub tail_start: usize,
    /// P.6 passes if every weight at the largest width is below this.
    pub vanish_threshold: T,
    /// P.4 passes if the deviation from the delta at the smallest positive width is below this.
    pub continuity_tol: T,
}

impl<T: Real> AxiomGrid<T> {
    pub fn new(sigmas: Vec<T>) -> Self {
        Self {
            sigmas,
            max_offset: 100_000,
            near_zero: T::one(),
            tail_start: 1,
            vanish_threshold: T::lit(1e-3),
            continuity_tol: T::lit(1e-6),
        }
    }
}

/// Evaluates P.1 to P.6 for the PMF family produced by `builder` on a finite grid.
///
/// Violations are reported, not returned as errors; an error means the grid itself
/// is unusable or the builder failed.
pub fn check_pmf_axioms<T, F>(grid: &AxiomGrid<T>, builder: F) -> Result<AxiomReport>
where
    T: Real,
    F: Fn(T) -> Result<PoolingPmf<T>>,
{
    let sigmas = &grid.sigmas;
    if sigmas.is_empty() {
        return Err(invalid("axiom grid needs at least one width"));
    }
    if sigmas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("axiom grid widths must be strictly ascending"));
    }
    if sigmas[0] != T::zero() {
        return Err(invalid("axiom grid must include sigma = 0"));
    }
    let pmfs = sigmas
        .iter()
        .map(|&s| builder(s))
        .collect::<Result<Vec<_>>>()?;
    let reach = |p: &PoolingPmf<T>| p.radius().min(grid.max_offset) as i64;

    let mut checks = Vec::with_capacity(6);

    // P.1
    let mut violation = None;
    'p1: for (s, p) in sigmas.iter().zip(&pmfs) {
        for k in 1..=reach(p) {
            if p.weight(k) != p.weight(-k) {
                violation = Some(format!(
                    "sigma={s}: q({k})={} != q(-{k})={}",
                    p.weight(k),
                    p.weight(-k)
                ));
                break 'p1;
            }
        }
    }
    checks.push(finish(Axiom::Symmetry, violation, "q(k) = q(-k) on every sampled width"));

    // P.2, literally: |k| <= |k'| implies q(k) >= q(k')
    let mut violation = None;
    'p2: for (s, p) in sigmas.iter().zip(&pmfs) {
        let top = reach(p) + 1;
        for m in 0..=top {
            let (a, b) = (p.weight(m), p.weight(-m));
            let lo = a.min(b);
            if a != b {
                violation = Some(format!("sigma={s}: q({m}) and q(-{m}) differ"));
                break 'p2;
            }
            let next_hi = p.weight(m + 1).max(p.weight(-m - 1));
            if m < top && lo < next_hi {
                violation = Some(format!("sigma={s}: q at |k|={m} below q at |k|={}", m + 1));
                break 'p2;
            }
        }
    }
    checks.push(finish(Axiom::Monotone, violation, "nonincreasing in |k|"));

    // P.3
    let zero = &pmfs[0];
    let delta_ok = zero.weight(0) == T::one() && zero.iter().all(|(k, w)| k == 0 || w == T::zero());
    checks.push(finish(
        Axiom::Delta,
        (!delta_ok).then(|| format!("q_0(0) = {}", zero.weight(0))),
        "q_0 is the Kronecker delta",
    ));

    // P.4: max_k |q_sigma(k) - q_0(k)| shrinks to zero as sigma decreases to 0
    let deviation = |p: &PoolingPmf<T>| {
        let r = reach(p).max(reach(zero));
        (-r..=r)
            .map(|k| (p.weight(k) - zero.weight(k)).abs())
            .fold(T::zero(), T::max)
    };
    let near: Vec<(T, T)> = sigmas
        .iter()
        .zip(&pmfs)
        .skip(1)
        .filter(|(s, _)| **s <= grid.near_zero)
        .map(|(s, p)| (*s, deviation(p)))
        .collect();
    let violation = match near.first() {
        None => Some(format!("no positive width <= {} in the grid", grid.near_zero)),
        Some(&(s, dev)) if dev > grid.continuity_tol => Some(format!(
            "deviation {dev} at sigma={s} exceeds {}",
            grid.continuity_tol
        )),
        _ => near
            .windows(2)
            .find(|w| w[1].1 < w[0].1)
            .map(|w| format!("deviation not monotone between sigma={} and sigma={}", w[0].0, w[1].0)),
    };
    checks.push(finish(
        Axiom::Continuity,
        violation,
        "deviation from the delta shrinks toward sigma=0",
    ));

    // P.5
    let near_idx: Vec<usize> = (0..sigmas.len())
        .filter(|&i| sigmas[i] <= grid.near_zero)
        .collect();
    let span = near_idx.iter().map(|&i| reach(&pmfs[i])).max().unwrap_or(0) + 1;
    let mut violation = None;
    'p5: for w in near_idx.windows(2) {
        let (a, b) = (&pmfs[w[0]], &pmfs[w[1]]);
        for m in (grid.tail_start as i64)..=span.min(grid.max_offset as i64) {
            for k in [m, -m] {
                if b.weight(k) < a.weight(k) {
                    violation = Some(format!(
                        "q({k}) decreases from sigma={} to sigma={}",
                        sigmas[w[0]], sigmas[w[1]]
                    ));
                    break 'p5;
                }
            }
        }
    }
    checks.push(finish(
        Axiom::TailMonotone,
        violation,
        &format!(
            "q(k) nondecreasing in sigma over [0, {}] for |k| >= {}",
            grid.near_zero, grid.tail_start
        ),
    ));

    // P.6
    let last = pmfs.last().unwrap();
    let peak = {
        let r = reach(last);
        (-r..=r).map(|k| last.weight(k)).fold(T::zero(), T::max)
    };
    let s_max = *sigmas.last().unwrap();
    checks.push(finish(
        Axiom::Vanishing,
        (peak > grid.vanish_threshold).then(|| {
            format!(
                "max weight {peak} at sigma={s_max} exceeds {}",
                grid.vanish_threshold
            )
        }),
        &format!("max weight at sigma={s_max} is {peak}"),
    ));

    Ok(AxiomReport {
        checks,
        note: "P.4 and P.5 quantify over a neighbourhood of sigma = 0; the check samples \
               the provided grid and cannot certify them universally"
            .into(),
    })
}

fn finish(axiom: Axiom, violation: Option<String>, ok: &str) -> AxiomCheck {
    match violation {
        Some(detail) => AxiomCheck {
            axiom,
            passed: false,
            detail,
        },
        None => AxiomCheck {
            axiom,
            passed: true,
            detail: ok.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_at_zero_width() {
        let p = make_tsg_pmf(0.0f64, 1e-12).unwrap();
        assert_eq!(p.radius(), 0);
        assert_eq!(p.weight(0), 1.0);
        assert_eq!(p.weight(1), 0.0);
    }

    #[test]
    fn unit_width_closed_form() {
        let p = make_tsg_pmf(1.0f64, 1e-12).unwrap();
        let e = std::f64::consts::E;
        let q0 = (e - 1.0) / (e + 1.0);
        assert!((p.weight(0) - q0).abs() < 1e-12);
        assert!((p.weight(0) - 0.462117).abs() < 1e-6);
        assert!((p.weight(1) - q0 / e).abs() < 1e-12);
        assert!((p.weight(1) - 0.170003).abs() < 1e-6);
        assert_eq!(p.weight(1), p.weight(-1));
    }

    #[test]
    fn wide_pmf_radius_and_peak() {
        let sigma = 4000.0f64;
        let bound = 1e-6;
        let p = make_tsg_pmf(sigma, bound).unwrap();
        // direct summation of the unnormalized tail beyond R
        let c = (1.0 / (2.0 * sigma)).tanh();
        let r = p.radius();
        let kept: f64 = (-(r as i64)..=r as i64)
            .map(|k| c * (-(k.abs() as f64) / sigma).exp())
            .sum();
        assert!(1.0 - kept < bound);
        let kept_smaller: f64 = (-(r as i64 - 1)..=(r as i64 - 1))
            .map(|k| c * (-(k.abs() as f64) / sigma).exp())
            .sum();
        assert!(1.0 - kept_smaller >= bound);
        assert!((c - 1.25e-4).abs() < 1e-9);
        assert!((p.weight(0) - c).abs() / c < 1e-5);
        let ratio = p.weight(1000) / p.weight(0);
        assert!((ratio - (-0.25f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(make_tsg_pmf(-1.0f64, 1e-9).is_err());
        assert!(make_tsg_pmf(1.0f64, 0.0).is_err());
        assert!(make_tsg_pmf(1.0f64, 1.0).is_err());
        assert!(make_tsg_pmf(f64::NAN, 1e-9).is_err());
    }

    #[test]
    fn kernel_at_corner_keeps_one_quadrant() {
        let p = make_tsg_pmf(1.0f64, 1e-9).unwrap();
        let k = product_kernel_2d(&p, (0, 0), (100, 100)).unwrap();
        assert!(k.offsets().all(|((dr, dc), _)| dr >= 0 && dc >= 0));
        let total: f64 = k.offsets().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delta_kernel() {
        let p = make_tsg_pmf(0.0f64, 1e-9).unwrap();
        let k = product_kernel_2d(&p, (5, 5), (10, 10)).unwrap();
        let offs: Vec<_> = k.offsets().collect();
        assert_eq!(offs, vec![((0, 0), 1.0)]);
    }

    #[test]
    fn kernel_rejects_center_outside() {
        let p = make_tsg_pmf(1.0f64, 1e-9).unwrap();
        assert!(product_kernel_2d(&p, (10, 0), (10, 10)).is_err());
    }

    #[test]
    fn direct_tsg_kernel_matches_product_route() {
        for &(sigma, center) in &[(1.5f64, (3usize, 40usize)), (30.0, (0, 0)), (4000.0, (20, 31))] {
            let p = make_tsg_pmf(sigma, 1e-9).unwrap();
            let a = product_kernel_2d(&p, center, (48, 64)).unwrap();
            let b = PoolingKernel2D::two_sided_geometric(sigma, center, (48, 64), 1e-9).unwrap();
            for r in 0..48 {
                for c in 0..64 {
                    assert!((a.weight_at(r, c) - b.weight_at(r, c)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn box_family_passes_core_axioms() {
        let grid = AxiomGrid::new(vec![0.0f64, 0.01, 0.1, 1.0, 10.0, 1e4]);
        let report = check_pmf_axioms(&grid, make_box_pmf).unwrap();
        for a in [
            Axiom::Symmetry,
            Axiom::Monotone,
            Axiom::Delta,
            Axiom::Continuity,
            Axiom::Vanishing,
        ] {
            assert!(report.passed(a), "{a}: {:?}", report.check(a));
        }
    }

    #[test]
    fn shifted_pmf_fails_symmetry() {
        let grid = AxiomGrid::new(vec![0.0f64, 0.1, 1.0, 100.0]);
        let shifted = |s: f64| {
            let p = make_tsg_pmf(s, 1e-9)?;
            if s == 0.0 {
                return Ok(p);
            }
            let mut w = p.weights().to_vec();
            w.rotate_right(1);
            PoolingPmf::from_weights(s, p.radius(), w)
        };
        let report = check_pmf_axioms(&grid, shifted).unwrap();
        assert!(!report.passed(Axiom::Symmetry));
        assert!(!report.all_passed());
    }

    #[test]
    fn grid_preconditions() {
        let f = |s| make_tsg_pmf(s, 1e-9);
        assert!(check_pmf_axioms(&AxiomGrid::new(Vec::<f64>::new()), f).is_err());
        assert!(check_pmf_axioms(&AxiomGrid::new(vec![0.1f64, 1.0]), f).is_err());
        assert!(check_pmf_axioms(&AxiomGrid::new(vec![0.0f64, 1.0, 0.5]), f).is_err());
    }

    #[test]
    fn f32_pmf_is_normalized() {
        let p = make_tsg_pmf(3.0f32, 1e-6).unwrap();
        assert!((p.total_mass() - 1.0).abs() < 1e-6);
    }
}
