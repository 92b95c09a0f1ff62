//! Numerical checks of the small- and large-width limits of pooled distortion on
//! scalar two-sided sequences.

use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortion::wasserstein::{exact_w_p_1d, WeightedEmpirical};
use crate::error::{invalid, Error, Result};
use crate::pooling::{make_tsg_pmf, PoolingPmf, DEFAULT_TAIL_MASS_BOUND};
use crate::scalar::compensated_sum;

/// Sample size of the deterministic quasi-sample standing in for an iid law.
pub const QUASI_SAMPLE_SIZE: usize = 1_000_000;

/// Marginal law of an iid sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum IidLaw {
    Uniform { lo: f64, hi: f64 },
    Bernoulli { p: f64 },
}

impl IidLaw {
    /// Inverse CDF at `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            IidLaw::Uniform { lo, hi } => lo + (hi - lo) * u,
            IidLaw::Bernoulli { p } => {
                if u < 1.0 - p {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            IidLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            IidLaw::Bernoulli { p } => p,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            IidLaw::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo <= hi => Ok(()),
            IidLaw::Bernoulli { p } if (0.0..=1.0).contains(&p) => Ok(()),
            _ => Err(invalid(format!("invalid iid law {self:?}"))),
        }
    }
}

/// How a sequence continues outside its stored window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extension {
    /// The window is one period.
    Periodic,
    Zero,
    /// Every term (window included) is drawn from `law`, keyed by `seed` and index.
    Iid { seed: u64, law: IidLaw },
}

/// A two-sided real sequence `a_k`, `k` in `Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seq1D {
    window: Vec<f64>,
    /// Position of `k = 0` in `window`.
    origin: usize,
    extension: Extension,
}

fn zigzag(k: i64) -> u64 {
    ((k << 1) ^ (k >> 63)) as u64
}

impl Seq1D {
    pub fn new(window: Vec<f64>, origin: usize, extension: Extension) -> Result<Self> {
        if let Extension::Iid { law, .. } = extension {
            law.validate()?;
            return Ok(Self {
                window: Vec::new(),
                origin: 0,
                extension,
            });
        }
        if window.is_empty() {
            return Err(invalid("sequence window must be non-empty"));
        }
        if origin >= window.len() {
            return Err(invalid("origin outside the window"));
        }
        if window.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sequence window".into()));
        }
        Ok(Self {
            window,
            origin,
            extension,
        })
    }

    /// `a_k = period[k mod P]`.
    pub fn periodic(period: Vec<f64>) -> Result<Self> {
        Self::new(period, 0, Extension::Periodic)
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::periodic(vec![value])
    }

    /// `values` at `k = -N..=N` (odd length), zero elsewhere.
    pub fn finite(values: Vec<f64>) -> Result<Self> {
        if values.len().is_multiple_of(2) {
            return Err(invalid("a centered window needs odd length"));
        }
        let origin = values.len() / 2;
        Self::new(values, origin, Extension::Zero)
    }

    pub fn iid(law: IidLaw, seed: u64) -> Result<Self> {
        Self::new(Vec::new(), 0, Extension::Iid { seed, law })
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn get(&self, k: i64) -> f64 {
        match self.extension {
            Extension::Periodic => {
                let p = self.window.len() as i64;
                self.window[(self.origin as i64 + k).rem_euclid(p) as usize]
            }
            Extension::Zero => {
                let i = self.origin as i64 + k;
                if i >= 0 && (i as usize) < self.window.len() {
                    self.window[i as usize]
                } else {
                    0.0
                }
            }
            Extension::Iid { seed, law } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_word_pos(2 * zigzag(k) as u128);
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                law.quantile(u)
            }
        }
    }

    /// Terms `a_{-r}, ..., a_r`.
    pub fn range(&self, radius: usize) -> Vec<f64> {
        let r = radius as i64;
        match self.extension {
            Extension::Iid { seed, law } => {
                // one keystream pass instead of a reseek per index
                let mut out = vec![0.0; 2 * radius + 1];
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = 2 * radius as u64 + 1;
                for z in 0..n {
                    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                    // zigzag inverse
                    let k = if z % 2 == 0 { (z / 2) as i64 } else { -(z.div_ceil(2) as i64) };
                    out[(k + r) as usize] = law.quantile(u);
                }
                out
            }
            _ => (-r..=r).map(|k| self.get(k)).collect(),
        }
    }

    /// The limiting empirical law, when it exists.
    pub fn limit_law(&self) -> Result<WeightedEmpirical<f64>> {
        match self.extension {
            Extension::Periodic => WeightedEmpirical::uniform(self.window.clone()),
            Extension::Iid { law, .. } => {
                let n = QUASI_SAMPLE_SIZE;
                let xs = (0..n).map(|i| law.quantile((i as f64 + 0.5) / n as f64)).collect();
                WeightedEmpirical::uniform(xs)
            }
            Extension::Zero => Err(invalid(
                "zero-extended sequences have no limiting empirical law",
            )),
        }
    }

    /// Limit of symmetric window averages.
    pub fn cesaro_mean(&self) -> f64 {
        match self.extension {
            Extension::Periodic => self.window.iter().sum::<f64>() / self.window.len() as f64,
            Extension::Zero => 0.0,
            Extension::Iid { law, .. } => law.mean(),
        }
    }
}

fn pmf(sigma: f64) -> Result<PoolingPmf<f64>> {
    make_tsg_pmf(sigma, DEFAULT_TAIL_MASS_BOUND)
}

/// `sum_k q_sigma(k) a_k` under the truncated two-sided geometric PMF.
pub fn cesaro_weighted_sum(a: &Seq1D, sigma: f64) -> Result<f64> {
    let q = pmf(sigma)?;
    let terms = a.range(q.radius());
    if terms.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sequence term".into()));
    }
    Ok(compensated_sum(
        q.weights().iter().zip(&terms).map(|(w, x)| w * x),
    ))
}

/// The pooled measure `sum_k q_sigma(k) delta_{a_k}`, atoms merged by value.
pub fn pooled_measure(a: &Seq1D, sigma: f64) -> Result<WeightedEmpirical<f64>> {
    let q = pmf(sigma)?;
    let terms = a.range(q.radius());
    let mut atoms: Vec<(f64, f64)> = terms.into_iter().zip(q.weights().iter().copied()).collect();
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut support = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (x, w) in atoms {
        if support.last() == Some(&x) {
            *weights.last_mut().unwrap() += w;
        } else {
            support.push(x);
            weights.push(w);
        }
    }
    WeightedEmpirical::new(support, weights)
}

/// `D_{0,sigma} = W_p^p` between the pooled measures of `z` and `zhat` at 0.
pub fn pooled_distortion(z: &Seq1D, zhat: &Seq1D, p: f64, sigma: f64) -> Result<f64> {
    exact_w_p_1d(&pooled_measure(z, sigma)?, &pooled_measure(zhat, sigma)?, p)
}

/// `sum_k q_sigma(k) |z_k - zhat_k|^p`: the cost of the index-aligned coupling.
pub fn coupling_upper_bound(z: &Seq1D, zhat: &Seq1D, p: f64, sigma: f64) -> Result<f64> {
    let q = pmf(sigma)?;
    let a = z.range(q.radius());
    let b = zhat.range(q.radius());
    Ok(compensated_sum(
        q.weights()
            .iter()
            .zip(a.iter().zip(&b))
            .map(|(w, (x, y))| w * (x - y).abs().powf(p)),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub sigma: f64,
    pub value: f64,
    pub target: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<TableRow>,
    pub tolerance: f64,
    pub passed: bool,
}

impl ConvergenceTable {
    /// Passes when the last row is within `tolerance` and its error does not
    /// exceed the first row's.
    pub fn from_rows(rows: Vec<TableRow>, tolerance: f64) -> Result<Self> {
        if rows.len() < 2 {
            return Err(invalid("sigma grid too short for a trend verdict (need at least 2)"));
        }
        let first = rows.first().unwrap().abs_error;
        let last = rows.last().unwrap().abs_error;
        let passed = last < tolerance && last <= first;
        Ok(Self {
            rows,
            tolerance,
            passed,
        })
    }

    pub fn final_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.abs_error)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sigma,value,target,abs_error\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.sigma, r.value, r.target, r.abs_error);
        }
        s
    }
}

fn check_monotone(sigmas: &[f64], descending: bool) -> Result<()> {
    if sigmas.len() < 2 {
        return Err(invalid("sigma grid too short for a trend verdict (need at least 2)"));
    }
    if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(invalid("sigmas must be finite and nonnegative"));
    }
    let ok = sigmas
        .windows(2)
        .all(|w| if descending { w[0] > w[1] } else { w[0] < w[1] });
    if !ok {
        return Err(invalid(format!(
            "sigmas must be strictly {}",
            if descending { "descending" } else { "ascending" }
        )));
    }
    Ok(())
}

fn table(
    z: &Seq1D,
    zhat: &Seq1D,
    p: f64,
    sigmas: &[f64],
    target: f64,
    tolerance: f64,
) -> Result<ConvergenceTable> {
    let values: Vec<Result<f64>> = sigmas
        .par_iter()
        .map(|&s| pooled_distortion(z, zhat, p, s))
        .collect();
    let mut rows = Vec::with_capacity(sigmas.len());
    for (&sigma, v) in sigmas.iter().zip(values) {
        let value = v?;
        rows.push(TableRow {
            sigma,
            value,
            target,
            abs_error: (value - target).abs(),
        });
    }
    ConvergenceTable::from_rows(rows, tolerance)
}

/// `D_{0,sigma}` on descending `sigmas` against `|z_0 - zhat_0|^p`.
pub fn fidelity_limit_table(
    z: &Seq1D,
    zhat: &Seq1D,
    p: f64,
    sigmas: &[f64],
    tolerance: f64,
) -> Result<ConvergenceTable> {
    check_monotone(sigmas, true)?;
    let target = (z.get(0) - zhat.get(0)).abs().powf(p);
    table(z, zhat, p, sigmas, target, tolerance)
}

/// `D_{0,sigma}` on ascending `sigmas` against `W_p^p` of the limiting laws.
pub fn realism_limit_table(
    z: &Seq1D,
    zhat: &Seq1D,
    p: f64,
    sigmas: &[f64],
    tolerance: f64,
) -> Result<ConvergenceTable> {
    check_monotone(sigmas, false)?;
    let target = exact_w_p_1d(&z.limit_law()?, &zhat.limit_law()?, p)?;
    table(z, zhat, p, sigmas, target, tolerance)
}

/// A sequence with known Cesaro mean.
#[derive(Clone, Debug)]
pub struct CesaroCase {
    pub name: &'static str,
    pub sequence: Seq1D,
    pub mean: f64,
}

/// Bounded sequences whose Cesaro means are known in closed form.
pub fn bundled_cesaro_cases() -> Vec<CesaroCase> {
    let case = |name, sequence: Seq1D| {
        let mean = sequence.cesaro_mean();
        CesaroCase {
            name,
            sequence,
            mean,
        }
    };
    vec![
        case("constant", Seq1D::constant(1.0).unwrap()),
        case("alternating", Seq1D::periodic(vec![1.0, -1.0]).unwrap()),
        case("indicator |k|<=10", Seq1D::finite(vec![1.0; 21]).unwrap()),
        case("period 3 (0,0,1)", Seq1D::periodic(vec![0.0, 0.0, 1.0]).unwrap()),
        case(
            "period 5 ramp",
            Seq1D::periodic(vec![-2.0, 0.5, 3.0, 1.0, 0.25]).unwrap(),
        ),
        case(
            "iid uniform [0,1]",
            Seq1D::iid(IidLaw::Uniform { lo: 0.0, hi: 1.0 }, 17).unwrap(),
        ),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct CesaroRow {
    pub name: String,
    pub sigma: f64,
    pub weighted_sum: f64,
    pub cesaro_mean: f64,
    pub abs_error: f64,
    pub passed: bool,
}

/// Weighted sums at `sigma` against the Cesaro means of every bundled case.
pub fn cesaro_check(sigma: f64, tolerance: f64) -> Result<Vec<CesaroRow>> {
    bundled_cesaro_cases()
        .par_iter()
        .map(|c| {
            let s = cesaro_weighted_sum(&c.sequence, sigma)?;
            let err = (s - c.mean).abs();
            Ok(CesaroRow {
                name: c.name.to_string(),
                sigma,
                weighted_sum: s,
                cesaro_mean: c.mean,
                abs_error: err,
                passed: err < tolerance,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alt() -> (Seq1D, Seq1D) {
        (
            Seq1D::periodic(vec![0.0, 1.0]).unwrap(),
            Seq1D::periodic(vec![1.0, 0.0]).unwrap(),
        )
    }

    #[test]
    fn indexing() {
        let s = Seq1D::periodic(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.range(3), vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let f = Seq1D::finite(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.range(2), vec![0.0, 1.0, 2.0, 3.0, 0.0]);
        let r = Seq1D::iid(IidLaw::Uniform { lo: 0.0, hi: 1.0 }, 3).unwrap();
        let window = r.range(5);
        for k in -5..=5i64 {
            assert_eq!(window[(k + 5) as usize], r.get(k));
        }
    }

    #[test]
    fn constant_sums_to_one() {
        let one = Seq1D::constant(1.0).unwrap();
        for s in [0.0, 0.5, 3.0, 100.0] {
            assert!((cesaro_weighted_sum(&one, s).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn alternating_pooled_distortion_closed_form() {
        let (z, zh) = alt();
        for s in [0.3, 1.0, 4.0] {
            let q = pmf(s).unwrap();
            let even: f64 = q.iter().filter(|(k, _)| k % 2 == 0).map(|(_, w)| w).sum();
            let v = pooled_distortion(&z, &zh, 2.0, s).unwrap();
            assert!((v - (2.0 * even - 1.0)).abs() < 1e-12, "{s}: {v}");
        }
        assert_eq!(pooled_distortion(&z, &zh, 2.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn short_grid_is_rejected() {
        let (z, zh) = alt();
        assert!(fidelity_limit_table(&z, &zh, 2.0, &[0.1], 1e-3).is_err());
        assert!(fidelity_limit_table(&z, &zh, 2.0, &[0.1, 0.3], 1e-3).is_err());
    }

    #[test]
    fn zero_extension_has_no_limit_law() {
        let f = Seq1D::finite(vec![1.0]).unwrap();
        assert!(realism_limit_table(&f, &f, 2.0, &[1.0, 10.0], 1e-2).is_err());
    }

    #[test]
    fn csv_layout() {
        let (z, zh) = alt();
        let t = fidelity_limit_table(&z, &zh, 2.0, &[1.0, 0.0], 1e-3).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("sigma,value,target,abs_error\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(t.passed);
    }
}
