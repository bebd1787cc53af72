//! Bjøntegaard-delta metrics (BD-quality, BD-rate, BDET) and the serial and
//! parallel encoding-time deltas.
//!
//! Curves are interpolated with a monotone piecewise-cubic Hermite
//! interpolant (Fritsch–Carlson slopes) and integrated in closed form over
//! the overlap of the two curves. The classic least-squares cubic fit is
//! available through [`Interpolation::Cubic`] for cross-tool comparisons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum overlap in dB below which a comparison is flagged.
pub const MIN_QUALITY_OVERLAP_DB: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub rate_kbps: f64,
    pub quality_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_s: Option<f64>,
}

impl RdPoint {
    pub fn new(rate_kbps: f64, quality_db: f64) -> Self {
        RdPoint {
            rate_kbps,
            quality_db,
            time_s: None,
        }
    }

    pub fn timed(rate_kbps: f64, quality_db: f64, time_s: f64) -> Self {
        RdPoint {
            rate_kbps,
            quality_db,
            time_s: Some(time_s),
        }
    }
}

/// Rate-quality(-time) curve in ascending rate order, normally at least four points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdCurve {
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub const MIN_POINTS: usize = 4;

    pub fn new(points: Vec<RdPoint>) -> Result<Self> {
        Self::with_min_points(points, Self::MIN_POINTS)
    }

    /// Same checks as [`RdCurve::new`] but accepts ladders of two or three
    /// points. Only monotone cubic interpolation works on such curves.
    pub fn short(points: Vec<RdPoint>) -> Result<Self> {
        Self::with_min_points(points, 2)
    }

    fn with_min_points(points: Vec<RdPoint>, min: usize) -> Result<Self> {
        if points.len() < min {
            return Err(Error::Curve(format!("{} points, need at least {min}", points.len())));
        }
        for (k, p) in points.iter().enumerate() {
            if !(p.rate_kbps.is_finite() && p.rate_kbps > 0.0) {
                return Err(Error::Curve(format!("point {k}: rate {} must be positive", p.rate_kbps)));
            }
            if !p.quality_db.is_finite() {
                return Err(Error::Curve(format!("point {k}: quality must be finite")));
            }
            if let Some(t) = p.time_s {
                if !(t.is_finite() && t > 0.0) {
                    return Err(Error::Curve(format!("point {k}: time {t} must be positive")));
                }
            }
        }
        for (k, pair) in points.windows(2).enumerate() {
            if pair[1].rate_kbps <= pair[0].rate_kbps {
                return Err(Error::Curve(format!(
                    "rates must strictly increase (points {k} and {})",
                    k + 1
                )));
            }
            if pair[1].quality_db < pair[0].quality_db {
                return Err(Error::Curve(format!(
                    "non-monotone input: quality drops between points {k} and {}",
                    k + 1
                )));
            }
        }
        Ok(RdCurve { points })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    pub fn has_times(&self) -> bool {
        self.points.iter().all(|p| p.time_s.is_some())
    }

    fn quality_range(&self) -> (f64, f64) {
        (self.points[0].quality_db, self.points[self.points.len() - 1].quality_db)
    }
}

impl<'de> Deserialize<'de> for RdCurve {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            points: Vec<RdPoint>,
        }
        let raw = Raw::deserialize(d)?;
        RdCurve::new(raw.points).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Monotone piecewise-cubic Hermite.
    #[default]
    Pchip,
    /// Least-squares cubic polynomial (exact through four points).
    Cubic,
}

/// A curve `y(x)` that can be integrated exactly.
trait Integrable {
    fn integral(&self, lo: f64, hi: f64) -> f64;
}

/// Piecewise-cubic Hermite interpolant with Fritsch–Carlson slopes.
#[derive(Debug, Clone)]
pub(crate) struct Pchip {
    xs: Vec<f64>,
    // per segment: y0, slope0, c2, c3 in powers of (x - x_k)
    coeffs: Vec<[f64; 4]>,
}

impl Pchip {
    pub(crate) fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::Curve("interpolant needs at least two points".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Curve("abscissae must strictly increase".into()));
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        let coeffs = (0..n - 1)
            .map(|k| {
                let c2 = (3.0 * delta[k] - 2.0 * d[k] - d[k + 1]) / h[k];
                let c3 = (d[k] + d[k + 1] - 2.0 * delta[k]) / (h[k] * h[k]);
                [ys[k], d[k], c2, c3]
            })
            .collect();
        Ok(Pchip {
            xs: xs.to_vec(),
            coeffs,
        })
    }

    #[cfg(test)]
    fn eval(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let t = x - self.xs[k];
        let [a, b, c, d] = self.coeffs[k];
        a + t * (b + t * (c + t * d))
    }

    #[cfg(test)]
    fn segment(&self, x: f64) -> usize {
        let last = self.coeffs.len() - 1;
        self.xs[1..].iter().position(|&xk| x <= xk).unwrap_or(last).min(last)
    }

    fn antiderivative(c: &[f64; 4], t: f64) -> f64 {
        let [a, b, c2, c3] = *c;
        t * (a + t * (b / 2.0 + t * (c2 / 3.0 + t * c3 / 4.0)))
    }
}

/// Three-point end slope, limited to keep the interpolant shape-preserving.
fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let sign = |v: f64| (v > 0.0) as i8 - (v < 0.0) as i8;
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if sign(d) != sign(m0) {
        0.0
    } else if sign(m0) != sign(m1) && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

impl Integrable for Pchip {
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            let (x0, x1) = (self.xs[k], self.xs[k + 1]);
            let a = lo.max(x0);
            let b = hi.min(x1);
            if b > a {
                total += Pchip::antiderivative(c, b - x0) - Pchip::antiderivative(c, a - x0);
            }
        }
        total
    }
}

/// Least-squares cubic `y = p(x)`, fitted on centered abscissae.
#[derive(Debug, Clone)]
struct CubicFit {
    center: f64,
    coeffs: [f64; 4],
}

impl CubicFit {
    fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() < 4 {
            return Err(Error::Curve("cubic fit needs at least 4 points".into()));
        }
        let center = xs.iter().sum::<f64>() / xs.len() as f64;
        // normal equations A^T A c = A^T y
        let mut m = [[0.0f64; 5]; 4];
        for (&x, &y) in xs.iter().zip(ys) {
            let t = x - center;
            let pow = [1.0, t, t * t, t * t * t];
            for r in 0..4 {
                for c in 0..4 {
                    m[r][c] += pow[r] * pow[c];
                }
                m[r][4] += pow[r] * y;
            }
        }
        for col in 0..4 {
            let pivot = (col..4)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .expect("non-empty range");
            if m[pivot][col].abs() < 1e-300 {
                return Err(Error::Curve("cubic fit is singular".into()));
            }
            m.swap(col, pivot);
            for r in 0..4 {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..5 {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        let coeffs = [0, 1, 2, 3].map(|k| m[k][4] / m[k][k]);
        Ok(CubicFit { center, coeffs })
    }
}

impl Integrable for CubicFit {
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let [a, b, c, d] = self.coeffs;
        let prim = |x: f64| {
            let t = x - self.center;
            t * (a + t * (b / 2.0 + t * (c / 3.0 + t * d / 4.0)))
        };
        prim(hi) - prim(lo)
    }
}

fn interpolant(xs: &[f64], ys: &[f64], mode: Interpolation) -> Result<Box<dyn Integrable>> {
    Ok(match mode {
        Interpolation::Pchip => Box::new(Pchip::new(xs, ys)?),
        Interpolation::Cubic => Box::new(CubicFit::new(xs, ys)?),
    })
}

/// Mean of `test(x) - ref(x)` over the common `x` interval.
fn mean_gap(
    ref_xy: (Vec<f64>, Vec<f64>),
    test_xy: (Vec<f64>, Vec<f64>),
    mode: Interpolation,
) -> Result<f64> {
    let lo = ref_xy.0[0].max(test_xy.0[0]);
    let hi = ref_xy.0[ref_xy.0.len() - 1].min(test_xy.0[test_xy.0.len() - 1]);
    if !(hi > lo) {
        return Err(Error::Curve(format!("curves do not overlap (interval [{lo}, {hi}])")));
    }
    let r = interpolant(&ref_xy.0, &ref_xy.1, mode)?;
    let t = interpolant(&test_xy.0, &test_xy.1, mode)?;
    Ok((t.integral(lo, hi) - r.integral(lo, hi)) / (hi - lo))
}

fn strictly_increasing_quality(c: &RdCurve) -> Result<Vec<f64>> {
    let q: Vec<f64> = c.points.iter().map(|p| p.quality_db).collect();
    if q.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Curve(
            "quality must strictly increase to interpolate over quality".into(),
        ));
    }
    Ok(q)
}

fn log_rates(c: &RdCurve) -> Vec<f64> {
    c.points.iter().map(|p| p.rate_kbps.log10()).collect()
}

fn log_times(c: &RdCurve) -> Result<Vec<f64>> {
    c.points
        .iter()
        .map(|p| {
            p.time_s
                .map(f64::log10)
                .ok_or_else(|| Error::Curve("missing encoding time on a point".into()))
        })
        .collect()
}

fn percent(mean_log_gap: f64) -> f64 {
    (10f64.powf(mean_log_gap) - 1.0) * 100.0
}

/// Average quality difference (dB) of `test` over `reference` at equal rate.
pub fn bd_quality(reference: &RdCurve, test: &RdCurve) -> Result<f64> {
    bd_quality_with(reference, test, Interpolation::default())
}

pub fn bd_quality_with(reference: &RdCurve, test: &RdCurve, mode: Interpolation) -> Result<f64> {
    let q = |c: &RdCurve| c.points.iter().map(|p| p.quality_db).collect::<Vec<_>>();
    mean_gap((log_rates(reference), q(reference)), (log_rates(test), q(test)), mode)
}

/// Average rate change (%) of `test` over `reference` at equal quality.
pub fn bd_rate(reference: &RdCurve, test: &RdCurve) -> Result<f64> {
    bd_rate_with(reference, test, Interpolation::default())
}

pub fn bd_rate_with(reference: &RdCurve, test: &RdCurve, mode: Interpolation) -> Result<f64> {
    let gap = mean_gap(
        (strictly_increasing_quality(reference)?, log_rates(reference)),
        (strictly_increasing_quality(test)?, log_rates(test)),
        mode,
    )?;
    Ok(percent(gap))
}

/// Bjøntegaard delta encoding time (%): negative means faster at equal quality.
pub fn bdet(reference: &RdCurve, test: &RdCurve) -> Result<f64> {
    bdet_with(reference, test, Interpolation::default())
}

pub fn bdet_with(reference: &RdCurve, test: &RdCurve, mode: Interpolation) -> Result<f64> {
    let gap = mean_gap(
        (strictly_increasing_quality(reference)?, log_times(reference)?),
        (strictly_increasing_quality(test)?, log_times(test)?),
        mode,
    )?;
    Ok(percent(gap))
}

/// Width in dB of the common quality interval of two curves (negative when disjoint).
pub fn quality_overlap(reference: &RdCurve, test: &RdCurve) -> f64 {
    let (rl, rh) = reference.quality_range();
    let (tl, th) = test.quality_range();
    rh.min(th) - rl.max(tl)
}

/// Warning text when the quality overlap is too narrow for a reliable BD value.
pub fn overlap_warning(reference: &RdCurve, test: &RdCurve) -> Option<String> {
    let o = quality_overlap(reference, test);
    (o < MIN_QUALITY_OVERLAP_DB)
        .then(|| format!("quality overlap {o:.3} dB is below {MIN_QUALITY_OVERLAP_DB} dB"))
}

fn check_times(name: &str, times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Curve(format!("{name} times are empty")));
    }
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Curve(format!("{name} times must be positive")));
    }
    Ok(())
}

/// Relative change (%) of total encoding time, assuming sequential encoding.
pub fn delta_t_serial(ref_times: &[f64], method_times: &[f64]) -> Result<f64> {
    check_times("reference", ref_times)?;
    check_times("method", method_times)?;
    let r: f64 = ref_times.iter().sum();
    let m: f64 = method_times.iter().sum();
    Ok((m - r) / r * 100.0)
}

/// Relative change (%) of the slowest encode, assuming fully concurrent encoding.
pub fn delta_t_parallel(ref_times: &[f64], method_times: &[f64]) -> Result<f64> {
    check_times("reference", ref_times)?;
    check_times("method", method_times)?;
    let max = |v: &[f64]| v.iter().copied().fold(f64::MIN, f64::max);
    let r = max(ref_times);
    Ok((max(method_times) - r) / r * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(rq: &[(f64, f64)]) -> RdCurve {
        RdCurve::new(rq.iter().map(|&(r, q)| RdPoint::new(r, q)).collect()).unwrap()
    }

    fn timed(rqt: &[(f64, f64, f64)]) -> RdCurve {
        RdCurve::new(rqt.iter().map(|&(r, q, t)| RdPoint::timed(r, q, t)).collect()).unwrap()
    }

    fn base() -> RdCurve {
        curve(&[(100.0, 30.0), (200.0, 33.0), (400.0, 36.5), (800.0, 39.0), (1600.0, 41.0)])
    }

    #[test]
    fn identity_is_zero() {
        let a = base();
        assert_eq!(bd_quality(&a, &a).unwrap(), 0.0);
        assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
        let t = timed(&[(1.0, 1.0, 5.0), (2.0, 2.0, 6.0), (3.0, 3.0, 9.0), (4.0, 4.0, 20.0)]);
        assert_eq!(bdet(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn one_db_shift() {
        let a = base();
        let b = curve(&a.points().iter().map(|p| (p.rate_kbps, p.quality_db + 1.0)).collect::<Vec<_>>());
        assert!((bd_quality(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((bd_quality(&b, &a).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn halved_rate_is_minus_fifty() {
        let a = base();
        let b = curve(&a.points().iter().map(|p| (p.rate_kbps / 2.0, p.quality_db)).collect::<Vec<_>>());
        assert!((bd_rate(&a, &b).unwrap() + 50.0).abs() < 1e-9);
        assert!((bd_rate_with(&a, &b, Interpolation::Cubic).unwrap() + 50.0).abs() < 1e-9);
    }

    #[test]
    fn pchip_reproduces_knots_and_lines() {
        let xs = [0.0, 1.0, 2.5, 4.0];
        let ys = [1.0, 3.0, 2.0, 7.0];
        let p = Pchip::new(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(ys) {
            assert!((p.eval(*x) - y).abs() < 1e-12);
        }
        let line = Pchip::new(&xs, &xs.map(|x| 2.0 * x + 1.0)).unwrap();
        assert!((line.integral(0.0, 4.0) - 20.0).abs() < 1e-12);
        assert!((line.integral(0.5, 3.0) - (9.0 + 3.0 - 0.25 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn pchip_stays_monotone() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [0.0, 0.1, 5.0, 5.1, 5.2];
        let p = Pchip::new(&xs, &ys).unwrap();
        let mut prev = f64::MIN;
        for k in 0..=400 {
            let v = p.eval(k as f64 / 100.0);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn cubic_fit_is_exact_for_cubics() {
        let xs = [0.3, 1.0, 1.7, 2.2, 3.1];
        let f = |x: f64| 2.0 - x + 0.5 * x * x - 0.1 * x * x * x;
        let fit = CubicFit::new(&xs, &xs.map(f)).unwrap();
        let prim = |x: f64| 2.0 * x - x * x / 2.0 + x.powi(3) / 6.0 - 0.025 * x.powi(4);
        assert!((fit.integral(0.5, 3.0) - (prim(3.0) - prim(0.5))).abs() < 1e-9);
    }

    #[test]
    fn curve_validation() {
        assert!(RdCurve::new(vec![RdPoint::new(1.0, 1.0); 3]).is_err());
        let nonmono = [(1.0, 30.0), (2.0, 29.0), (3.0, 31.0), (4.0, 32.0)];
        let pts = nonmono.iter().map(|&(r, q)| RdPoint::new(r, q)).collect();
        assert!(matches!(RdCurve::new(pts), Err(Error::Curve(m)) if m.contains("non-monotone")));
        let unsorted = [(2.0, 30.0), (1.0, 31.0), (3.0, 32.0), (4.0, 33.0)];
        assert!(RdCurve::new(unsorted.iter().map(|&(r, q)| RdPoint::new(r, q)).collect()).is_err());
        let neg = [(-1.0, 30.0), (1.0, 31.0), (3.0, 32.0), (4.0, 33.0)];
        assert!(RdCurve::new(neg.iter().map(|&(r, q)| RdPoint::new(r, q)).collect()).is_err());
    }

    #[test]
    fn disjoint_and_missing_times() {
        let a = base();
        let far = curve(&[(1e5, 50.0), (2e5, 51.0), (4e5, 52.0), (8e5, 53.0)]);
        assert!(bd_quality(&a, &far).is_err());
        assert!(bdet(&a, &a).is_err());
        assert!(overlap_warning(&a, &a).is_none());
        assert!(overlap_warning(&a, &far).is_some());
    }

    #[test]
    fn time_deltas() {
        assert_eq!(delta_t_serial(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(delta_t_serial(&[100.0, 200.0, 300.0], &[50.0, 100.0, 150.0]).unwrap(), -50.0);
        assert_eq!(delta_t_serial(&[10.0], &[25.0]).unwrap(), 150.0);
        assert_eq!(delta_t_parallel(&[100.0, 300.0], &[150.0, 20.0]).unwrap(), -50.0);
        assert_eq!(delta_t_parallel(&[200.0, 200.0, 200.0], &[1.0, 1.0, 400.0]).unwrap(), 100.0);
        assert!(delta_t_serial(&[], &[1.0]).is_err());
        assert!(delta_t_parallel(&[1.0], &[]).is_err());
        assert!(delta_t_serial(&[1.0, 0.0], &[1.0]).is_err());
    }
}
