//! Ordinary least-squares trend lines with confidence bands for the mean
//! response, optionally split into two segments at a fixed x.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("segment {segment} has {n} point(s); at least 3 required")]
    TooFewPoints { segment: usize, n: usize },
    #[error("segment {segment}: all x values are equal")]
    DegenerateFit { segment: usize },
    #[error("point {0} is not finite")]
    NonFinite(usize),
    #[error("confidence level must lie in (0, 1)")]
    InvalidLevel,
}

/// One fitted line.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub slope: f64,
    pub intercept: f64,
    pub x_mean: f64,
    pub sxx: f64,
    /// Residual standard error, `sqrt(SSE / (n - 2))`.
    pub residual_se: f64,
    /// Two-sided t critical value at the requested level with `n - 2` dof.
    pub t_critical: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub fit: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Segment {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Half width of the mean-response confidence band at `x`.
    pub fn half_width(&self, x: f64) -> f64 {
        let dx = x - self.x_mean;
        self.t_critical * self.residual_se * libm::sqrt(1.0 / self.n as f64 + dx * dx / self.sxx)
    }

    pub fn band_at(&self, x: f64) -> BandPoint {
        let fit = self.predict(x);
        let h = self.half_width(x);
        BandPoint { x, fit, lo: fit - h, hi: fit + h }
    }

    /// `points` evenly spaced samples of the band over the segment's x range.
    pub fn grid(&self, points: usize) -> Vec<BandPoint> {
        match points {
            0 => Vec::new(),
            1 => alloc::vec![self.band_at(self.x_min)],
            m => (0..m)
                .map(|i| self.band_at(self.x_min + (self.x_max - self.x_min) * i as f64 / (m - 1) as f64))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendFit {
    pub split_at: Option<f64>,
    pub level: f64,
    pub segments: Vec<Segment>,
}

/// 95% fit, split into `x < split_at` and `x >= split_at` when given.
pub fn trend_fit(points: &[(f64, f64)], split_at: Option<f64>) -> Result<TrendFit, FitError> {
    trend_fit_with_level(points, split_at, 0.95)
}

pub fn trend_fit_with_level(points: &[(f64, f64)], split_at: Option<f64>, level: f64) -> Result<TrendFit, FitError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(FitError::InvalidLevel);
    }
    if let Some(i) = points.iter().position(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(FitError::NonFinite(i));
    }
    let parts: Vec<Vec<(f64, f64)>> = match split_at {
        None => alloc::vec![points.to_vec()],
        Some(s) => {
            let (lo, hi): (Vec<_>, Vec<_>) = points.iter().partition(|(x, _)| *x < s);
            alloc::vec![lo, hi]
        }
    };
    let segments = parts
        .iter()
        .enumerate()
        .map(|(i, pts)| fit_segment(i, pts, level))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrendFit { split_at, level, segments })
}

fn fit_segment(segment: usize, pts: &[(f64, f64)], level: f64) -> Result<Segment, FitError> {
    let n = pts.len();
    if n < 3 {
        return Err(FitError::TooFewPoints { segment, n });
    }
    let nf = n as f64;
    let x_mean = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - x_mean) * (p.0 - x_mean)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - x_mean) * (p.1 - y_mean)).sum();
    if sxx == 0.0 {
        return Err(FitError::DegenerateFit { segment });
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let sse: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let dof = nf - 2.0;
    let residual_se = libm::sqrt(sse / dof);
    let t_critical = student_t_quantile(0.5 + level / 2.0, dof);
    let x_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(Segment { n, x_min, x_max, slope, intercept, x_mean, sxx, residual_se, t_critical })
}

/// Regularized incomplete beta `I_x(a, b)` (continued fraction, modified
/// Lentz).
fn incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// CDF of Student's t distribution with `dof` degrees of freedom.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    let tail = 0.5 * incomplete_beta(dof / (dof + t * t), dof / 2.0, 0.5);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Inverse CDF of Student's t distribution, by bisection.
pub fn student_t_quantile(p: f64, dof: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -student_t_quantile(1.0 - p, dof);
    }
    let mut hi = 1.0;
    while student_t_cdf(hi, dof) < p {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if student_t_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
