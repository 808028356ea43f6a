//! Distribution fits behind the matching threshold: the log-normal model of
//! pairwise fingerprint distances (uniqueness radius `U(N)`), the normal
//! model of measurement error (bound `d(N)`), and `tau = U(N) - d(N)`.

mod quantile;

use std::io::{BufRead, Write};

pub use quantile::{normal_cdf, normal_quantile};

use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, Scalar};

/// Minimum sample count for any fit.
pub const MIN_FIT_SAMPLES: usize = 30;
/// Probability mass of the fitted distance distribution below `U(N)`.
pub const DEFAULT_EPSILON: f64 = 1e-18;
/// Error bound is this many standard deviations above the mean error.
pub const ERROR_BOUND_SIGMAS: f64 = 10.0;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 11;

/// Equal-width histogram over `[min, max]`, smoothed by a centered moving
/// average of `window` buckets (even windows are widened by one so they
/// have a center). Edge buckets average over the neighbours that exist.
///
/// Densities integrate to one before smoothing. Returns
/// `(bucket center, smoothed density)` pairs.
pub fn smoothed_histogram<S: Scalar>(
    samples: &[S],
    buckets: usize,
    window: usize,
) -> Result<Vec<(S, S)>> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("histogram of no samples".into()));
    }
    let window = if window.is_multiple_of(2) {
        window + 1
    } else {
        window
    };
    if buckets < window {
        return Err(Error::Usage(format!(
            "{buckets} buckets cannot hold a {window}-bucket smoothing window"
        )));
    }
    let lo = samples.iter().copied().fold(S::infinity(), S::min);
    let hi = samples.iter().copied().fold(S::neg_infinity(), S::max);
    let n = S::of_usize(samples.len());
    let nb = S::of_usize(buckets);
    let width = (hi - lo) / nb;
    let mut counts = vec![0usize; buckets];
    for &x in samples {
        let b = if width > S::zero() {
            ((x - lo) / width)
                .floor()
                .to_usize()
                .unwrap_or(0)
                .min(buckets - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    let norm = if width > S::zero() { n * width } else { n };
    let density: Vec<S> = counts.iter().map(|&c| S::of_usize(c) / norm).collect();
    let half = window / 2;
    let half_width = width / (S::one() + S::one());
    Ok((0..buckets)
        .map(|b| {
            let from = b.saturating_sub(half);
            let to = (b + half).min(buckets - 1);
            let avg = density[from..=to].iter().copied().sum::<S>() / S::of_usize(to - from + 1);
            (lo + width * S::of_usize(b) + half_width, avg)
        })
        .collect())
}

/// Log-normal maximum likelihood estimate on any number of samples:
/// mean and population standard deviation of the logs.
pub fn lognormal_mle<S: Scalar>(samples: &[S]) -> Result<(S, S)> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    if let Some(bad) = samples
        .iter()
        .find(|x| !(**x > S::zero()) || !x.is_finite())
    {
        return Err(Error::Validation(format!(
            "log-normal samples must be positive and finite, got {bad}"
        )));
    }
    let n = S::of_usize(samples.len());
    let mu = pairwise_sum(samples.len(), &|i| samples[i].ln()) / n;
    let var = pairwise_sum(samples.len(), &|i| {
        let d = samples[i].ln() - mu;
        d * d
    }) / n;
    Ok((mu, var.sqrt()))
}

/// [`lognormal_mle`] with the minimum sample count enforced.
pub fn fit_lognormal<S: Scalar>(samples: &[S]) -> Result<(S, S)> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "log-normal fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    lognormal_mle(samples)
}

/// Pairwise fingerprint distances at one sequence length.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseDistanceSample<S = f64> {
    length: usize,
    distances: Vec<S>,
}

impl<S: Scalar> PairwiseDistanceSample<S> {
    pub fn new(length: usize, distances: Vec<S>) -> Result<Self> {
        if let Some(d) = distances.iter().find(|d| !(**d > S::zero())) {
            return Err(Error::Validation(format!(
                "pairwise distances must be positive (similar pairs excluded), got {d}"
            )));
        }
        Ok(PairwiseDistanceSample { length, distances })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn distances(&self) -> &[S] {
        &self.distances
    }

    pub fn min(&self) -> Option<S> {
        self.distances.iter().copied().reduce(S::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniquenessModel<S = f64> {
    pub length: usize,
    pub log_mu: S,
    pub log_sigma: S,
    pub epsilon: S,
    /// `U(N)`: the `epsilon` quantile of the fitted log-normal.
    pub radius: S,
}

/// Fits a log-normal to the distances and places `U(N)` at its
/// `eps` quantile.
pub fn uniqueness_radius<S: Scalar>(
    sample: &PairwiseDistanceSample<S>,
    eps: S,
) -> Result<UniquenessModel<S>> {
    let (log_mu, log_sigma) = fit_lognormal(sample.distances())?;
    if !(log_sigma > S::zero()) {
        return Err(Error::Validation(
            "degenerate log-normal fit (sigma = 0); distances are all equal".into(),
        ));
    }
    let z = S::of(normal_quantile(eps.as_f64())?);
    Ok(UniquenessModel {
        length: sample.length(),
        log_mu,
        log_sigma,
        epsilon: eps,
        radius: (log_mu + log_sigma * z).exp(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorModel<S = f64> {
    pub length: usize,
    pub mean: S,
    pub std: S,
    /// `d(N) = mean + 10 std`.
    pub bound: S,
    /// `tau = U(N) - d(N)`.
    pub tau: S,
}

impl<S: Scalar> ErrorModel<S> {
    /// Without a positive `tau` the no-false-positive argument does not
    /// apply and matching must not be attempted.
    pub fn is_matchable(&self) -> bool {
        self.tau > S::zero()
    }
}

/// Fits a normal to measurement errors (sample mean and sample standard
/// deviation) and derives `d(N)` and `tau` against `uniqueness`.
pub fn error_bound<S: Scalar>(
    length: usize,
    errors: &[S],
    uniqueness: &UniquenessModel<S>,
) -> Result<ErrorModel<S>> {
    if length != uniqueness.length {
        return Err(Error::Usage(format!(
            "error sample is for length {length}, uniqueness model for {}",
            uniqueness.length
        )));
    }
    if errors.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "error fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
            errors.len()
        )));
    }
    if let Some(bad) = errors
        .iter()
        .find(|e| !(**e >= S::zero()) || !e.is_finite())
    {
        return Err(Error::Validation(format!(
            "measurement error {bad} is invalid"
        )));
    }
    let n = errors.len();
    let mean = pairwise_sum(n, &|i| errors[i]) / S::of_usize(n);
    let var = pairwise_sum(n, &|i| {
        let d = errors[i] - mean;
        d * d
    }) / S::of_usize(n - 1);
    let std = var.sqrt();
    let bound = mean + S::of(ERROR_BOUND_SIGMAS) * std;
    Ok(ErrorModel {
        length,
        mean,
        std,
        bound,
        tau: uniqueness.radius - bound,
    })
}

/// Radii fitted separately on the even- and odd-indexed halves of a sample.
pub fn half_split_radii(sample: &PairwiseDistanceSample, eps: f64) -> Result<(f64, f64)> {
    let d = sample.distances();
    let even: Vec<f64> = d.iter().step_by(2).copied().collect();
    let odd: Vec<f64> = d.iter().skip(1).step_by(2).copied().collect();
    let half = |v: Vec<f64>| -> Result<f64> {
        let s = PairwiseDistanceSample::new(sample.length(), v)?;
        Ok(uniqueness_radius(&s, eps)?.radius)
    };
    Ok((half(even)?, half(odd)?))
}

/// One line of a fit report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitRow {
    pub uniqueness: UniquenessModel,
    pub error: ErrorModel,
}

pub const FIT_REPORT_HEADER: &str =
    "N, log_mu, log_sigma, U, d, tau, epsilon, error_mean, error_std";

/// Writes `N, log_mu, log_sigma, U, d, tau` followed by the parameters needed
/// to rebuild both models.
pub fn write_fit_report<W: Write>(mut out: W, rows: &[FitRow]) -> std::io::Result<()> {
    writeln!(out, "{FIT_REPORT_HEADER}")?;
    for r in rows {
        let (u, e) = (&r.uniqueness, &r.error);
        writeln!(
            out,
            "{}, {}, {}, {}, {}, {}, {}, {}, {}",
            u.length, u.log_mu, u.log_sigma, u.radius, e.bound, e.tau, u.epsilon, e.mean, e.std
        )?;
    }
    Ok(())
}

pub fn read_fit_report<R: BufRead>(input: R) -> Result<Vec<FitRow>> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let loc = format!("fit report line {}", i + 1);
        let line = line.map_err(|e| Error::parse(&loc, e.to_string()))?;
        if line.trim().is_empty() || line.starts_with('N') || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 9 {
            return Err(Error::parse(
                &loc,
                format!("expected 9 fields, got {}", fields.len()),
            ));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .parse()
                .map_err(|_| Error::parse(&loc, format!("bad number {:?}", fields[k])))
        };
        let length: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(&loc, format!("bad length {:?}", fields[0])))?;
        let uniqueness = UniquenessModel {
            length,
            log_mu: num(1)?,
            log_sigma: num(2)?,
            radius: num(3)?,
            epsilon: num(6)?,
        };
        let error = ErrorModel {
            length,
            bound: num(4)?,
            tau: num(5)?,
            mean: num(7)?,
            std: num(8)?,
        };
        rows.push(FitRow { uniqueness, error });
    }
    Ok(rows)
}
