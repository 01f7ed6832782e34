//! Estimates from skeletons: closed-form time averages over the linear
//! segments, inverse-temperature occupancy, the importance-sampling
//! estimator of the atom-free regime, and replicate error summaries.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::models::Moments;
use crate::state::{Mode, Skeleton, SkeletonEvent};
use crate::tempering::GeometricPath;
use crate::zigzag::PathSample;

/// Which parts of the path an average uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeFilter {
    #[default]
    Any,
    Tempering,
    Target,
    Untempered,
    /// Target or Untempered: time during which `x` is a target draw.
    Posterior,
}

impl ModeFilter {
    pub fn matches(self, mode: Mode) -> bool {
        match self {
            ModeFilter::Any => true,
            ModeFilter::Tempering => mode == Mode::Tempering,
            ModeFilter::Target => mode == Mode::Target,
            ModeFilter::Untempered => mode == Mode::Untempered,
            ModeFilter::Posterior => mode.is_target(),
        }
    }
}

/// Segments after `burnin`, clipped, as (start event, offset into the
/// segment, length).
fn clipped_segments(
    skeleton: &Skeleton,
    burnin: f64,
) -> impl Iterator<Item = (&SkeletonEvent, f64, f64)> + '_ {
    skeleton.segments().filter_map(move |(e, h)| {
        let end = e.t + h;
        if end <= burnin || h <= 0.0 {
            return None;
        }
        let offset = (burnin - e.t).max(0.0);
        Some((e, offset, h - offset))
    })
}

fn check_burnin(skeleton: &Skeleton, burnin: f64) -> Result<()> {
    if !(burnin >= 0.0) || burnin >= skeleton.total_time {
        return Err(Error::InvalidArgument(format!(
            "burn-in {burnin} must lie in [0, {})",
            skeleton.total_time
        )));
    }
    Ok(())
}

/// `int_0^h (x + s v)^p ds` for `p` in {1, 2}.
fn segment_integral(x: f64, v: f64, h: f64, p: u32) -> f64 {
    match p {
        1 => x * h + 0.5 * v * h * h,
        _ => x * x * h + x * v * h * h + v * v * h * h * h / 3.0,
    }
}

/// Time average of `x_i(t)^p` over the filtered path after `burnin`.
pub fn segment_moment(
    skeleton: &Skeleton,
    i: usize,
    p: u32,
    filter: ModeFilter,
    burnin: f64,
) -> Result<f64> {
    if p != 1 && p != 2 {
        return Err(Error::InvalidArgument(format!("moment power must be 1 or 2, got {p}")));
    }
    let m = segment_moments_inner(skeleton, filter, burnin, Some(i))?;
    Ok(if p == 1 { m.mean[0] } else { m.second[0] })
}

/// First and second time-averaged moments of every coordinate.
pub fn segment_moments(skeleton: &Skeleton, filter: ModeFilter, burnin: f64) -> Result<Moments> {
    segment_moments_inner(skeleton, filter, burnin, None)
}

fn segment_moments_inner(
    skeleton: &Skeleton,
    filter: ModeFilter,
    burnin: f64,
    only: Option<usize>,
) -> Result<Moments> {
    check_burnin(skeleton, burnin)?;
    let d = skeleton.events[0].state.dim();
    let coords: Vec<usize> = match only {
        Some(i) if i >= d => {
            return Err(Error::InvalidArgument(format!("coordinate {i} out of range for d = {d}")))
        }
        Some(i) => vec![i],
        None => (0..d).collect(),
    };
    let mut time = 0.0;
    let mut first = vec![0.0; coords.len()];
    let mut second = vec![0.0; coords.len()];
    for (e, offset, h) in clipped_segments(skeleton, burnin) {
        if !filter.matches(e.state.mode) {
            continue;
        }
        time += h;
        for (k, &i) in coords.iter().enumerate() {
            let v = e.state.effective_velocity(i);
            let x = e.state.x[i] + offset * v;
            first[k] += segment_integral(x, v, h, 1);
            second[k] += segment_integral(x, v, h, 2);
        }
    }
    if !(time > 0.0) {
        return Err(Error::InvalidArgument(
            "no path time passes the mode filter after burn-in".into(),
        ));
    }
    Ok(Moments {
        mean: first.iter().map(|s| s / time).collect(),
        second: second.iter().map(|s| s / time).collect(),
    })
}

/// Fraction of filtered time during which coordinate `i` is not stuck.
pub fn inclusion_probability(
    skeleton: &Skeleton,
    i: usize,
    filter: ModeFilter,
    burnin: f64,
) -> Result<f64> {
    check_burnin(skeleton, burnin)?;
    let (mut time, mut active) = (0.0, 0.0);
    for (e, _, h) in clipped_segments(skeleton, burnin) {
        if filter.matches(e.state.mode) {
            time += h;
            if !e.state.stuck[i] {
                active += h;
            }
        }
    }
    if !(time > 0.0) {
        return Err(Error::InvalidArgument(
            "no path time passes the mode filter after burn-in".into(),
        ));
    }
    Ok(active / time)
}

/// Fraction of the path spent with `beta = 1`, counting untempered time.
pub fn beta_occupancy(skeleton: &Skeleton) -> f64 {
    beta_occupancy_after(skeleton, 0.0).unwrap_or(f64::NAN)
}

pub fn beta_occupancy_after(skeleton: &Skeleton, burnin: f64) -> Result<f64> {
    check_burnin(skeleton, burnin)?;
    let (mut total, mut at_one) = (0.0, 0.0);
    for (e, _, h) in clipped_segments(skeleton, burnin) {
        total += h;
        if e.state.mode.is_target() {
            at_one += h;
        }
    }
    Ok(at_one / total)
}

/// Fraction of the path (after `burnin`) spent in tempering mode with
/// beta in `[a, b]`.
pub fn beta_interval_occupancy(skeleton: &Skeleton, a: f64, b: f64, burnin: f64) -> Result<f64> {
    check_burnin(skeleton, burnin)?;
    if !(a <= b) {
        return Err(Error::InvalidArgument(format!("empty interval [{a}, {b}]")));
    }
    let (mut total, mut inside) = (0.0, 0.0);
    for (e, offset, h) in clipped_segments(skeleton, burnin) {
        total += h;
        if e.state.mode != Mode::Tempering {
            continue;
        }
        let vb = f64::from(e.state.v_beta);
        let b0 = e.state.beta + offset * vb;
        let b1 = b0 + h * vb;
        let (lo, hi) = (b0.min(b1), b0.max(b1));
        // beta moves at unit speed, so time inside equals length of overlap
        inside += (hi.min(b) - lo.max(a)).max(0.0);
    }
    Ok(inside / total)
}

/// Importance weight `delta / (exp(delta) - 1)`, with value 1 at 0.
pub fn is_weight(delta: f64) -> Result<f64> {
    let delta = ensure_finite(delta, "importance log-ratio")?;
    if delta == 0.0 {
        return Ok(1.0);
    }
    if delta < 0.0 {
        Ok(delta / delta.exp_m1())
    } else {
        // rewritten to avoid overflow of exp(delta)
        Ok(delta * (-delta).exp() / -(-delta).exp_m1())
    }
}

/// `log` of [`is_weight`], finite where the weight itself would underflow.
pub fn is_log_weight(delta: f64) -> Result<f64> {
    let delta = ensure_finite(delta, "importance log-ratio")?;
    if delta == 0.0 {
        Ok(0.0)
    } else if delta < 0.0 {
        Ok((-delta).ln() - (-delta.exp_m1()).ln())
    } else {
        Ok(delta.ln() - delta - (-(-delta).exp_m1()).ln())
    }
}

/// `log q0(x) + log xi - log q(x)`.
pub fn is_log_ratio(path: &GeometricPath, xi: f64, x: &[f64]) -> f64 {
    path.base().log_density(x) + xi.ln() - path.target().log_density(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsEstimate {
    pub estimate: f64,
    /// `(sum w)^2 / sum w^2`.
    pub ess: f64,
    pub samples: usize,
}

/// Self-normalized importance-sampling estimate of `E_q[f]` from samples of
/// the atom-free tempered process with `kappa ~ xi^(1 - beta)`. Samples at
/// beta = 1 are ignored.
pub fn is_estimate<F>(samples: &[PathSample], path: &GeometricPath, xi: f64, f: F) -> Result<IsEstimate>
where
    F: Fn(&[f64]) -> f64,
{
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::InvalidArgument(format!("xi must be positive, got {xi}")));
    }
    let kept: Vec<&PathSample> = samples
        .iter()
        .filter(|s| s.mode == Mode::Tempering && s.beta < 1.0)
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidArgument("no samples with beta < 1".into()));
    }
    let log_w = kept
        .iter()
        .map(|s| is_log_weight(is_log_ratio(path, xi, &s.x)))
        .collect::<Result<Vec<f64>>>()?;
    // weights are rescaled by the largest one, which leaves the ratio unchanged
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut sw, mut sw2, mut swf) = (0.0, 0.0, 0.0);
    for (s, lw) in kept.iter().zip(&log_w) {
        let w = (lw - top).exp();
        sw += w;
        sw2 += w * w;
        swf += w * f(&s.x);
    }
    let n = kept.len();
    if !(sw > 0.0) || !sw.is_finite() {
        return Err(Error::InvalidArgument("importance weights sum to zero".into()));
    }
    Ok(IsEstimate {
        estimate: swf / sw,
        ess: sw * sw / sw2,
        samples: n,
    })
}

/// Importance-sampling estimates of the first and second moment of every
/// coordinate, sharing one set of weights.
pub fn is_moments(samples: &[PathSample], path: &GeometricPath, xi: f64) -> Result<(Moments, IsEstimate)> {
    let d = path.dim();
    let mut mean = Vec::with_capacity(d);
    let mut second = Vec::with_capacity(d);
    let mut meta = None;
    for i in 0..d {
        let m1 = is_estimate(samples, path, xi, |x| x[i])?;
        let m2 = is_estimate(samples, path, xi, |x| x[i] * x[i])?;
        mean.push(m1.estimate);
        second.push(m2.estimate);
        meta = Some(m1);
    }
    let meta = meta.ok_or_else(|| Error::InvalidArgument("zero-dimensional path".into()))?;
    Ok((Moments { mean, second }, meta))
}

/// Mean and standard error of per-batch estimates over `batches`
/// contiguous blocks of samples.
pub fn batch_means<F>(samples: &[PathSample], batches: usize, estimate: F) -> Result<(f64, f64)>
where
    F: Fn(&[PathSample]) -> Result<f64>,
{
    if batches < 2 || samples.len() < batches {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 batches and one sample per batch, got {batches} batches for {} samples",
            samples.len()
        )));
    }
    let size = samples.len() / batches;
    let values = (0..batches)
        .map(|b| estimate(&samples[b * size..(b + 1) * size]))
        .collect::<Result<Vec<f64>>>()?;
    let (mean, sd) = mean_sd(&values);
    Ok((mean, sd / (batches as f64).sqrt()))
}

/// Sample mean and standard deviation (n - 1 denominator).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-component root-mean-square error of replicate estimates.
pub fn rmse_report(estimates: &[Vec<f64>], exact: &[f64]) -> Result<Vec<f64>> {
    error_report(estimates, exact, |e| e * e).map(|v| v.into_iter().map(f64::sqrt).collect())
}

/// Per-component mean absolute error of replicate estimates.
pub fn mae_report(estimates: &[Vec<f64>], exact: &[f64]) -> Result<Vec<f64>> {
    error_report(estimates, exact, f64::abs)
}

fn error_report(estimates: &[Vec<f64>], exact: &[f64], loss: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no replicate estimates".into()));
    }
    if exact.is_empty() {
        return Err(Error::InvalidArgument("exact values are missing".into()));
    }
    if estimates.iter().any(|e| e.len() != exact.len()) {
        return Err(Error::InvalidArgument(format!(
            "every replicate must report {} values",
            exact.len()
        )));
    }
    let n = estimates.len() as f64;
    Ok((0..exact.len())
        .map(|k| estimates.iter().map(|e| loss(e[k] - exact[k])).sum::<f64>() / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{EventKind, ExtendedState};

    fn skeleton(points: &[(f64, f64, i8, Mode)], end: f64) -> Skeleton {
        let mut events: Vec<SkeletonEvent> = points
            .iter()
            .enumerate()
            .map(|(k, &(t, x, v, mode))| {
                let mut s = ExtendedState::untempered(vec![x], vec![v]);
                s.mode = mode;
                if mode == Mode::Target {
                    s.v_beta = 0;
                }
                SkeletonEvent {
                    t,
                    state: s,
                    kind: if k == 0 { EventKind::Initial } else { EventKind::FlipX(0) },
                }
            })
            .collect();
        let last = events.last().unwrap().clone();
        let fin = crate::state::flow(&last.state, end - last.t).unwrap();
        events.push(SkeletonEvent {
            t: end,
            state: fin,
            kind: EventKind::Final,
        });
        Skeleton {
            events,
            total_time: end,
            proposal_count: 0,
            accepted_count: 0,
        }
    }

    #[test]
    fn closed_form_segment_examples() {
        let constant = {
            let mut sk = skeleton(&[(0.0, 3.0, 1, Mode::Untempered)], 2.0);
            sk.events[0].state.stuck[0] = true;
            sk.events[0].state.x[0] = 0.0;
            sk
        };
        assert_eq!(segment_moment(&constant, 0, 1, ModeFilter::Any, 0.0).unwrap(), 0.0);

        let ramp = skeleton(&[(0.0, 0.0, 1, Mode::Untempered)], 1.0);
        assert!((segment_moment(&ramp, 0, 2, ModeFilter::Any, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);

        let tri = skeleton(&[(0.0, 0.0, 1, Mode::Untempered), (1.0, 1.0, -1, Mode::Untempered)], 2.0);
        assert!((segment_moment(&tri, 0, 1, ModeFilter::Any, 0.0).unwrap() - 0.5).abs() < 1e-15);
        // burn-in cuts into the first segment
        let m = segment_moment(&tri, 0, 1, ModeFilter::Any, 0.5).unwrap();
        assert!((m - (0.375 + 0.5) / 1.5).abs() < 1e-15);
    }

    #[test]
    fn mode_filter_and_occupancy() {
        let sk = skeleton(&[(0.0, 0.0, 1, Mode::Tempering), (1.0, 1.0, -1, Mode::Target)], 4.0);
        assert!((beta_occupancy(&sk) - 0.75).abs() < 1e-15);
        let m = segment_moment(&sk, 0, 1, ModeFilter::Target, 0.0).unwrap();
        assert!((m - (1.0 * 3.0 - 4.5) / 3.0).abs() < 1e-15);
        let none = skeleton(&[(0.0, 0.0, 1, Mode::Tempering)], 1.0);
        assert_eq!(beta_occupancy(&none), 0.0);
        assert!(segment_moment(&none, 0, 1, ModeFilter::Target, 0.0).is_err());
    }

    #[test]
    fn is_weight_examples() {
        assert_eq!(is_weight(0.0).unwrap(), 1.0);
        assert!((is_weight(2f64.ln()).unwrap() - 2f64.ln()).abs() < 1e-15);
        let w = is_weight(-50.0).unwrap();
        assert!((w - 50.0).abs() < 1e-12);
        assert!(is_weight(700.0).unwrap() > 0.0);
        for d in [-800.0, -3.0, 1e-9, 2.0, 800.0] {
            let lw = is_log_weight(d).unwrap();
            assert!(lw.is_finite());
            if d.abs() < 700.0 {
                assert!((lw.exp() - is_weight(d).unwrap()).abs() < 1e-12 * is_weight(d).unwrap().max(1.0));
            }
        }
        assert!(is_weight(f64::NAN).is_err());
        for delta in [1e-8, 1e-3, 0.5, 5.0, 30.0] {
            for d in [delta, -delta] {
                let w = is_weight(d).unwrap();
                assert!((w * d.exp_m1() - d).abs() <= 1e-12 * d.abs());
            }
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse_report(&[vec![1.0], vec![1.0]], &[1.0]).unwrap(), vec![0.0]);
        assert_eq!(rmse_report(&[vec![3.0]], &[1.0]).unwrap(), vec![2.0]);
        let r = rmse_report(&[vec![3.0], vec![4.0]], &[0.0]).unwrap()[0];
        assert!((r - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse_report(&[vec![1.0]], &[]).is_err());
        assert_eq!(mae_report(&[vec![3.0], vec![-1.0]], &[1.0]).unwrap(), vec![2.0]);
    }
}
