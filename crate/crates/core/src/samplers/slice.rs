//! Coordinate-wise univariate slice sampling (stepping out and shrinkage) restricted to a box.

use rand::Rng;

use crate::bounds::Bounds;
use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::gp::{GPModel, SurrogateDensity};

pub const SLICE_BURN_IN_SWEEPS: usize = 500;
/// Initial bracket width as a fraction of the box width along each axis.
pub const SLICE_WIDTH_FRACTION: f64 = 0.25;
const MAX_STEP_OUT: usize = 64;
const MAX_SHRINK: usize = 200;

fn eval<T: LogDensity + ?Sized>(target: &T, x: &[f64]) -> Result<f64> {
    let v = target.log_density(x)?;
    if v.is_nan() {
        return Err(Error::NanDensity(x.to_vec()));
    }
    Ok(v)
}

/// One sweep over all free coordinates. `current` is the log-density at `x`.
fn sweep<T, R>(target: &T, bounds: &Bounds, x: &mut [f64], current: &mut f64, rng: &mut R) -> Result<()>
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    for i in 0..x.len() {
        let (lo_box, hi_box) = (bounds.lower[i], bounds.upper[i]);
        let w = SLICE_WIDTH_FRACTION * (hi_box - lo_box);
        if w <= 0.0 {
            continue;
        }
        let level = *current + rng.random::<f64>().ln();
        let x0 = x[i];
        let mut lo = x0 - w * rng.random::<f64>();
        let mut hi = lo + w;

        let probe = |x: &mut [f64], t: f64| -> Result<f64> {
            x[i] = t;
            eval(target, x)
        };

        // stepping out never leaves the box
        for _ in 0..MAX_STEP_OUT {
            if lo <= lo_box || probe(x, lo)? <= level {
                break;
            }
            lo -= w;
        }
        for _ in 0..MAX_STEP_OUT {
            if hi >= hi_box || probe(x, hi)? <= level {
                break;
            }
            hi += w;
        }
        lo = lo.max(lo_box);
        hi = hi.min(hi_box);

        let mut accepted = None;
        for _ in 0..MAX_SHRINK {
            let t = lo + (hi - lo) * rng.random::<f64>();
            let v = probe(x, t)?;
            if v > level {
                accepted = Some((t, v));
                break;
            }
            if t < x0 {
                lo = t;
            } else {
                hi = t;
            }
        }
        match accepted {
            Some((t, v)) => {
                x[i] = t;
                *current = v;
            }
            // the interval has collapsed onto x0 to machine precision
            None => x[i] = x0,
        }
    }
    Ok(())
}

/// Draws `n` points from `exp(target)` restricted to `bounds`, one point per full sweep, after
/// `burn_in` discarded sweeps.
pub fn slice_sample<T, R>(
    target: &T,
    bounds: &Bounds,
    start: &[f64],
    n: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>>
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::InvalidParameter("slice sampling needs n >= 1".into()));
    }
    if start.len() != bounds.dim() {
        return Err(Error::LengthMismatch {
            expected: bounds.dim(),
            got: start.len(),
        });
    }
    let mut x = start.to_vec();
    bounds.clip(&mut x);
    let mut current = eval(target, &x)?;
    if current == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!(
            "slice sampler started at zero density {x:?}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for s in 0..burn_in + n {
        sweep(target, bounds, &mut x, &mut current, rng)?;
        if s >= burn_in {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// Slice samples the surrogate posterior `exp(mu(theta))` on the box, starting from the best
/// training input.
pub fn slice_sample_surrogate<R: Rng + ?Sized>(
    gp: &GPModel,
    bounds: &Bounds,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let start = match gp.training.best() {
        Some((x, _)) => x.to_vec(),
        None => bounds.center(),
    };
    slice_sample(
        &SurrogateDensity::new(gp, bounds),
        bounds,
        &start,
        n,
        SLICE_BURN_IN_SWEEPS,
        rng,
    )
}
