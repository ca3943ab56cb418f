//! Busy-wait synthetic load, calibrated against the monotonic clock.

use std::hint::black_box;
use std::time::{Duration, Instant};

use crate::BenchError;

/// Trials per measurement; the median is used.
pub const TRIALS: usize = 21;

const ROUNDS: usize = 30;

/// Burns roughly `iterations` dependent integer steps. Never sleeps: a
/// sleeping worker frees its core and would inflate apparent speedup.
#[inline(never)]
pub fn spin(iterations: u64) -> u64 {
    let mut x = black_box(0x9e37_79b9_7f4a_7c15u64);
    for i in 0..iterations {
        x = x.rotate_left(5) ^ i;
        x = black_box(x);
    }
    x
}

/// Relative tolerance for a target: ±5%, widened to ±20% below one
/// microsecond where timer resolution dominates.
pub fn tolerance(target_micros: f64) -> f64 {
    if target_micros < 1.0 {
        0.20
    } else {
        0.05
    }
}

/// Median duration in µs of one `spin(iterations)`, over [`TRIALS`]
/// trials. Short runs are batched so each trial spans at least ~50 µs.
pub fn measure_micros(iterations: u64, approx_micros: f64) -> f64 {
    let batch = if approx_micros > 0.0 {
        (50.0 / approx_micros).ceil().max(1.0) as u32
    } else {
        1
    };
    let mut samples: Vec<f64> = (0..TRIALS)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..batch {
                black_box(spin(iterations));
            }
            t.elapsed().as_secs_f64() * 1e6 / batch as f64
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}

/// Finds an iteration count whose measured duration matches
/// `target_micros` within [`tolerance`].
pub fn calibrate_spin(target_micros: f64) -> Result<u64, BenchError> {
    if !(target_micros > 0.0 && target_micros.is_finite()) {
        return Err(BenchError::Config(format!(
            "calibration target must be positive, got {target_micros}"
        )));
    }
    let tol = tolerance(target_micros);

    // Let the core settle at its working clock before timing anything.
    let warm = Instant::now();
    while warm.elapsed() < Duration::from_millis(20) {
        black_box(spin(1 << 12));
    }

    // Rough rate from a ~1 ms probe.
    let mut probe = 1u64 << 16;
    let rate = loop {
        let t = Instant::now();
        black_box(spin(probe));
        let e = t.elapsed();
        if e >= Duration::from_micros(500) || probe >= 1 << 34 {
            break probe as f64 / (e.as_secs_f64() * 1e6).max(1e-3);
        }
        probe *= 2;
    };

    let mut iterations = ((target_micros * rate).round() as u64).max(1);
    let mut best = (f64::INFINITY, iterations, 0.0);
    for _ in 0..ROUNDS {
        let measured = measure_micros(iterations, target_micros);
        let err = (measured / target_micros - 1.0).abs();
        if err < best.0 {
            best = (err, iterations, measured);
        }
        if err <= tol {
            // A scheduling hiccup can skew one median; accept only when an
            // independent second one agrees.
            let again = measure_micros(iterations, target_micros);
            if (again / target_micros - 1.0).abs() <= tol {
                return Ok(iterations);
            }
            // Keep the count and measure again.
            continue;
        }
        let scaled = (iterations as f64 * target_micros / measured.max(1e-6)).round() as u64;
        iterations = scaled.max(1);
    }
    Err(BenchError::Calibration {
        target_micros,
        best_micros: best.2,
        iterations: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_or_negative_target_is_rejected() {
        assert!(calibrate_spin(0.0).is_err());
        assert!(calibrate_spin(-1.0).is_err());
        assert!(calibrate_spin(f64::NAN).is_err());
    }

    #[test]
    fn spin_depends_on_its_input() {
        assert_ne!(spin(10), spin(11));
    }
}
