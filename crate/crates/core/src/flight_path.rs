//! Piecewise-linear trajectories on [0, 1] and the rescaled broken-line
//! flights built from clocked arrivals and directions.

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::poisson_clock::ArrivalSequence;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Continuous piecewise-linear path on [0, 1]: knot times (strictly
/// increasing, from 0 to 1) and one d-vector per knot, linearly interpolated
/// in between.
#[derive(Debug, Clone, PartialEq)]
pub struct PolylinePath {
    dim: usize,
    knot_times: Vec<f64>,
    /// Flattened knot values, `len = knots * dim`.
    knot_values: Vec<f64>,
}

/// Spatial normalization B_n used for the rescaled flight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// B(T_n) from the limit statement: Γ_n^{(2α−1)/2} for the power clock,
    /// T_n for the faster clocks.
    GammaExact,
    /// n^{(2α−1)/2} for the power clock (the variance-constant convention);
    /// identical to `GammaExact` for the other clocks.
    NPower,
}

impl PolylinePath {
    /// Build a path, deduplicating tied knot times (the last value wins).
    pub fn new(knot_times: Vec<f64>, knot_values: Vec<Vec<f64>>) -> Result<Self> {
        if knot_times.len() != knot_values.len() {
            return Err(Error::LengthMismatch(format!(
                "{} times vs {} values",
                knot_times.len(),
                knot_values.len()
            )));
        }
        if knot_times.len() < 2 {
            return Err(Error::invalid("a path needs at least two knots"));
        }
        let dim = knot_values[0].len();
        if dim == 0 {
            return Err(Error::invalid("path dimension must be >= 1"));
        }
        if knot_times[0] != 0.0 {
            return Err(Error::invalid(format!(
                "first knot time must be 0, got {}",
                knot_times[0]
            )));
        }
        if *knot_times.last().unwrap() != 1.0 {
            return Err(Error::invalid(format!(
                "last knot time must be 1, got {}",
                knot_times.last().unwrap()
            )));
        }
        let mut times = Vec::with_capacity(knot_times.len());
        let mut values = Vec::with_capacity(knot_times.len() * dim);
        for (t, v) in knot_times.iter().zip(&knot_values) {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if !t.is_finite() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("knots must be finite"));
            }
            if let Some(&last) = times.last() {
                if *t < last {
                    return Err(Error::NonMonotone(
                        "knot times must be non-decreasing".into(),
                    ));
                }
                if *t == last {
                    // collapse the tie, keeping the incoming value
                    let base = values.len() - dim;
                    values[base..].copy_from_slice(v);
                    continue;
                }
            }
            times.push(*t);
            values.extend_from_slice(v);
        }
        if times.len() < 2 {
            return Err(Error::invalid("all knots collapsed to one time"));
        }
        Ok(Self {
            dim,
            knot_times: times,
            knot_values: values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn knots(&self) -> usize {
        self.knot_times.len()
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    pub fn knot_value(&self, k: usize) -> &[f64] {
        &self.knot_values[k * self.dim..(k + 1) * self.dim]
    }

    /// Value at `t` by linear interpolation; errors outside [0, 1].
    pub fn evaluate_at(&self, t: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("evaluation point {t} outside [0,1]")));
        }
        let pos = self.knot_times.partition_point(|&x| x < t);
        if pos < self.knot_times.len() && self.knot_times[pos] == t {
            return Ok(self.knot_value(pos).to_vec());
        }
        let hi = pos;
        let lo = hi - 1;
        let t0 = self.knot_times[lo];
        let t1 = self.knot_times[hi];
        let w = (t - t0) / (t1 - t0);
        let a = self.knot_value(lo);
        let b = self.knot_value(hi);
        Ok(a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect())
    }

    /// Endpoint value, `path(1)`.
    pub fn endpoint(&self) -> &[f64] {
        self.knot_value(self.knots() - 1)
    }

    /// Write the path as CSV rows `t,x1,...,xd`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "t")?;
        for i in 1..=self.dim {
            write!(out, ",x{i}")?;
        }
        writeln!(out)?;
        for k in 0..self.knots() {
            write!(out, "{}", self.knot_times[k])?;
            for v in self.knot_value(k) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Supremum distance between two paths of equal dimension.
///
/// Both paths are linear between consecutive merged knots, so the norm of
/// their difference is convex on each merged segment and attains its maximum
/// at a merged knot; the merged-knot maximum is therefore exact.
pub fn sup_distance(p: &PolylinePath, q: &PolylinePath) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let mut best = 0.0f64;
    let mut i = 0;
    let mut j = 0;
    let mut diff = vec![0.0; p.dim()];
    while i < p.knot_times.len() || j < q.knot_times.len() {
        let t = match (p.knot_times.get(i), q.knot_times.get(j)) {
            (Some(&a), Some(&b)) => {
                let t = a.min(b);
                if a <= t {
                    i += 1;
                }
                if b <= t {
                    j += 1;
                }
                t
            }
            (Some(&a), None) => {
                i += 1;
                a
            }
            (None, Some(&b)) => {
                j += 1;
                b
            }
            (None, None) => break,
        };
        let pv = p.evaluate_at(t)?;
        let qv = q.evaluate_at(t)?;
        for (d, (a, b)) in diff.iter_mut().zip(pv.iter().zip(&qv)) {
            *d = a - b;
        }
        best = best.max(norm(&diff));
    }
    Ok(best)
}

/// Positions `S_k = Σ_{i<=k} ε_i (T_i − T_{i−1})` of the unrescaled flight,
/// including `S_0 = 0`. Requires raw clocked times, so it is only usable for
/// clocks whose values fit in f64.
pub fn build_flight(clocked_times: &[f64], directions: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if directions.len() < clocked_times.len() {
        return Err(Error::LengthMismatch(format!(
            "{} directions for {} clocked times",
            directions.len(),
            clocked_times.len()
        )));
    }
    if clocked_times.is_empty() {
        return Err(Error::EmptySequence("build_flight".into()));
    }
    let dim = directions[0].len();
    let mut positions = Vec::with_capacity(clocked_times.len() + 1);
    positions.push(vec![0.0; dim]);
    let mut prev_t = 0.0;
    for (k, &t) in clocked_times.iter().enumerate() {
        if !t.is_finite() || t <= prev_t {
            return Err(Error::NonMonotone(format!(
                "clocked times must be finite and increasing at index {k}"
            )));
        }
        let dt = t - prev_t;
        let last = positions.last().unwrap().clone();
        let eps = &directions[k];
        if eps.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: eps.len(),
            });
        }
        positions.push(last.iter().zip(eps).map(|(x, e)| x + e * dt).collect());
        prev_t = t;
    }
    Ok(positions)
}

/// The rescaled broken line Z_n: knot times `T_k / T_n`, knot values
/// `S_k / B_n`, all assembled in log space so super-exponential clocks never
/// overflow.
pub fn rescaled_flight(
    arrivals: &ArrivalSequence,
    directions: &[Vec<f64>],
    normalization: Normalization,
) -> Result<PolylinePath> {
    let log_t = arrivals
        .log_clocked
        .as_ref()
        .ok_or_else(|| Error::invalid("apply a clock before rescaling"))?;
    let n = log_t.len();
    if directions.len() < n {
        return Err(Error::LengthMismatch(format!(
            "{} directions for {} arrivals",
            directions.len(),
            n
        )));
    }
    let dim = directions[0].len();
    let clock = arrivals.clock.as_ref().unwrap();
    let log_t_n = log_t[n - 1];

    // ln B_n
    let log_b = match (clock, normalization) {
        (crate::poisson_clock::ClockFunction::Power { alpha }, Normalization::GammaExact) => {
            (2.0 * alpha - 1.0) / 2.0 * arrivals.arrivals[n - 1].ln()
        }
        (crate::poisson_clock::ClockFunction::Power { alpha }, Normalization::NPower) => {
            (2.0 * alpha - 1.0) / 2.0 * (n as f64).ln()
        }
        _ => log_t_n,
    };

    // T_k / T_n and the increments (T_k − T_{k−1}) / B_n, in log space.
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    times.push(0.0);
    values.push(vec![0.0; dim]);
    let mut pos = vec![0.0; dim];
    let mut prev_scaled = 0.0; // T_0 / B_n with T_0 = 0
    for k in 0..n {
        let scaled = (log_t[k] - log_b).exp();
        let dt = scaled - prev_scaled;
        prev_scaled = scaled;
        let eps = &directions[k];
        if eps.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: eps.len(),
            });
        }
        for (p, e) in pos.iter_mut().zip(eps) {
            *p += e * dt;
        }
        let t = if k + 1 == n {
            1.0
        } else {
            (log_t[k] - log_t_n).exp()
        };
        times.push(t);
        values.push(pos.clone());
    }
    PolylinePath::new(times, values)
}

/// `sup_{t <= t_max} |path(t)|`. The norm is convex on each segment, so the
/// supremum is attained at a knot or at `t_max` itself.
pub fn sup_norm_until(path: &PolylinePath, t_max: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t_max) {
        return Err(Error::domain(format!("t_max {t_max} outside [0,1]")));
    }
    let mut best = norm(&path.evaluate_at(t_max)?);
    for k in 0..path.knots() {
        if path.knot_times[k] > t_max {
            break;
        }
        best = best.max(norm(path.knot_value(k)));
    }
    Ok(best)
}

/// `T_{n−1} / T_n` for the clocked sequence, formed in log space.
pub fn last_time_ratio(arrivals: &ArrivalSequence) -> Result<f64> {
    let log_t = arrivals
        .log_clocked
        .as_ref()
        .ok_or_else(|| Error::invalid("apply a clock first"))?;
    let n = log_t.len();
    if n < 2 {
        return Err(Error::invalid("need at least two arrivals"));
    }
    Ok((log_t[n - 2] - log_t[n - 1]).exp())
}
