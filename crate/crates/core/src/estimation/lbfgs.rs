//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    /// Number of correction pairs kept.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the gradient max-norm drops below this.
    pub gradient_tolerance: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search_evaluations: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_evaluations: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::GradientTolerance
    }

    pub fn gradient_norm(&self) -> f64 {
        max_norm(&self.gradient)
    }
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Point {
    step: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    gradient: Vec<f64>,
}

struct Probe<'a, F> {
    objective: &'a mut F,
    origin: &'a [f64],
    direction: &'a [f64],
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Probe<'_, F> {
    fn at(&mut self, step: f64) -> Point {
        let x: Vec<f64> = self
            .origin
            .iter()
            .zip(self.direction)
            .map(|(o, d)| o + step * d)
            .collect();
        let (value, gradient) = (self.objective)(&x);
        self.evaluations += 1;
        let finite = value.is_finite() && gradient.iter().all(|g| g.is_finite());
        let (value, slope) = if finite {
            (value, dot(&gradient, self.direction))
        } else {
            (f64::INFINITY, f64::NAN)
        };
        Point {
            step,
            value,
            slope,
            x,
            gradient,
        }
    }
}

/// Trial step inside `[lo, hi]` from a quadratic fit of the value at both
/// ends and the slope at `lo`, kept away from the ends.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.step, hi.step);
    let width = b - a;
    let mut t = 0.5 * (a + b);
    if hi.value.is_finite() && lo.slope.is_finite() {
        let denom = 2.0 * (hi.value - lo.value - lo.slope * width);
        if denom.abs() > 0.0 {
            let cand = a - lo.slope * width * width / denom;
            if cand.is_finite() {
                t = cand;
            }
        }
    }
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    t.clamp(left + margin, right - margin)
}

fn line_search<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    probe: &mut Probe<'_, F>,
    value0: f64,
    slope0: f64,
    initial_step: f64,
    opts: &LbfgsOptions,
) -> Option<Point> {
    let armijo = |p: &Point| p.value <= value0 + opts.c1 * p.step * slope0;
    let curvature = |p: &Point| p.slope.abs() <= -opts.c2 * slope0;

    let mut prev = Point {
        step: 0.0,
        value: value0,
        slope: slope0,
        x: probe.origin.to_vec(),
        gradient: Vec::new(),
    };
    let mut step = initial_step;
    let mut first = true;
    let (mut lo, mut hi);
    loop {
        if probe.evaluations >= opts.max_line_search_evaluations {
            return (prev.step > 0.0).then_some(prev);
        }
        let cur = probe.at(step);
        if !armijo(&cur) || (!first && cur.value >= prev.value) {
            lo = prev;
            hi = cur;
            break;
        }
        if curvature(&cur) {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            hi = prev;
            lo = cur;
            break;
        }
        first = false;
        step *= 2.0;
        prev = cur;
    }

    // Zoom: `lo` satisfies sufficient decrease and has the lowest value seen.
    loop {
        if probe.evaluations >= opts.max_line_search_evaluations
            || (hi.step - lo.step).abs() <= 1e-16 * lo.step.abs().max(1e-300)
        {
            return (lo.step > 0.0).then_some(lo);
        }
        let trial = probe.at(interpolate(&lo, &hi));
        if !armijo(&trial) || trial.value >= lo.value {
            hi = trial;
        } else {
            if curvature(&trial) {
                return Some(trial);
            }
            if trial.slope * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            lo = trial;
        }
    }
}

/// Minimizes `objective`, which returns the value and gradient at a point.
/// Non-finite values are treated as lying outside the domain.
pub fn minimize<F>(mut objective: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (mut value, mut gradient) = objective(&x0);
    let mut x = x0;
    let mut evaluations = 1;
    let mut trace = vec![value];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;

    let stop = loop {
        if max_norm(&gradient) < opts.gradient_tolerance {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break StopReason::MaxIterations;
        }

        // Two-loop recursion.
        let mut dir: Vec<f64> = gradient.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &dir);
            for (d, yi) in dir.iter_mut().zip(y) {
                *d -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let scale = dot(s, y) / dot(y, y);
            for d in &mut dir {
                *d *= scale;
            }
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            for (d, si) in dir.iter_mut().zip(s) {
                *d += (a - b) * si;
            }
        }
        let mut slope = dot(&gradient, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = gradient.iter().map(|g| -g).collect();
            slope = dot(&gradient, &dir);
        }
        let initial_step = if pairs.is_empty() {
            (1.0 / dot(&gradient, &gradient).sqrt()).min(1.0)
        } else {
            1.0
        };

        let found = {
            let mut probe = Probe {
                objective: &mut objective,
                origin: &x,
                direction: &dir,
                evaluations: 0,
            };
            let found = line_search(&mut probe, value, slope, initial_step, opts);
            evaluations += probe.evaluations;
            found
        };
        let Some(point) = found else {
            if pairs.is_empty() {
                break StopReason::LineSearchFailed;
            }
            pairs.clear();
            continue;
        };

        let s: Vec<f64> = point.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = point.gradient.iter().zip(&gradient).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = point.x;
        value = point.value;
        gradient = point.gradient;
        trace.push(value);
        iterations += 1;
    };

    Minimum {
        x,
        value,
        gradient,
        iterations,
        evaluations,
        stop,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        (f, g)
    }

    #[test]
    fn solves_rosenbrock() {
        let m = minimize(rosenbrock, vec![-1.2, 1.0], &LbfgsOptions::default());
        assert!(m.converged(), "{:?}", m.stop);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_in_many_dimensions() {
        let scales: Vec<f64> = (1..=40).map(|i| i as f64).collect();
        let f = |x: &[f64]| {
            let v = x.iter().zip(&scales).map(|(xi, s)| 0.5 * s * (xi - 1.0).powi(2)).sum();
            let g = x.iter().zip(&scales).map(|(xi, s)| s * (xi - 1.0)).collect();
            (v, g)
        };
        let m = minimize(f, vec![0.0; 40], &LbfgsOptions::default());
        assert!(m.converged());
        assert!(m.x.iter().all(|xi| (xi - 1.0).abs() < 1e-6));
    }

    #[test]
    fn steps_back_from_infeasible_region() {
        // -log(x) + x has its minimum at 1 and is undefined for x <= 0.
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                (f64::NAN, vec![f64::NAN])
            } else {
                (-x[0].ln() + x[0], vec![-1.0 / x[0] + 1.0])
            }
        };
        let m = minimize(f, vec![0.01], &LbfgsOptions::default());
        assert!(m.converged());
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn respects_iteration_budget() {
        let opts = LbfgsOptions {
            max_iterations: 2,
            ..LbfgsOptions::default()
        };
        let m = minimize(rosenbrock, vec![-1.2, 1.0], &opts);
        assert_eq!(m.stop, StopReason::MaxIterations);
        assert_eq!(m.iterations, 2);
    }
}
