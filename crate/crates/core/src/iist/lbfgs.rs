//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The line search brackets a step satisfying both Wolfe conditions and then
//! zooms with safeguarded cubic interpolation (Nocedal & Wright, alg. 3.5/3.6).

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::Result;

use super::config::LbfgsParams;

/// Objective value and gradient at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl Evaluation {
    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Largest gradient component below `grad_tol`.
    Converged,
    MaxIterations,
    /// No step producing a decrease could be found.
    LineSearchFailed,
    /// The objective returned NaN or infinity; the best iterate is kept.
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub value: f64,
    /// Accepted objective values, starting with the value at `x0`.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, bounds: Option<(f64, f64)>) -> f64 {
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let t = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if t.is_finite() {
            return t.clamp(lo, hi);
        }
    }
    (lo + hi) / 2.0
}

struct Trial {
    t: f64,
    eval: Evaluation,
    slope: f64,
}

enum Search {
    Found(Trial),
    /// The search ran out of budget; the lowest point seen is returned.
    Exhausted(Trial),
    NonFinite,
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    evaluations: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    fn eval(&mut self, t: f64) -> Result<Option<Trial>> {
        let point: Vec<f64> = self.x.iter().zip(self.d).map(|(x, d)| x + t * d).collect();
        let eval = (self.objective)(&point)?;
        self.evaluations += 1;
        if !eval.is_finite() {
            return Ok(None);
        }
        let slope = dot(&eval.gradient, self.d);
        Ok(Some(Trial { t, eval, slope }))
    }

    fn run(&mut self, start: Trial, t0: f64, p: &LbfgsParams) -> Result<Search> {
        let (f0, g0) = (start.eval.value, start.slope);
        let d_norm = inf_norm(self.d);
        let tolerance_change = 1e-9;
        let budget = p.max_line_search;

        let Some(mut cur) = self.eval(t0)? else {
            return Ok(Search::NonFinite);
        };
        let mut prev = start;
        let mut iters = 0;
        let mut bracket: [Trial; 2];
        loop {
            if cur.eval.value > f0 + p.c1 * cur.t * g0 || (iters > 1 && cur.eval.value >= prev.eval.value) {
                bracket = [prev, cur];
                break;
            }
            if cur.slope.abs() <= -p.c2 * g0 {
                return Ok(Search::Found(cur));
            }
            if cur.slope >= 0.0 {
                bracket = [prev, cur];
                break;
            }
            iters += 1;
            if iters >= budget {
                return Ok(Search::Exhausted(if cur.eval.value < prev.eval.value { cur } else { prev }));
            }
            let min_step = cur.t + 0.01 * (cur.t - prev.t);
            let max_step = cur.t * 10.0;
            let t = cubic_interpolate(
                prev.t,
                prev.eval.value,
                prev.slope,
                cur.t,
                cur.eval.value,
                cur.slope,
                Some((min_step, max_step)),
            );
            let Some(next) = self.eval(t)? else {
                return Ok(Search::NonFinite);
            };
            prev = cur;
            cur = next;
        }

        // zoom
        let mut insufficient_progress = false;
        let mut low = if bracket[0].eval.value <= bracket[1].eval.value { 0 } else { 1 };
        while iters < budget {
            let high = 1 - low;
            if (bracket[1].t - bracket[0].t).abs() * d_norm < tolerance_change {
                break;
            }
            let mut t = cubic_interpolate(
                bracket[0].t,
                bracket[0].eval.value,
                bracket[0].slope,
                bracket[1].t,
                bracket[1].eval.value,
                bracket[1].slope,
                None,
            );
            let (bmin, bmax) = if bracket[0].t < bracket[1].t {
                (bracket[0].t, bracket[1].t)
            } else {
                (bracket[1].t, bracket[0].t)
            };
            let eps = 0.1 * (bmax - bmin);
            if (bmax - t).min(t - bmin) < eps {
                if insufficient_progress || t >= bmax || t <= bmin {
                    t = if (t - bmax).abs() < (t - bmin).abs() { bmax - eps } else { bmin + eps };
                    insufficient_progress = false;
                } else {
                    insufficient_progress = true;
                }
            } else {
                insufficient_progress = false;
            }
            let Some(trial) = self.eval(t)? else {
                return Ok(Search::NonFinite);
            };
            iters += 1;
            if trial.eval.value > f0 + p.c1 * trial.t * g0 || trial.eval.value >= bracket[low].eval.value {
                bracket[high] = trial;
                low = if bracket[0].eval.value <= bracket[1].eval.value { 0 } else { 1 };
            } else {
                let wolfe = trial.slope.abs() <= -p.c2 * g0;
                if !wolfe && trial.slope * (bracket[high].t - bracket[low].t) >= 0.0 {
                    bracket.swap(0, 1);
                    // the old low now sits at `high`; `low` is overwritten below
                }
                bracket[low] = trial;
                if wolfe {
                    let [a, b] = bracket;
                    return Ok(Search::Found(if low == 0 { a } else { b }));
                }
            }
        }
        let [a, b] = bracket;
        Ok(Search::Exhausted(if low == 0 { a } else { b }))
    }
}

/// Minimizes `objective` from `x0`.
///
/// Accepted steps never increase the objective. Errors from the objective
/// are propagated; non-finite values end the run with
/// [`Termination::NonFinite`] and the last accepted iterate.
pub fn lbfgs_minimize<F>(mut objective: F, x0: Vec<f64>, params: &LbfgsParams) -> Result<LbfgsReport>
where
    F: FnMut(&[f64]) -> Result<Evaluation>,
{
    params.validate()?;
    let mut x = x0;
    let mut current = objective(&x)?;
    let mut evaluations = 1;
    let mut history = vec![current.value];
    let finish = |x, value, history, iterations, evaluations, termination| {
        Ok(LbfgsReport {
            x,
            value,
            history,
            iterations,
            evaluations,
            termination,
        })
    };
    if !current.is_finite() {
        let v = current.value;
        return finish(x, v, history, 0, evaluations, Termination::NonFinite);
    }
    if inf_norm(&current.gradient) <= params.grad_tol {
        let v = current.value;
        return finish(x, v, history, 0, evaluations, Termination::Converged);
    }

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(params.memory);
    let mut iterations = 0;
    let termination = loop {
        if iterations >= params.max_iters {
            break Termination::MaxIterations;
        }
        let g = &current.gradient;
        // two-loop recursion
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut direction = q;
        let mut slope = dot(g, &direction);
        if !(slope < 0.0) {
            // not a descent direction: drop the memory and use steepest descent
            pairs.clear();
            direction = g.iter().map(|v| -v).collect();
            slope = dot(g, &direction);
        }
        let t0 = if pairs.is_empty() {
            let l1: f64 = g.iter().map(|v| v.abs()).sum();
            (1.0 / l1).min(1.0)
        } else {
            1.0
        };

        let start = Trial {
            t: 0.0,
            eval: current.clone(),
            slope,
        };
        let mut ls = LineSearch {
            objective: &mut objective,
            x: &x,
            d: &direction,
            evaluations: 0,
        };
        let outcome = ls.run(start, t0, params)?;
        evaluations += ls.evaluations;
        let trial = match outcome {
            Search::NonFinite => break Termination::NonFinite,
            Search::Found(t) | Search::Exhausted(t) => t,
        };
        if !(trial.eval.value < current.value) || trial.t == 0.0 {
            break Termination::LineSearchFailed;
        }

        let s: Vec<f64> = direction.iter().map(|d| trial.t * d).collect();
        let y: Vec<f64> = trial.eval.gradient.iter().zip(&current.gradient).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        if sy > 1e-10 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if pairs.len() == params.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        current = trial.eval;
        iterations += 1;
        history.push(current.value);
        if inf_norm(&current.gradient) <= params.grad_tol {
            break Termination::Converged;
        }
    };
    let v = current.value;
    finish(x, v, history, iterations, evaluations, termination)
}
