//! Box-projected Nelder-Mead for two parameters.
//!
//! Every trial point is projected onto the box before evaluation, so the
//! simplex never leaves the domain. Coefficients are the standard ones
//! (reflection 1, expansion 2, contraction 1/2, shrink 1/2).

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl Domain {
    pub fn new(lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        for i in 0..2 {
            if !(lower[i] <= upper[i]) {
                return Err(invalid(format!(
                    "domain needs lower <= upper on axis {i}, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    #[inline]
    pub fn project(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].max(self.lower[0]).min(self.upper[0]), p[1].max(self.lower[1]).min(self.upper[1])]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| self.lower[i] <= p[i] && p[i] <= self.upper[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Converged once both the simplex diameter and the spread of vertex
    /// values fall below this.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Offsets of the initial simplex along each axis.
    pub initial_step: [f64; 2],
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iter: 500, initial_step: [0.1, 0.1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub point: [f64; 2],
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Minimise `f` over `domain` starting from `init`.
pub fn nelder_mead<F>(mut f: F, init: [f64; 2], domain: &Domain, opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut([f64; 2]) -> f64,
{
    let mut eval = |p: [f64; 2]| {
        let p = domain.project(p);
        let v = f(p);
        (p, if v.is_nan() { f64::INFINITY } else { v })
    };

    let x0 = domain.project(init);
    let mut simplex = [eval(x0); 3];
    for axis in 0..2 {
        let mut p = x0;
        p[axis] += opts.initial_step[axis];
        // step inward when the forward vertex would sit on the boundary
        if domain.project(p)[axis] == x0[axis] {
            p[axis] = x0[axis] - opts.initial_step[axis];
        }
        simplex[axis + 1] = eval(p);
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // stable sort keeps earlier vertices first on ties
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let [best, mid, worst] = simplex;

        let diameter = dist(best.0, mid.0).max(dist(best.0, worst.0)).max(dist(mid.0, worst.0));
        let spread = worst.1 - best.1;
        if diameter < opts.tolerance && (spread < opts.tolerance || !spread.is_finite()) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let centroid = lerp(best.0, mid.0, 0.5);
        let reflected = eval(lerp(centroid, worst.0, -1.0));
        if reflected.1 < best.1 {
            let expanded = eval(lerp(centroid, worst.0, -2.0));
            simplex[2] = if expanded.1 < reflected.1 { expanded } else { reflected };
            continue;
        }
        if reflected.1 < mid.1 {
            simplex[2] = reflected;
            continue;
        }
        let contracted = if reflected.1 < worst.1 {
            eval(lerp(centroid, reflected.0, 0.5))
        } else {
            eval(lerp(centroid, worst.0, 0.5))
        };
        if contracted.1 < worst.1.min(reflected.1) {
            simplex[2] = contracted;
            continue;
        }
        simplex[1] = eval(lerp(best.0, mid.0, 0.5));
        simplex[2] = eval(lerp(best.0, worst.0, 0.5));
    }

    let (point, value) = simplex[0];
    Minimum { point, value, converged, iterations }
}

/// Repeated Nelder-Mead: each restart begins at the incumbent with a fresh
/// simplex whose steps are scaled by the corresponding entry of `step_scales`.
pub fn nelder_mead_restarts<F>(
    mut f: F,
    init: [f64; 2],
    domain: &Domain,
    opts: &NelderMeadOptions,
    step_scales: &[f64],
) -> Minimum
where
    F: FnMut([f64; 2]) -> f64,
{
    let mut best = nelder_mead(&mut f, init, domain, opts);
    let mut total = best.iterations;
    for &scale in step_scales {
        let restart_opts =
            NelderMeadOptions { initial_step: [opts.initial_step[0] * scale, opts.initial_step[1] * scale], ..*opts };
        let next = nelder_mead(&mut f, best.point, domain, &restart_opts);
        total += next.iterations;
        if next.value <= best.value {
            best = next;
        } else {
            best.converged = next.converged;
        }
    }
    best.iterations = total;
    best
}
