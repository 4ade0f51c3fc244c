//! Box-constrained derivative-free minimization used for hyperparameter fits.

use rand::seq::SliceRandom;
use rand::Rng;

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// `n` Latin-hypercube points in the box: each coordinate hits every one of
/// `n` equal strata exactly once.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, bounds: &Bounds, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; bounds.dim()]; n];
    for k in 0..bounds.dim() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        let (lo, hi) = (bounds.lower[k], bounds.upper[k]);
        for (p, s) in points.iter_mut().zip(strata) {
            let u = (s as f64 + rng.random::<f64>()) / n as f64;
            p[k] = lo + u * (hi - lo);
        }
    }
    points
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Stop when the simplex spread of function values falls below this.
    pub ftol: f64,
    /// Stop when every vertex is within this distance of the best vertex.
    pub xtol: f64,
    /// Initial simplex edge as a fraction of each box width.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iters: 400,
            ftol: 1e-10,
            xtol: 1e-7,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder–Mead with every trial point projected onto the box. `f` returning
/// `None` (or a non-finite value) is treated as `+∞`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> Option<f64>,
    x0: &[f64],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Minimum {
    let d = x0.len();
    let mut eval = |x: &[f64]| match f(x) {
        Some(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    };
    let project = |mut x: Vec<f64>| {
        bounds.clamp(&mut x);
        x
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let start = project(x0.to_vec());
    let v = eval(&start);
    simplex.push((start.clone(), v));
    for k in 0..d {
        let width = bounds.upper[k] - bounds.lower[k];
        let mut x = start.clone();
        let step = opts.initial_step * width;
        x[k] = if x[k] + step <= bounds.upper[k] {
            x[k] + step
        } else {
            x[k] - step
        };
        let x = project(x);
        let v = eval(&x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    while iterations < opts.max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[d].1;
        let spread = if best.is_finite() && worst.is_finite() {
            (worst - best).abs()
        } else {
            f64::INFINITY
        };
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| dist(x, &simplex[0].0))
            .fold(0.0, f64::max);
        if spread <= opts.ftol * (1.0 + best.abs()) && diameter <= opts.xtol {
            break;
        }
        if diameter <= 1e-14 {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|(x, _)| x[k]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| {
            project(
                centroid
                    .iter()
                    .zip(&simplex[d].0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect(),
            )
        };

        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[d].1 {
            let x = along(-0.5);
            let v = eval(&x);
            (x, v)
        } else {
            let x = along(0.5);
            let v = eval(&x);
            (x, v)
        };
        if fc < simplex[d].1.min(fr) {
            simplex[d] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = project(
                x_best
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, v)| b + 0.5 * (v - b))
                    .collect(),
            );
            let v = eval(&x);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn latin_hypercube_covers_every_stratum() {
        let b = Bounds::new(vec![-3.0, 0.0], vec![3.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = latin_hypercube(10, &b, &mut rng);
        for k in 0..2 {
            let mut hits = [false; 10];
            for p in &pts {
                let u = (p[k] - b.lower[k]) / (b.upper[k] - b.lower[k]);
                hits[(u * 10.0) as usize] = true;
            }
            assert!(hits.iter().all(|&h| h));
        }
    }

    #[test]
    fn minimizes_rosenbrock() {
        let b = Bounds::new(vec![-2.0, -2.0], vec![2.0, 2.0]);
        let opts = NelderMeadOptions {
            max_iters: 2000,
            xtol: 1e-9,
            ..Default::default()
        };
        let m = nelder_mead(
            |x| Some(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)),
            &[-1.2, 1.0],
            &b,
            &opts,
        );
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{m:?}");
    }

    #[test]
    fn respects_bounds_and_failures() {
        let b = Bounds::new(vec![0.5], vec![3.0]);
        let m = nelder_mead(
            |x| if x[0] > 2.5 { None } else { Some(x[0] * x[0]) },
            &[2.0],
            &b,
            &NelderMeadOptions::default(),
        );
        assert!((m.x[0] - 0.5).abs() < 1e-7);
        assert!((m.value - 0.25).abs() < 1e-6);
    }
}
