//! Derivative-free local maximization in one or two dimensions.

/// Maximizes `f` with the Nelder-Mead simplex method starting from `x0`
/// with initial edge length `step`. Stops when every vertex lies within
/// `xtol` of the best vertex, or after `max_evals` evaluations.
pub(crate) fn maximize<F>(f: F, x0: &[f64], step: f64, xtol: f64, max_evals: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let d = x0.len();
    if d == 0 {
        return (Vec::new(), f(x0));
    }
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        f(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let combine = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(ai, bi)| ai + s * (bi - ai)).collect()
    };
    loop {
        // best first
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let best = simplex[0].0.clone();
        let spread = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&best)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= xtol || evals.get() >= max_evals {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|(x, _)| x[j]).sum::<f64>() / d as f64)
            .collect();
        let (worst, fw) = simplex[d].clone();
        let xr = combine(&centroid, &worst, -1.0);
        let fr = eval(&xr);
        if fr > simplex[0].1 {
            let xe = combine(&centroid, &worst, -2.0);
            let fe = eval(&xe);
            simplex[d] = if fe > fr { (xe, fe) } else { (xr, fr) };
        } else if fr > simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr > fw {
                let xc = combine(&centroid, &xr, 0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = combine(&centroid, &worst, 0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc > fw.max(fr) {
                simplex[d] = (xc, fc);
            } else {
                for i in 1..=d {
                    let x = combine(&best, &simplex[i].0, 0.5);
                    let v = eval(&x);
                    simplex[i] = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_2d() {
        let f = |x: &[f64]| -(x[0] - 1.3).powi(2) - 3.0 * (x[1] + 0.7).powi(2);
        let (x, v) = maximize(f, &[0.0, 0.0], 0.5, 1e-7, 10_000);
        assert!((x[0] - 1.3).abs() < 1e-6 && (x[1] + 0.7).abs() < 1e-6);
        assert!(v > -1e-11);
    }

    #[test]
    fn one_dimensional() {
        let f = |x: &[f64]| 1.0 / (1.0 + (x[0] - 4.0).powi(2));
        let (x, _) = maximize(f, &[0.0], 0.1, 1e-8, 10_000);
        assert!((x[0] - 4.0).abs() < 1e-7);
    }
}
