//! Derivative-free constant fitting: Nelder-Mead simplex with fixed
//! multi-start seeds, capped by a total evaluation budget.

/// Minimize `f` from `x0` with at most `max_evals` function evaluations.
/// Returns the best point and value. Fully deterministic.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    // Initial simplex: x0 plus per-coordinate steps.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let fx0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), fx0));
    for i in 0..n {
        let mut x = x0.to_vec();
        let step = if x[i].abs() > 1e-12 {
            0.25 * x[i].abs()
        } else {
            0.25
        };
        x[i] += step;
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
        if evals >= max_evals {
            break;
        }
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let worst = simplex.len() - 1;
        // Centroid of all but the worst.
        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(worst) {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= worst as f64;
        }

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[worst].0)
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let f_r = eval(&reflect, &mut evals);
        if f_r < simplex[0].1 {
            // Try expanding.
            if evals < max_evals {
                let expand: Vec<f64> = centroid
                    .iter()
                    .zip(&reflect)
                    .map(|(c, r)| c + gamma * (r - c))
                    .collect();
                let f_e = eval(&expand, &mut evals);
                simplex[worst] = if f_e < f_r {
                    (expand, f_e)
                } else {
                    (reflect, f_r)
                };
            } else {
                simplex[worst] = (reflect, f_r);
            }
        } else if f_r < simplex[worst - 1].1 {
            simplex[worst] = (reflect, f_r);
        } else if evals < max_evals {
            // Contract toward the centroid.
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst].0)
                .map(|(c, w)| c + rho * (w - c))
                .collect();
            let f_c = eval(&contract, &mut evals);
            if f_c < simplex[worst].1 {
                simplex[worst] = (contract, f_c);
            } else {
                // Shrink everything toward the best point.
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for (x, b) in entry.0.iter_mut().zip(&best) {
                        *x = b + sigma * (*x - *b);
                    }
                    entry.1 = eval(&entry.0.clone(), &mut evals);
                    if evals >= max_evals {
                        break;
                    }
                }
            }
        }
        // Convergence: simplex collapsed.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[simplex.len() - 1].1 - simplex[0].1;
        if spread.abs() < 1e-14 * (1.0 + simplex[0].1.abs()) {
            break;
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}
