/// Population standard deviation; 0 for fewer than two values.
pub fn population_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannWhitney {
    /// Pairs with `x > y`, ties counting one half.
    pub u: f64,
    /// `P(U ≥ u)` when group labels are exchangeable.
    pub p_value: f64,
    /// Whether the p-value comes from full enumeration.
    pub exact: bool,
}

fn u_statistic(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .map(|a| {
            y.iter()
                .map(|b| match a.partial_cmp(b) {
                    Some(std::cmp::Ordering::Greater) => 1.0,
                    Some(std::cmp::Ordering::Equal) => 0.5,
                    _ => 0.0,
                })
                .sum::<f64>()
        })
        .sum()
}

/// One-sided rank-sum test of "x tends to exceed y".
///
/// Enumerates every relabeling of the pooled sample when there are at most a
/// million of them, which handles ties exactly; otherwise falls back to the
/// normal approximation with continuity correction.
pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> MannWhitney {
    let u = u_statistic(x, y);
    let (n1, n2) = (x.len(), y.len());
    if n1 == 0 || n2 == 0 {
        return MannWhitney {
            u,
            p_value: 1.0,
            exact: true,
        };
    }
    let total = n1 + n2;
    let mut combos = 1.0f64;
    for k in 0..n1 {
        combos = combos * (total - k) as f64 / (k + 1) as f64;
    }
    if combos <= 1e6 {
        let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
        let (mut hits, mut count) = (0u64, 0u64);
        let mut pick = Vec::with_capacity(n1);
        enumerate(&pooled, n1, 0, &mut pick, &mut |chosen| {
            let mut in_x = vec![false; total];
            for &k in chosen {
                in_x[k] = true;
            }
            let xs: Vec<f64> = (0..total).filter(|&k| in_x[k]).map(|k| pooled[k]).collect();
            let ys: Vec<f64> = (0..total).filter(|&k| !in_x[k]).map(|k| pooled[k]).collect();
            if u_statistic(&xs, &ys) >= u - 1e-9 {
                hits += 1;
            }
            count += 1;
        });
        return MannWhitney {
            u,
            p_value: hits as f64 / count as f64,
            exact: true,
        };
    }
    let mean = (n1 * n2) as f64 / 2.0;
    let sd = ((n1 * n2 * (total + 1)) as f64 / 12.0).sqrt();
    let z = (u - 0.5 - mean) / sd;
    MannWhitney {
        u,
        p_value: 0.5 * erfc(z / std::f64::consts::SQRT_2),
        exact: false,
    }
}

fn enumerate(pool: &[f64], k: usize, start: usize, pick: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if pick.len() == k {
        visit(pick);
        return;
    }
    let need = k - pick.len();
    for i in start..=pool.len() - need {
        pick.push(i);
        enumerate(pool, k, i + 1, pick, visit);
        pick.pop();
    }
}

/// Complementary error function (Numerical Recipes rational approximation,
/// relative error below 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn separated_groups_of_five_reach_the_smallest_exact_p() {
        let r = mann_whitney_greater(&[6.0, 7.0, 8.0, 9.0, 10.0], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(r.u, 25.0);
        assert!(r.exact);
        assert_abs_diff_eq!(r.p_value, 1.0 / 252.0, epsilon = 1e-15);
        let r = mann_whitney_greater(&[1.0, 2.0, 3.0, 4.0, 5.0], &[6.0, 7.0, 8.0, 9.0, 10.0]);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn exact_tail_matches_hand_count() {
        // n1 = n2 = 2: U takes 0,1,2,2,3,4 over the 6 labelings.
        let r = mann_whitney_greater(&[3.0, 4.0], &[1.0, 2.0]);
        assert_abs_diff_eq!(r.p_value, 1.0 / 6.0, epsilon = 1e-15);
        let r = mann_whitney_greater(&[2.0, 4.0], &[1.0, 3.0]);
        assert_eq!(r.u, 3.0);
        assert_abs_diff_eq!(r.p_value, 2.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn all_tied_gives_p_one() {
        let r = mann_whitney_greater(&[1.0; 3], &[1.0; 4]);
        assert_eq!(r.u, 6.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn large_samples_use_the_normal_tail() {
        let x: Vec<f64> = (0..40).map(|k| k as f64 + 10.0).collect();
        let y: Vec<f64> = (0..40).map(|k| k as f64).collect();
        let r = mann_whitney_greater(&x, &y);
        assert!(!r.exact);
        assert!(r.p_value < 0.01 && r.p_value > 0.0);
        assert_abs_diff_eq!(erfc(0.0), 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(erfc(1.0), 0.157_299_207_050_285_1, epsilon = 1e-7);
    }

    #[test]
    fn population_sd_examples() {
        assert_eq!(population_sd(&[2.0, 0.0]), 1.0);
        assert_eq!(population_sd(&[1.0, 0.0]), 0.5);
        assert_eq!(population_sd(&[3.0]), 0.0);
        assert_abs_diff_eq!(population_sd(&[1.0, 2.0, 3.0, 4.0]), 1.25f64.sqrt(), epsilon = 1e-15);
    }
}
