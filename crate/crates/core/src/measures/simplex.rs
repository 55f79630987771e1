//! L1 geometry of the probability simplex.

/// L1 distance from `y` to the probability simplex.
///
/// Equals `max(‖y‖₁ − 1, 1 − Σᵢ yᵢ)`: clamp negative coordinates to zero, then
/// remove excess mass or add missing mass.
pub fn l1_distance_to_simplex(y: &[f64]) -> f64 {
    let l1: f64 = y.iter().map(|x| x.abs()).sum();
    let sum: f64 = y.iter().sum();
    (l1 - 1.0).max(1.0 - sum).max(0.0)
}

/// An L1-closest point of the simplex.
///
/// Negative coordinates are clamped to zero. Excess mass is then removed from
/// coordinates in decreasing-value order (ties: lower index first), and missing
/// mass is added proportionally to the clamped vector (uniformly if it is zero).
/// Every such point attains [`l1_distance_to_simplex`].
pub fn l1_project_to_simplex(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n == 0 {
        return Vec::new();
    }
    let mut x: Vec<f64> = y.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let s: f64 = x.iter().sum();
    if s > 1.0 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
        let mut excess = s - 1.0;
        for i in order {
            if excess <= 0.0 {
                break;
            }
            let take = x[i].min(excess);
            x[i] -= take;
            excess -= take;
        }
    } else if s < 1.0 {
        if s > 0.0 {
            let scale = 1.0 / s;
            x.iter_mut().for_each(|v| *v *= scale);
        } else {
            x.iter_mut().for_each(|v| *v = 1.0 / n as f64);
        }
    }
    x
}

/// Clamp negatives and rescale to unit mass. Baseline for the projection tests.
pub fn clamp_renormalize(y: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = y.iter().map(|&v| v.max(0.0)).collect();
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    } else if !x.is_empty() {
        let u = 1.0 / x.len() as f64;
        x.iter_mut().for_each(|v| *v = u);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l1(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }

    fn in_simplex(x: &[f64]) -> bool {
        x.iter().all(|&v| v >= 0.0) && (x.iter().sum::<f64>() - 1.0).abs() < 1e-12
    }

    #[test]
    fn fixed_point_on_simplex() {
        let y = [0.2, 0.3, 0.5];
        assert_eq!(l1_project_to_simplex(&y), y.to_vec());
    }

    #[test]
    fn excess_removed_from_largest_lowest_index() {
        let x = l1_project_to_simplex(&[0.6, 0.6, 0.0]);
        assert!(in_simplex(&x));
        assert!((l1(&x, &[0.6, 0.6, 0.0]) - 0.2).abs() < 1e-12);
        assert!((x[0] - 0.4).abs() < 1e-12 && (x[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn negative_coordinate_clamped() {
        let y = [-0.2, 1.0];
        let x = l1_project_to_simplex(&y);
        assert_eq!(x, vec![0.0, 1.0]);
        // |0 - (-0.2)| + |1 - 1|
        assert!((l1(&x, &y) - 0.2).abs() < 1e-12);
        // brute force over a fine grid of the 1-simplex
        let best = (0..=10_000)
            .map(|i| {
                let a = i as f64 / 10_000.0;
                l1(&[a, 1.0 - a], &y)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((best - 0.2).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn projection_is_optimal_and_beats_renormalizing(y in proptest::collection::vec(-1.0f64..2.0, 1..12)) {
            let x = l1_project_to_simplex(&y);
            prop_assert!(in_simplex(&x));
            let d = l1(&x, &y);
            prop_assert!((d - l1_distance_to_simplex(&y)).abs() < 1e-10);
            prop_assert!(d <= l1(&clamp_renormalize(&y), &y) + 1e-12);
        }

        #[test]
        fn distance_lower_bounds_random_simplex_points(
            y in proptest::collection::vec(-1.0f64..2.0, 3),
            w in proptest::collection::vec(0.0f64..1.0, 3),
        ) {
            let s: f64 = w.iter().sum::<f64>() + 1e-12;
            let z: Vec<f64> = w.iter().map(|v| v / s).collect();
            prop_assert!(l1_distance_to_simplex(&y) <= l1(&z, &y) + 1e-9);
        }
    }
}
