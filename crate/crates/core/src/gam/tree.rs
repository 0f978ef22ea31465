//! Least-squares trees over histograms of residual sums.

/// Best single cut of `sum[..]`/`count[..]`: bins `< k` go left. Returns the
/// cut and its SSE reduction; both sides need `min_leaf` instances.
pub(crate) fn best_cut(sum: &[f64], count: &[usize], min_leaf: usize) -> Option<(usize, f64)> {
    let (s_all, n_all) = totals(sum, count);
    if n_all == 0 {
        return None;
    }
    let base = s_all * s_all / n_all as f64;
    let (mut sl, mut nl) = (0.0, 0usize);
    let mut best: Option<(usize, f64)> = None;
    for k in 1..sum.len() {
        sl += sum[k - 1];
        nl += count[k - 1];
        let nr = n_all - nl;
        if count[k - 1] == 0 || nl < min_leaf.max(1) || nr < min_leaf.max(1) {
            continue;
        }
        let sr = s_all - sl;
        let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - base;
        if gain > best.map_or(0.0, |b| b.1) {
            best = Some((k, gain));
        }
    }
    best
}

fn totals(sum: &[f64], count: &[usize]) -> (f64, usize) {
    (sum.iter().sum(), count.iter().sum())
}

fn mean(sum: &[f64], count: &[usize]) -> f64 {
    let (s, n) = totals(sum, count);
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Best-first tree over contiguous bin ranges with at most `max_leaves`
/// leaves. Returns the leaf mean of every bin.
pub(crate) fn fit_1d(sum: &[f64], count: &[usize], max_leaves: usize, min_leaf: usize) -> Vec<f64> {
    let mut leaves: Vec<(usize, usize, Option<(usize, f64)>)> =
        vec![(0, sum.len(), best_cut(sum, count, min_leaf))];
    while leaves.len() < max_leaves {
        let Some((i, _)) = leaves
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.2.map(|c| (i, c.1)))
            .fold(None, |acc: Option<(usize, f64)>, c| match acc {
                Some(a) if a.1 >= c.1 => Some(a),
                _ => Some(c),
            })
        else {
            break;
        };
        let (a, b, cut) = leaves[i];
        let k = a + cut.expect("leaf with a cut").0;
        let left = (a, k, best_cut(&sum[a..k], &count[a..k], min_leaf));
        let right = (k, b, best_cut(&sum[k..b], &count[k..b], min_leaf));
        leaves[i] = left;
        leaves.insert(i + 1, right);
    }
    let mut out = vec![0.0; sum.len()];
    for (a, b, _) in leaves {
        let m = mean(&sum[a..b], &count[a..b]);
        out[a..b].iter_mut().for_each(|v| *v = m);
    }
    out
}

/// Four-leaf tree on an `na x nb` grid (row-major, `a` outer): one cut on
/// either axis, then an independent cut along the other axis on each side.
/// Returns per-cell leaf means and the SSE reduction.
pub(crate) fn fit_2d(sum: &[f64], count: &[usize], na: usize, nb: usize, min_leaf: usize) -> (Vec<f64>, f64) {
    let (s_all, n_all) = totals(sum, count);
    let mut out = vec![mean(sum, count); sum.len()];
    if n_all == 0 {
        return (out, 0.0);
    }
    let base = s_all * s_all / n_all as f64;
    let cell = |a: usize, b: usize, a_first: bool| if a_first { a * nb + b } else { b * nb + a };
    let mut best: Option<(f64, bool, usize, Option<usize>, Option<usize>)> = None;
    for a_first in [true, false] {
        let (n1, n2) = if a_first { (na, nb) } else { (nb, na) };
        // marginals along the second axis for every prefix of the first axis
        let mut prefix_s = vec![0.0; n2];
        let mut prefix_n = vec![0usize; n2];
        let mut total_s = vec![0.0; n2];
        let mut total_n = vec![0usize; n2];
        for i in 0..n1 {
            for j in 0..n2 {
                total_s[j] += sum[cell(i, j, a_first)];
                total_n[j] += count[cell(i, j, a_first)];
            }
        }
        for k in 1..n1 {
            for j in 0..n2 {
                prefix_s[j] += sum[cell(k - 1, j, a_first)];
                prefix_n[j] += count[cell(k - 1, j, a_first)];
            }
            let rest_s: Vec<f64> = total_s.iter().zip(&prefix_s).map(|(t, p)| t - p).collect();
            let rest_n: Vec<usize> = total_n.iter().zip(&prefix_n).map(|(t, p)| t - p).collect();
            let (sl, nl) = totals(&prefix_s, &prefix_n);
            let (sr, nr) = totals(&rest_s, &rest_n);
            if nl < min_leaf.max(1) || nr < min_leaf.max(1) {
                continue;
            }
            let left = best_cut(&prefix_s, &prefix_n, min_leaf);
            let right = best_cut(&rest_s, &rest_n, min_leaf);
            let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - base
                + left.map_or(0.0, |c| c.1)
                + right.map_or(0.0, |c| c.1);
            if gain > best.map_or(0.0, |b| b.0) {
                best = Some((gain, a_first, k, left.map(|c| c.0), right.map(|c| c.0)));
            }
        }
    }
    let Some((gain, a_first, k, left, right)) = best else {
        return (out, 0.0);
    };
    let (n1, n2) = if a_first { (na, nb) } else { (nb, na) };
    for (range1, cut) in [(0..k, left), (k..n1, right)] {
        let cut = cut.unwrap_or(n2);
        for range2 in [0..cut, cut..n2] {
            let (mut s, mut n) = (0.0, 0usize);
            for i in range1.clone() {
                for j in range2.clone() {
                    s += sum[cell(i, j, a_first)];
                    n += count[cell(i, j, a_first)];
                }
            }
            let m = if n == 0 { 0.0 } else { s / n as f64 };
            for i in range1.clone() {
                for j in range2.clone() {
                    out[cell(i, j, a_first)] = m;
                }
            }
        }
    }
    (out, gain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sse(sum: &[f64], count: &[usize], sq: f64, fit: &[f64]) -> f64 {
        // sum over bins of sum_i (r_i - v)^2 = sq - 2 v S + n v^2
        sq - sum
            .iter()
            .zip(count)
            .zip(fit)
            .map(|((s, &n), v)| 2.0 * v * s - n as f64 * v * v)
            .sum::<f64>()
    }

    #[test]
    fn step_is_found_exactly() {
        let sum = [0.0, 0.0, 0.0, 10.0, 10.0];
        let count = [5, 5, 5, 5, 5];
        let fit = fit_1d(&sum, &count, 8, 1);
        assert_eq!(fit, vec![0.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn leaf_budget_is_respected() {
        let sum: Vec<f64> = (0..20).map(|i| (i as f64).powi(2)).collect();
        let count = vec![1; 20];
        for leaves in 1..6 {
            let fit = fit_1d(&sum, &count, leaves, 1);
            let mut distinct = fit.clone();
            distinct.dedup();
            assert!(distinct.len() <= leaves);
        }
    }

    #[test]
    fn min_leaf_blocks_small_splits() {
        let sum = [5.0, 0.0, 0.0];
        let count = [1, 5, 5];
        let fit = fit_1d(&sum, &count, 8, 2);
        assert!(fit[0] != 5.0 || fit[1] != 0.0);
        assert!(best_cut(&[1.0], &[1], 1).is_none());
    }

    #[test]
    fn gain_matches_sse_reduction() {
        let sum = [1.0, -2.0, 3.0, 0.5, 4.0, -1.0, 2.0, 0.0, 1.0];
        let count = [2, 1, 3, 1, 2, 2, 1, 1, 3];
        let sq = 50.0;
        let mean_fit = vec![mean(&sum, &count); 9];
        let (fit, gain) = fit_2d(&sum, &count, 3, 3, 1);
        let drop = sse(&sum, &count, sq, &mean_fit) - sse(&sum, &count, sq, &fit);
        assert!((drop - gain).abs() < 1e-9, "{drop} vs {gain}");
        let mut distinct = fit.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert!(distinct.len() <= 4);
    }

    #[test]
    fn checkerboard_needs_both_axes() {
        // +1 where a < 2 xor b < 2 on a 4x4 grid
        let mut sum = vec![0.0; 16];
        for a in 0..4 {
            for b in 0..4 {
                sum[a * 4 + b] = if (a < 2) ^ (b < 2) { 1.0 } else { -1.0 };
            }
        }
        let (fit, _) = fit_2d(&sum, &[1; 16], 4, 4, 1);
        assert_eq!(fit, sum);
    }
}
