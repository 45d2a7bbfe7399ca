//! Optimal one-to-one box matching.

use crate::geometry::BoundingBox;
use crate::scalar::Scalar;

/// Two matchings whose total IoU differs by at most this are tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Minimum-cost perfect assignment on a square matrix. Returns the total
/// cost and the column assigned to each row.
pub(crate) fn hungarian(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    let total = (0..n).map(|i| cost[i][assign[i]]).sum();
    (total, assign)
}

/// Best achievable total weight using only `rows` × `cols`.
fn best_total(w: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len().max(cols.len());
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let mut cost = vec![vec![0.0; k]; k];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            cost[a][b] = -w[i][j];
        }
    }
    -hungarian(&cost).0
}

/// Canonical maximum-weight matching on a non-negative weight matrix where
/// zero means "not allowed".
///
/// Among all matchings within [`TIE_TOLERANCE`] of the optimum, returns the
/// one whose partner vector (row order, unmatched sorting last) is
/// lexicographically smallest.
pub(crate) fn canonical_matching(w: &[Vec<f64>], n_cols: usize) -> Vec<Option<usize>> {
    let n = w.len();
    let all_rows: Vec<usize> = (0..n).collect();
    let mut free_cols: Vec<usize> = (0..n_cols).collect();
    let optimum = best_total(w, &all_rows, &free_cols);
    let mut fixed = 0.0;
    let mut partners = vec![None; n];
    for i in 0..n {
        let rest = &all_rows[i + 1..];
        for pos in 0..free_cols.len() {
            let j = free_cols[pos];
            if w[i][j] <= 0.0 {
                continue;
            }
            let mut remaining = free_cols.clone();
            remaining.remove(pos);
            if fixed + w[i][j] + best_total(w, rest, &remaining) >= optimum - TIE_TOLERANCE {
                partners[i] = Some(j);
                fixed += w[i][j];
                free_cols = remaining;
                break;
            }
        }
    }
    partners
}

/// IoU weight matrix with entries below `thr` zeroed.
pub(crate) fn iou_weights(preds: &[BoundingBox<f64>], gts: &[BoundingBox<f64>], thr: f64) -> Vec<Vec<f64>> {
    preds
        .iter()
        .map(|p| {
            gts.iter()
                .map(|g| {
                    let iou = p.iou(g);
                    if iou >= thr && iou > 0.0 {
                        iou
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Maximum-total-IoU one-to-one matching over pairs with IoU ≥ `thr`.
///
/// Returns `(pred index, gt index)` pairs in pred order. Ties between
/// equally good matchings go to the smaller pred index first, then the
/// smaller gt index.
pub fn match_frame<T: Scalar>(preds: &[BoundingBox<T>], gts: &[BoundingBox<T>], thr: f64) -> Vec<(usize, usize)> {
    let p: Vec<_> = preds.iter().map(|b| b.cast::<f64>()).collect();
    let g: Vec<_> = gts.iter().map(|b| b.cast::<f64>()).collect();
    canonical_matching(&iou_weights(&p, &g, thr), g.len())
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect()
}
