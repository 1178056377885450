//! Exact linear assignment (Jonker-Volgenant): column reduction, reduction
//! transfer and augmenting row reduction, then shortest augmenting paths.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Minimum-cost perfect matching for a dense `n x n` row-major cost matrix.
/// Returns `col_for_row`.
pub fn solve(cost: &[f64], n: usize) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::Invalid(format!(
            "assignment cost matrix has {} entries, expected {}",
            cost.len(),
            n * n
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteMatrix("assignment cost matrix"));
    }
    if n <= 1 {
        return Ok((0..n).collect());
    }
    let c = |i: usize, j: usize| cost[i * n + j];
    let mut x = vec![NONE; n]; // column of row
    let mut y = vec![NONE; n]; // row of column
    let mut v = vec![0.0f64; n];
    let mut matches = vec![0usize; n];

    // column reduction
    for j in (0..n).rev() {
        let mut imin = 0;
        let mut min = c(0, j);
        for i in 1..n {
            if c(i, j) < min {
                min = c(i, j);
                imin = i;
            }
        }
        v[j] = min;
        matches[imin] += 1;
        if matches[imin] == 1 {
            x[imin] = j;
            y[j] = imin;
        } else if v[j] < v[x[imin]] {
            let j1 = x[imin];
            x[imin] = j;
            y[j] = imin;
            y[j1] = NONE;
        } else {
            y[j] = NONE;
        }
    }

    // reduction transfer
    let mut free = Vec::with_capacity(n);
    for i in 0..n {
        if matches[i] == 0 {
            free.push(i);
        } else if matches[i] == 1 {
            let j1 = x[i];
            let mut min = f64::INFINITY;
            for j in 0..n {
                if j != j1 {
                    min = min.min(c(i, j) - v[j]);
                }
            }
            v[j1] -= min;
        }
    }

    // augmenting row reduction, two passes. Near-equal reduced costs can make
    // rows bounce between columns for a long time, so re-queueing stops after a
    // fixed budget and the leftovers go to the augmenting phase.
    for _ in 0..2 {
        let mut queue = std::mem::take(&mut free);
        let mut budget = 4 * n;
        let mut k = 0;
        while k < queue.len() {
            let i = queue[k];
            k += 1;
            budget = budget.saturating_sub(1);
            let (mut j1, mut j2) = (0, NONE);
            let mut umin = c(i, 0) - v[0];
            let mut usubmin = f64::INFINITY;
            for j in 1..n {
                let h = c(i, j) - v[j];
                if h < usubmin {
                    if h >= umin {
                        usubmin = h;
                        j2 = j;
                    } else {
                        usubmin = umin;
                        umin = h;
                        j2 = j1;
                        j1 = j;
                    }
                }
            }
            let mut i0 = y[j1];
            let strict = umin < usubmin;
            if strict {
                v[j1] -= usubmin - umin;
            } else if i0 != NONE {
                j1 = j2;
                i0 = y[j2];
            }
            x[i] = j1;
            y[j1] = i;
            if i0 != NONE {
                if strict && budget > 0 {
                    k -= 1;
                    queue[k] = i0;
                } else {
                    free.push(i0);
                }
            }
        }
    }

    // shortest augmenting paths for the rows still free
    let mut d = vec![0.0f64; n];
    let mut pred = vec![0usize; n];
    let mut cols: Vec<usize> = (0..n).collect();
    for &start in &free {
        for j in 0..n {
            d[j] = c(start, j) - v[j];
            pred[j] = start;
            cols[j] = j;
        }
        // cols[..low] scanned, cols[low..up] at the current minimum, rest unscanned
        let (mut low, mut up) = (0, 0);
        let mut last = 0;
        let mut min = 0.0;
        let end = 'search: loop {
            if up == low {
                last = low;
                min = d[cols[up]];
                up += 1;
                for k in up..n {
                    let j = cols[k];
                    let h = d[j];
                    if h <= min {
                        if h < min {
                            up = low;
                            min = h;
                        }
                        cols[k] = cols[up];
                        cols[up] = j;
                        up += 1;
                    }
                }
                for &j in &cols[low..up] {
                    if y[j] == NONE {
                        break 'search j;
                    }
                }
            }
            let j1 = cols[low];
            low += 1;
            let i = y[j1];
            let row = &cost[i * n..(i + 1) * n];
            let h = row[j1] - v[j1] - min;
            let mut k = up;
            while k < n {
                let j = cols[k];
                let v2 = row[j] - v[j] - h;
                if v2 < d[j] {
                    pred[j] = i;
                    if v2 == min {
                        if y[j] == NONE {
                            break 'search j;
                        }
                        cols[k] = cols[up];
                        cols[up] = j;
                        up += 1;
                    }
                    d[j] = v2;
                }
                k += 1;
            }
        };
        for &j in &cols[..last] {
            v[j] += d[j] - min;
        }
        let mut j = end;
        loop {
            let i = pred[j];
            y[j] = i;
            std::mem::swap(&mut x[i], &mut j);
            if i == start {
                break;
            }
        }
    }
    Ok(x)
}
