//! Dense O(n³) assignment solver (shortest augmenting paths with potentials).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row; `min(rows, cols)` of them.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of the matched entries, accumulated in row order.
    pub value: f64,
}

/// Optimal assignment for an `n × m` matrix. Rectangular inputs are padded to
/// square with zeros; pairs touching padding are dropped.
pub fn hungarian(costs: &[Vec<f64>], sense: Sense) -> Result<Assignment> {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    if let Some(r) = costs.iter().find(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch(r.len(), cols));
    }
    if costs.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::Domain {
            value: f64::NAN,
            domain: "finite matrix entries",
        });
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            value: 0.0,
        });
    }

    let n = rows.max(cols);
    let sign = match sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            sign * costs[i][j]
        } else {
            0.0
        }
    };

    // 1-based potentials; column 0 is a virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of = vec![usize::MAX; n];
    for j in 1..=n {
        col_of[owner[j] - 1] = j - 1;
    }
    let pairs: Vec<(usize, usize)> = (0..rows)
        .filter(|&r| col_of[r] < cols)
        .map(|r| (r, col_of[r]))
        .collect();
    let value = pairs.iter().map(|&(r, c)| costs[r][c]).sum();
    Ok(Assignment { pairs, value })
}
