//! Rectangular linear assignment (Hungarian method with potentials).

/// Minimum-cost assignment of each of `n` rows to a distinct column of an
/// `n x m` matrix with `n <= m`. Returns the column of every row.
pub fn solve(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    debug_assert!(n <= m, "rows must not exceed columns");
    debug_assert!(cost.iter().all(|r| r.len() == m));

    // 1-based potentials; column 0 is a virtual sink
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
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
            for j in 0..=m {
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

    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

pub fn total_cost(cost: &[Vec<f64>], assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Optimal assignment that is lexicographically smallest among all optimal
/// ones (compared as the vector of chosen columns, row by row).
pub fn solve_lexicographic(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    let mut best = solve(cost);
    let opt = total_cost(cost, &best);
    let tol = 1e-9 * opt.abs().max(1.0);

    let mut prefix_cost = 0.0;
    let mut taken = vec![false; m];
    for i in 0..n {
        let current = best[i];
        for j in 0..current {
            if taken[j] {
                continue;
            }
            // optimum of the remaining rows with row i pinned to column j
            let cols: Vec<usize> = (0..m).filter(|&c| !taken[c] && c != j).collect();
            let sub: Vec<Vec<f64>> = cost[i + 1..]
                .iter()
                .map(|row| cols.iter().map(|&c| row[c]).collect())
                .collect();
            let sub_assign = solve(&sub);
            let candidate = prefix_cost + cost[i][j] + total_cost(&sub, &sub_assign);
            if candidate <= opt + tol {
                best[i] = j;
                for (r, &sj) in sub_assign.iter().enumerate() {
                    best[i + 1 + r] = cols[sj];
                }
                break;
            }
        }
        taken[best[i]] = true;
        prefix_cost += cost[i][best[i]];
    }
    best
}
