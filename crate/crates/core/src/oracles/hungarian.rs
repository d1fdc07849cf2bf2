use super::Matching;

/// Maximum-weight bipartite matching by the Hungarian method, O(n³).
///
/// `w[i][j]` is the weight of matching row `i` to column `j`. A maximum-weight
/// perfect matching is computed and its zero-weight edges are dropped, which
/// is optimal among all matchings because weights are non-negative.
pub fn max_weight_bipartite_matching(w: &[Vec<f64>]) -> Matching {
    let n = w.len();
    if n == 0 {
        return Matching { mate: Vec::new(), value: 0.0 };
    }
    debug_assert!(w.iter().all(|r| r.len() == n));
    // 1-indexed potentials; column 0 is the virtual root of each search.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            let row = &w[i0 - 1];
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = -row[j - 1] - u[i0] - v[j];
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
    let mut mate = vec![None; n];
    let mut value = 0.0;
    for j in 1..=n {
        let i = p[j] - 1;
        let wij = w[i][j - 1];
        if wij > 0.0 {
            mate[i] = Some(j - 1);
            value += wij;
        }
    }
    Matching { mate, value }
}
