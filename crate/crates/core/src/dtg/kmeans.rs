//! K-means representatives of a template pool.
//!
//! Rows of a pairwise dissimilarity matrix serve as feature vectors. After
//! seeded k-means++ and Lloyd iterations each cluster contributes the
//! members whose rows have the least L1 norm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DtgError, SelectionMethod, SelectionResult};

pub const MAX_LLOYD_ITERATIONS: usize = 100;

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn l1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// Cluster label of every row.
pub fn kmeans(rows: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>, DtgError> {
    let n = rows.len();
    if k == 0 || k > n {
        return Err(DtgError::InvalidParam(format!(
            "cannot form {k} clusters from {n} rows"
        )));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(DtgError::InvalidParam("rows differ in length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres: Vec<Vec<f64>> = vec![rows[rng.random_range(0..n)].clone()];
    while centres.len() < k {
        let d: Vec<f64> = rows
            .iter()
            .map(|r| {
                centres
                    .iter()
                    .map(|c| dist_sq(r, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut pick = None;
            for (i, &di) in d.iter().enumerate() {
                if di > 0.0 {
                    pick = Some(i);
                    if u < di {
                        break;
                    }
                    u -= di;
                }
            }
            pick.expect("some row has positive distance")
        } else {
            rng.random_range(0..n)
        };
        centres.push(rows[pick].clone());
    }
    let assign = |centres: &[Vec<f64>]| -> Vec<usize> {
        rows.iter()
            .map(|r| {
                let mut best = (0, f64::INFINITY);
                for (j, c) in centres.iter().enumerate() {
                    let d = dist_sq(r, c);
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best.0
            })
            .collect()
    };
    let mut labels = assign(&centres);
    for _ in 0..MAX_LLOYD_ITERATIONS {
        for (j, c) in centres.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = rows
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == j)
                .map(|(r, _)| r)
                .collect();
            // An emptied cluster keeps its previous centre.
            if !members.is_empty() {
                let m = members.len() as f64;
                *c = (0..dim)
                    .map(|d| members.iter().map(|r| r[d]).sum::<f64>() / m)
                    .collect();
            }
        }
        let next = assign(&centres);
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(labels)
}

/// Picks `per_cluster` least-L1 members from each of `k` clusters. Short
/// clusters are topped up with the least-L1 rows not yet chosen, so the
/// result always has `k * per_cluster` distinct indices, sorted.
pub fn kmeans_select(
    rows: &[Vec<f64>],
    k: usize,
    per_cluster: usize,
    seed: u64,
) -> Result<SelectionResult, DtgError> {
    let want = k * per_cluster;
    if per_cluster == 0 || want > rows.len() {
        return Err(DtgError::InvalidParam(format!(
            "cannot choose {want} of {} rows",
            rows.len()
        )));
    }
    let labels = kmeans(rows, k, seed)?;
    let norms: Vec<f64> = rows.iter().map(|r| l1(r)).collect();
    let by_norm = |mut v: Vec<usize>| {
        v.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
        v
    };
    let mut chosen = Vec::with_capacity(want);
    for j in 0..k {
        let members = by_norm((0..rows.len()).filter(|&i| labels[i] == j).collect());
        chosen.extend(members.into_iter().take(per_cluster));
    }
    if chosen.len() < want {
        let rest = by_norm((0..rows.len()).filter(|i| !chosen.contains(i)).collect());
        chosen.extend(rest.into_iter().take(want - chosen.len()));
    }
    chosen.sort_unstable();
    Ok(SelectionResult {
        method: SelectionMethod::KMeans,
        visits: Vec::new(),
        chosen,
    })
}
