use serde::Serialize;

use super::ReportError;
use crate::store::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub run_id: String,
    pub accuracy: f64,
    pub log10_kwh: f64,
}

impl ParetoPoint {
    pub fn of(run: &RunRecord) -> Self {
        ParetoPoint {
            run_id: run.run_id.clone(),
            accuracy: run.accuracy,
            log10_kwh: run.train_energy_kwh.log10(),
        }
    }
}

/// Indices of the non-dominated `(accuracy, energy)` pairs, ordered by
/// ascending energy (then descending accuracy, then index).
///
/// A dominates B when it is at least as accurate, uses no more energy, and
/// is strictly better in one of the two. Exact duplicates do not dominate
/// each other, so both stay on the frontier.
pub fn frontier_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .1
            .total_cmp(&points[b].1)
            .then(points[b].0.total_cmp(&points[a].0))
            .then(a.cmp(&b))
    });

    let mut out = Vec::new();
    // Best accuracy seen so far and the lowest energy that achieved it.
    let mut best: Option<(f64, f64)> = None;
    for i in order {
        let (acc, energy) = points[i];
        let dominated = match best {
            None => false,
            Some((best_acc, best_energy)) => {
                best_acc > acc || (best_acc == acc && best_energy < energy)
            }
        };
        if !dominated {
            out.push(i);
        }
        if best.is_none_or(|(best_acc, _)| acc > best_acc) {
            best = Some((acc, energy));
        }
    }
    out
}

pub fn pareto_frontier(runs: &[RunRecord]) -> Result<Vec<&RunRecord>, ReportError> {
    for r in runs {
        if !(r.train_energy_kwh.is_finite() && r.train_energy_kwh > 0.0) {
            return Err(ReportError::NonPositiveEnergy(r.run_id.clone()));
        }
        if !(r.accuracy.is_finite() && (0.0..=1.0).contains(&r.accuracy)) {
            return Err(ReportError::BadAccuracy(r.run_id.clone()));
        }
    }
    let points: Vec<(f64, f64)> = runs.iter().map(|r| (r.accuracy, r.train_energy_kwh)).collect();
    Ok(frontier_indices(&points).into_iter().map(|i| &runs[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
        a.0 >= b.0 && a.1 <= b.1 && (a.0 > b.0 || a.1 < b.1)
    }

    fn brute(points: &[(f64, f64)]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| !points.iter().any(|&q| dominates(q, points[i])))
            .collect()
    }

    #[test]
    fn small_example() {
        let pts = [(0.9, 100.0), (0.8, 10.0), (0.7, 50.0)];
        assert_eq!(frontier_indices(&pts), vec![1, 0]);
        assert_eq!(frontier_indices(&[(0.5, 3.0)]), vec![0]);
        assert!(frontier_indices(&[]).is_empty());
    }

    #[test]
    fn ties() {
        // Same energy, lower accuracy is dominated.
        assert_eq!(frontier_indices(&[(0.5, 3.0), (0.6, 3.0)]), vec![1]);
        // Same accuracy, more energy is dominated.
        assert_eq!(frontier_indices(&[(0.5, 4.0), (0.5, 3.0)]), vec![1]);
        // Exact duplicates both survive.
        assert_eq!(frontier_indices(&[(0.5, 3.0), (0.5, 3.0)]), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(points in prop::collection::vec((0u8..20, 1u8..20), 0..60)) {
            // Coarse grid so ties and duplicates are common.
            let pts: Vec<(f64, f64)> = points.iter().map(|&(a, e)| (f64::from(a) / 20.0, f64::from(e))).collect();
            let mut got = frontier_indices(&pts);
            got.sort_unstable();
            prop_assert_eq!(got, brute(&pts));
        }
    }
}
