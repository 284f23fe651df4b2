//! Per-trial error metrics.

use isac_core::channel::{comm_channel_vector, radar_channel_matrix, Scene};
use isac_core::linalg::CMatrix;
use isac_core::solver::{Estimates, Problem};
use isac_core::{Cx, Position64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Localization {
    pub rmse: f64,
    pub matched: usize,
    pub misses: usize,
    pub false_alarms: usize,
}

/// Greedy mutual-nearest matching within `gate`: the closest free
/// (truth, detection) pair is matched first, which makes every accepted pair
/// mutually nearest among the remaining points. With no pair matched the RMSE
/// is reported as `gate` and every truth is a miss.
pub fn localization_rmse(detections: &[Position64], truth: &[Position64], gate: f64) -> Localization {
    let mut pairs: Vec<(f64, usize, usize)> = truth
        .iter()
        .enumerate()
        .flat_map(|(i, t)| detections.iter().enumerate().map(move |(j, d)| (t.distance(d), i, j)))
        .filter(|(d, _, _)| *d <= gate)
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut t_used = vec![false; truth.len()];
    let mut d_used = vec![false; detections.len()];
    let mut sq = 0.0;
    let mut matched = 0;
    for (d, i, j) in pairs {
        if !t_used[i] && !d_used[j] {
            t_used[i] = true;
            d_used[j] = true;
            sq += d * d;
            matched += 1;
        }
    }
    if matched == 0 {
        return Localization {
            rmse: gate,
            matched,
            misses: truth.len(),
            false_alarms: detections.len(),
        };
    }
    Localization {
        rmse: (sq / matched as f64).sqrt(),
        matched,
        misses: truth.len() - matched,
        false_alarms: detections.len() - matched,
    }
}

/// `sum ||H_hat - H||_F^2 / sum ||H||_F^2`; `None` when the truth is zero.
pub fn channel_nmse_matrices(estimated: &[CMatrix<f64>], truth: &[CMatrix<f64>]) -> Option<f64> {
    assert_eq!(estimated.len(), truth.len(), "channel count mismatch");
    let (mut num, mut den) = (0.0, 0.0);
    for (e, t) in estimated.iter().zip(truth) {
        num += e.sub(t).expect("identical channel shapes").frobenius_norm_sqr();
        den += t.frobenius_norm_sqr();
    }
    (den > 0.0).then(|| num / den)
}

pub fn channel_nmse_vectors(estimated: &[Vec<Cx<f64>>], truth: &[Vec<Cx<f64>>]) -> Option<f64> {
    assert_eq!(estimated.len(), truth.len(), "channel count mismatch");
    let (mut num, mut den) = (0.0, 0.0);
    for (e, t) in estimated.iter().zip(truth) {
        assert_eq!(e.len(), t.len(), "channel length mismatch");
        num += e.iter().zip(t).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        den += t.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    (den > 0.0).then(|| num / den)
}

/// True channels on the pilot subcarriers.
pub fn true_channels(problem: &Problem<f64>, scene: &Scene<f64>) -> (Vec<CMatrix<f64>>, Vec<Vec<Cx<f64>>>) {
    let p = &problem.pilots;
    let hr = p.subcarriers.iter().map(|&n| radar_channel_matrix(&problem.sys, scene, n, p.f0)).collect();
    let hc = p.subcarriers.iter().map(|&n| comm_channel_vector(&problem.sys, scene, n, p.f0)).collect();
    (hr, hc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMetrics {
    pub target: Localization,
    pub scatterer: Localization,
    pub nmse_radar: Option<f64>,
    pub nmse_comm: Option<f64>,
    pub user_pos_error: f64,
    pub tau_offset_error: f64,
}

pub fn evaluate(problem: &Problem<f64>, scene: &Scene<f64>, est: &Estimates<f64>, gate: f64) -> TrialMetrics {
    let pos = |v: &[isac_core::solver::Detection<f64>]| v.iter().map(|d| d.position).collect::<Vec<_>>();
    let truth_t: Vec<_> = scene.targets.iter().map(|e| e.position).collect();
    let truth_s: Vec<_> = scene.scatterers.iter().map(|e| e.position).collect();
    let (hr, hc) = true_channels(problem, scene);
    TrialMetrics {
        target: localization_rmse(&pos(&est.detected_targets), &truth_t, gate),
        scatterer: localization_rmse(&pos(&est.detected_scatterers), &truth_s, gate),
        nmse_radar: channel_nmse_matrices(&est.channel_r, &hr),
        nmse_comm: channel_nmse_vectors(&est.channel_c, &hc),
        user_pos_error: est.user_pos.distance(&scene.user),
        tau_offset_error: (est.time_offset - scene.time_offset).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use isac_core::Cx;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Position64 {
        Position64::new(x, y)
    }

    #[test]
    fn identical_sets() {
        let t = vec![p(0.0, 0.0), p(5.0, 1.0)];
        let l = localization_rmse(&t, &t, 20.0);
        assert_eq!((l.rmse, l.misses, l.false_alarms), (0.0, 0, 0));
    }

    #[test]
    fn single_pair_distance() {
        let l = localization_rmse(&[p(3.0, 0.0)], &[p(0.0, 0.0)], 10.0);
        assert!((l.rmse - 3.0).abs() < 1e-15);
        assert_eq!((l.misses, l.false_alarms), (0, 0));
    }

    #[test]
    fn nothing_in_gate_is_penalized() {
        let l = localization_rmse(&[p(30.0, 0.0)], &[p(0.0, 0.0), p(1.0, 1.0)], 20.0);
        assert_eq!(l.rmse, 20.0);
        assert_eq!((l.misses, l.false_alarms, l.matched), (2, 1, 0));
        let e = localization_rmse(&[], &[p(0.0, 0.0)], 20.0);
        assert_eq!((e.rmse, e.misses), (20.0, 1));
    }

    #[test]
    fn spurious_detection_against_exhaustive_matching() {
        let truth = [p(0.0, 0.0), p(10.0, 0.0)];
        let det = [p(1.0, 1.0), p(9.0, -2.0), p(-15.0, 3.0)];
        let l = localization_rmse(&det, &truth, 20.0);
        assert_eq!(l.false_alarms, 1);
        assert_eq!(l.misses, 0);
        // minimum-cost assignment of both truths to distinct detections
        let mut best = f64::INFINITY;
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    let c = truth[0].distance(&det[a]).powi(2) + truth[1].distance(&det[b]).powi(2);
                    best = best.min(c);
                }
            }
        }
        assert!((l.rmse - (best / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nmse_examples() {
        let h = vec![CMatrix::from_fn(2, 2, |r, c| Cx::new(r as f64 + 1.0, c as f64))];
        assert_eq!(channel_nmse_matrices(&h, &h), Some(0.0));
        let z = vec![CMatrix::zeros(2, 2)];
        assert!((channel_nmse_matrices(&z, &h).unwrap() - 1.0).abs() < 1e-15);
        let d = vec![h[0].scale(Cx::new(2.0, 0.0))];
        assert!((channel_nmse_matrices(&d, &h).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(channel_nmse_matrices(&h, &z), None);
        let v = vec![vec![Cx::new(1.0, -1.0), Cx::new(0.5, 0.0)]];
        let v2 = vec![v[0].iter().map(|x| x * 2.0).collect::<Vec<_>>()];
        assert!((channel_nmse_vectors(&v2, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(channel_nmse_vectors(&v, &v), Some(0.0));
    }

    fn points() -> impl Strategy<Value = Vec<Position64>> {
        prop::collection::vec((-30.0..30.0f64, -30.0..30.0f64).prop_map(|(x, y)| p(x, y)), 0..6)
    }

    proptest! {
        #[test]
        fn matching_accounts_for_every_point(det in points(), truth in points(), gate in 1.0..40.0f64) {
            let l = localization_rmse(&det, &truth, gate);
            prop_assert_eq!(l.matched + l.misses, truth.len());
            prop_assert_eq!(l.matched + l.false_alarms, det.len());
            prop_assert!(l.rmse >= 0.0 && l.rmse <= gate);
        }
    }
}
