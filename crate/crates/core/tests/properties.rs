use dynrdpg::io::{default_labels, read_events, write_events, IngestOptions};
use dynrdpg::likelihood::{compute_stats, exposures, homogeneous_stats, loglik, loglik_homogeneous, WindowScanner};
use dynrdpg::selection::{compare, splice_inside, splice_outside, Decision, TimeMap};
use dynrdpg::{ChangeWindow, DirichletParams, EdgeEvent, EventLog, Mode, VertexSubset};
use proptest::prelude::*;

fn alpha(k: usize) -> impl Strategy<Value = DirichletParams> {
    prop::collection::vec(0.2f64..8.0, k + 1).prop_map(|a| DirichletParams::new(a).unwrap())
}

/// A random log over `n` vertices on `[0, 100]` with `k` attributes.
fn event_log(mode: Mode) -> impl Strategy<Value = EventLog> {
    (3usize..8, 1usize..4).prop_flat_map(move |(n, k)| {
        prop::collection::vec((0.0f64..100.0, 0..n, 1..n, 1..=k), 0..60).prop_map(move |raw| {
            let events =
                raw.into_iter().map(|(t, u, shift, a)| EdgeEvent { t, u, v: (u + shift) % n, attr: Some(a) }).collect();
            EventLog::new(events, n, 100.0, k, mode).unwrap()
        })
    })
}

fn window() -> impl Strategy<Value = ChangeWindow> {
    (0.0f64..100.0, 0.0f64..100.0).prop_map(|(a, b)| ChangeWindow { start: a.min(b), end: a.max(b) })
}

fn subset_of(n: usize) -> impl Strategy<Value = VertexSubset> {
    prop::collection::vec(any::<bool>(), n)
        .prop_filter("proper nonempty", |m| m.iter().any(|&b| b) && !m.iter().all(|&b| b))
        .prop_map(|m| VertexSubset::from_mask(m).unwrap())
}

proptest! {
    #[test]
    fn exposures_partition_the_opportunity_mass(n in 2usize..300, frac in 0.0f64..1.0, t in 0.1f64..1e4, w in 0.0f64..1.0, lambda in 0.01f64..1e3) {
        let m = ((n as f64 * frac) as usize).min(n);
        let g = exposures(n, m, t, w * t, lambda);
        prop_assert!(g.iter().all(|&x| x >= -1e-9 * lambda * t));
        prop_assert!((g.iter().sum::<f64>() - lambda * t).abs() <= 1e-12 * lambda * t);
    }

    #[test]
    fn equal_laws_reduce_to_homogeneous(log in event_log(Mode::Attributed), w in window(), seed in any::<u64>(), lambda in 0.5f64..20.0) {
        let n = log.n();
        let mask: Vec<bool> = (0..n).map(|v| (seed >> (v % 64)) & 1 == 1 || v == 0).collect();
        let mut mask = mask;
        mask[n - 1] = false;
        let subset = VertexSubset::from_mask(mask).unwrap();
        let a = DirichletParams::new((0..=log.k()).map(|i| 1.0 + i as f64).collect()).unwrap();
        let het = loglik(&log, &w, &subset, lambda, &a, &a).unwrap();
        let hom = loglik_homogeneous(&log, &a, lambda).unwrap();
        prop_assert!((het - hom).abs() <= 1e-9 * hom.abs().max(1.0));
    }

    #[test]
    fn unattributed_loglik_ignores_component_order(log in event_log(Mode::Unattributed), w in window(), a0 in alpha(3), a1 in alpha(3), rot in 1usize..3) {
        let n = log.n();
        let subset = VertexSubset::new(&[0], n).unwrap();
        let permute = |a: &DirichletParams| {
            let mut v = a.alpha().to_vec();
            v[..3].rotate_left(rot);
            DirichletParams::new(v).unwrap()
        };
        let base = loglik(&log, &w, &subset, 2.0, &a0, &a1).unwrap();
        let turned = loglik(&log, &w, &subset, 2.0, &permute(&a0), &permute(&a1)).unwrap();
        prop_assert!((base - turned).abs() <= 1e-9 * base.abs().max(1.0));
    }

    #[test]
    fn scanner_matches_direct_statistics(log in event_log(Mode::Attributed), w in window()) {
        let subset = VertexSubset::new(&[0, 2], log.n()).unwrap();
        let direct = compute_stats(&log, &w, &subset, 3.0).unwrap();
        let scanned = WindowScanner::new(&log, &subset).stats(&w, 3.0);
        prop_assert_eq!(&direct.counts, &scanned.counts);
        for j in 0..3 {
            prop_assert!((direct.exposure[j] - scanned.exposure[j]).abs() <= 1e-9 * 300.0);
        }
    }

    #[test]
    fn class_counts_cover_every_event(log in event_log(Mode::Attributed), w in window(), subset in subset_of(3)) {
        // Logs have at least 3 vertices; embed the subset in the first three.
        let mut mask = subset.mask().to_vec();
        mask.resize(log.n(), false);
        let subset = VertexSubset::from_mask(mask).unwrap();
        let stats = compute_stats(&log, &w, &subset, 1.0).unwrap();
        prop_assert_eq!(stats.total_events(), log.len() as u64);
        prop_assert_eq!(homogeneous_stats(&log, 1.0).unwrap().total_events(), log.len() as u64);
    }

    #[test]
    fn splicing_keeps_events_and_maps_back(log in event_log(Mode::Attributed), w in window()) {
        let outside = splice_outside(&log, w.start, w.end).unwrap();
        let inside = splice_inside(&log, w.start, w.end).unwrap();
        prop_assert_eq!(outside.len() + inside.len(), log.len());
        let root = TimeMap::identity(log.horizon());
        let out_map = root.outside(w.start, w.end, log.horizon());
        let in_map = root.inside(w.start, w.end);
        let mut back: Vec<f64> = outside.events().iter().map(|e| out_map.to_original(e.t)).collect();
        back.extend(inside.events().iter().map(|e| in_map.to_original(e.t)));
        back.sort_by(f64::total_cmp);
        let orig: Vec<f64> = log.events().iter().map(|e| e.t).collect();
        for (a, b) in back.iter().zip(&orig) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn larger_samples_never_favour_the_partition(k in 1usize..6, gain in 0.0f64..200.0, n1 in 1usize..10_000, extra in 0usize..10_000) {
        let small = compare(k, n1, -1000.0, -1000.0 + gain);
        let large = compare(k, n1 + extra, -1000.0, -1000.0 + gain);
        prop_assert!(large.delta() >= small.delta());
        if small.decision == Decision::Homogeneous {
            prop_assert_eq!(large.decision, Decision::Homogeneous);
        }
    }

    #[test]
    fn csv_round_trip(log in event_log(Mode::Attributed)) {
        prop_assume!(!log.is_empty());
        let labels = default_labels(log.n());
        let mut buf = Vec::new();
        write_events(&mut buf, &log, &labels).unwrap();
        let opts = IngestOptions { mode: Mode::Attributed, k: log.k(), horizon: Some(log.horizon()) };
        let back = read_events(buf.as_slice(), &opts).unwrap();
        prop_assert_eq!(back.log.len(), log.len());
        for (a, b) in back.log.events().iter().zip(log.events()) {
            let (au, av) = (&back.labels[a.u], &back.labels[a.v]);
            let (bu, bv) = (&labels[b.u], &labels[b.v]);
            prop_assert_eq!(a.t, b.t);
            prop_assert_eq!(a.attr, b.attr);
            prop_assert!((au == bu && av == bv) || (au == bv && av == bu));
        }
    }
}
