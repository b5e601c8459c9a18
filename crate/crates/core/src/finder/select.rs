//! Greedy selection of disjoint tracks from a pass's candidates.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::event::HitId;

use super::{PassConfig, TrackCandidate};

/// A candidate restricted to its still-free hits, sorted by hit id.
#[derive(Debug, Clone)]
struct Live {
    hits: Vec<(HitId, f64)>,
    mean_dev: f64,
}

impl Live {
    fn new(c: &TrackCandidate) -> Self {
        let mut hits: Vec<(HitId, f64)> = c.hit_ids.iter().copied().zip(c.deviations.iter().copied()).collect();
        hits.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        hits.dedup_by_key(|h| h.0);
        let mut l = Live { hits, mean_dev: 0.0 };
        l.update_mean();
        l
    }

    fn update_mean(&mut self) {
        self.mean_dev = if self.hits.is_empty() {
            0.0
        } else {
            self.hits.iter().map(|h| h.1).sum::<f64>() / self.hits.len() as f64
        };
    }

    /// Drops taken hits; returns whether anything changed.
    fn prune(&mut self, taken: &HashSet<HitId>) -> bool {
        let before = self.hits.len();
        self.hits.retain(|h| !taken.contains(&h.0));
        if self.hits.len() != before {
            self.update_mean();
            true
        } else {
            false
        }
    }

    /// `Greater` means better: more hits, then lower mean deviation, then
    /// smaller first hit id, then lexicographically smaller hit ids.
    fn quality(&self, other: &Live) -> Ordering {
        self.hits
            .len()
            .cmp(&other.hits.len())
            .then_with(|| other.mean_dev.total_cmp(&self.mean_dev))
            .then_with(|| {
                let a = self.hits.iter().map(|h| h.0);
                let b = other.hits.iter().map(|h| h.0);
                b.cmp(a)
            })
    }
}

struct Entry {
    live: Live,
    /// Number of accepted tracks when this entry was last brought up to date.
    epoch: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.live.quality(&other.live)
    }
}

/// Accepts candidates best-first. After each acceptance its hits are removed
/// from the others; candidates left with fewer than `min_hits` are dropped,
/// and selection stops once the best has fewer than `selection_min_hits`.
///
/// Removing hits always lowers a candidate's hit count, so an out-of-date
/// heap entry can only overrate a candidate; it is refreshed when popped.
pub fn select(candidates: Vec<TrackCandidate>, pass: &PassConfig) -> Vec<Vec<HitId>> {
    let mut heap: BinaryHeap<Entry> = candidates
        .iter()
        .map(|c| Entry {
            live: Live::new(c),
            epoch: 0,
        })
        .filter(|e| e.live.hits.len() >= pass.min_hits)
        .collect();
    let mut taken: HashSet<HitId> = HashSet::new();
    let mut accepted: Vec<Vec<HitId>> = Vec::new();
    while let Some(mut e) = heap.pop() {
        if e.epoch != accepted.len() {
            e.epoch = accepted.len();
            if e.live.prune(&taken) {
                if e.live.hits.len() >= pass.min_hits {
                    heap.push(e);
                }
                continue;
            }
        }
        if e.live.hits.len() < pass.selection_min_hits {
            break;
        }
        let ids: Vec<HitId> = e.live.hits.iter().map(|h| h.0).collect();
        taken.extend(ids.iter().copied());
        accepted.push(ids);
    }
    accepted
}

/// Quadratic version of [`select`] that rescans every candidate each round.
pub fn select_naive(candidates: Vec<TrackCandidate>, pass: &PassConfig) -> Vec<Vec<HitId>> {
    let mut live: Vec<Live> = candidates
        .iter()
        .map(Live::new)
        .filter(|l| l.hits.len() >= pass.min_hits)
        .collect();
    let mut accepted = Vec::new();
    loop {
        let Some(best) = (0..live.len()).max_by(|&a, &b| live[a].quality(&live[b])) else {
            break;
        };
        if live[best].hits.len() < pass.selection_min_hits {
            break;
        }
        let chosen = live.swap_remove(best);
        let taken: HashSet<HitId> = chosen.hits.iter().map(|h| h.0).collect();
        for l in &mut live {
            l.prune(&taken);
        }
        live.retain(|l| l.hits.len() >= pass.min_hits);
        accepted.push(chosen.hits.iter().map(|h| h.0).collect());
    }
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finder::Schedule;
    use crate::geometry::default_detector;

    fn cand(ids: &[u64], dev: f64) -> TrackCandidate {
        TrackCandidate {
            hit_ids: ids.to_vec(),
            deviations: vec![dev; ids.len()],
            n_missing: 0,
        }
    }

    fn pass(min_hits: usize, selection_min_hits: usize) -> PassConfig {
        let mut p = Schedule::default_for(&default_detector()).passes[0].clone();
        p.min_hits = min_hits;
        p.selection_min_hits = selection_min_hits;
        p
    }

    #[test]
    fn single_candidate_accepted() {
        let out = select(vec![cand(&[1, 2, 3], 0.1)], &pass(3, 3));
        assert_eq!(out, vec![vec![1, 2, 3]]);
    }

    #[test]
    fn disjoint_in_count_order() {
        let out = select(vec![cand(&[1, 2, 3], 0.1), cand(&[4, 5, 6, 7], 0.5)], &pass(3, 3));
        assert_eq!(out, vec![vec![4, 5, 6, 7], vec![1, 2, 3]]);
    }

    #[test]
    fn deviation_breaks_count_ties() {
        let out = select(vec![cand(&[1, 2, 3], 0.5), cand(&[3, 4, 5], 0.1)], &pass(3, 3));
        // the second wins; the first loses hit 3 and falls below min_hits
        assert_eq!(out, vec![vec![3, 4, 5]]);
    }

    #[test]
    fn hand_traced_overlaps() {
        // A = 1..6 (dev .2), B = 5..9 (dev .1), C = 8..11 (dev .3), D = 1,2,10,11,12 (dev .1)
        //   round 1: A has 6 hits -> accept A = {1..6}
        //   B -> {7,8,9}, C -> {8,9,10,11}, D -> {10,11,12}
        //   round 2: C (4 hits) -> accept {8,9,10,11}
        //   B -> {7} dropped, D -> {12} dropped
        let cands = vec![
            cand(&[1, 2, 3, 4, 5, 6], 0.2),
            cand(&[5, 6, 7, 8, 9], 0.1),
            cand(&[8, 9, 10, 11], 0.3),
            cand(&[1, 2, 10, 11, 12], 0.1),
        ];
        let want = vec![vec![1, 2, 3, 4, 5, 6], vec![8, 9, 10, 11]];
        assert_eq!(select(cands.clone(), &pass(3, 3)), want);
        assert_eq!(select_naive(cands, &pass(3, 3)), want);
    }

    #[test]
    fn stops_below_selection_minimum() {
        let out = select(vec![cand(&[1, 2, 3, 4, 5], 0.1), cand(&[6, 7, 8], 0.1)], &pass(3, 4));
        assert_eq!(out, vec![vec![1, 2, 3, 4, 5]]);
    }

    #[test]
    fn duplicates_in_candidate_counted_once() {
        let out = select(vec![cand(&[1, 1, 2, 3], 0.1)], &pass(3, 3));
        assert_eq!(out, vec![vec![1, 2, 3]]);
    }

    proptest::proptest! {
        #[test]
        fn heap_equals_naive(
            raw in proptest::collection::vec(
                (proptest::collection::btree_set(1u64..30, 3..8), 0u32..4), 0..12)
        ) {
            let cands: Vec<TrackCandidate> = raw
                .iter()
                .map(|(s, d)| cand(&s.iter().copied().collect::<Vec<_>>(), *d as f64 * 0.1))
                .collect();
            let p = pass(3, 3);
            let a = select(cands.clone(), &p);
            let b = select_naive(cands, &p);
            proptest::prop_assert_eq!(&a, &b);
            let mut seen = HashSet::new();
            for t in &a {
                for h in t {
                    proptest::prop_assert!(seen.insert(*h));
                }
            }
        }
    }
}
