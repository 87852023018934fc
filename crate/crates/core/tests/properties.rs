use std::collections::BTreeMap;

use proptest::prelude::*;

use nonamalg::cohen::obstacle;
use nonamalg::cohen::{is_uniform, pair, Cohen, CohenPoset, CohenProjection, ZSource};
use nonamalg::instances::{self, Preset};
use nonamalg::mathias::anchor::{self, AnchorMode};
use nonamalg::mathias::{oscillation, Generator, UpperPartTerm, SEARCH_BOUND};
use nonamalg::order::{coords, Coords, Poset, ProductCondition, ProductPoset};
use nonamalg::projection::Projection;
use nonamalg::requirements::{Schedule, Task};
use nonamalg::tagged::{strong_below, weak_below, Tagged};
use nonamalg::trace::{RunParams, TraceDocument};
use nonamalg::wide::{decode as payload_decode, encode as payload_encode, Marker, Payload};

fn cohen(max: usize) -> impl Strategy<Value = Cohen> {
    prop::collection::vec(any::<bool>(), 0..=max).prop_map(Cohen::from_bits)
}

fn extension_of(base: Cohen, more: usize) -> impl Strategy<Value = Cohen> {
    prop::collection::vec(any::<bool>(), 0..=more).prop_map(move |m| base.extended(&m))
}

fn product(width: usize) -> impl Strategy<Value = ProductCondition<Cohen>> {
    prop::collection::btree_map(0..width, cohen(4), 0..=width).prop_map(move |parts| ProductCondition::from_parts(width, parts))
}

/// A chain `r <= q <= p` built by extending columns of `p`.
fn product_chain(width: usize) -> impl Strategy<Value = [ProductCondition<Cohen>; 3]> {
    let ext = move |p: ProductCondition<Cohen>| {
        prop::collection::vec((0..width, prop::collection::vec(any::<bool>(), 0..3)), 0..3).prop_map(move |edits| {
            let mut q = p.clone();
            for (i, bits) in edits {
                q.set(i, q.at(i, &Cohen::top()).extended(&bits));
            }
            q
        })
    };
    product(width)
        .prop_flat_map(move |p| (Just(p.clone()), ext(p)))
        .prop_flat_map(move |(p, q)| (Just(p), Just(q.clone()), ext(q)))
        .prop_map(|(p, q, r)| [r, q, p])
}

fn coord_set() -> impl Strategy<Value = Coords> {
    prop::collection::btree_set(0..8usize, 0..5)
}

fn payload() -> impl Strategy<Value = Payload> {
    let fragment = || prop::collection::btree_map(0..16usize, 0..64usize, 0..5);
    prop_oneof![
        prop_oneof![Just(Marker::Sharp), Just(Marker::Flat), Just(Marker::Natural)].prop_map(|marker| Payload::Marker { marker }),
        (coord_set(), coord_set(), any::<bool>(), fragment()).prop_map(|(b0, b1, z, fragment)| Payload::Step { b0, b1, z, fragment }),
        fragment().prop_map(|fragment| Payload::Fragment { fragment }),
    ]
}

fn bits_string(len: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(any::<bool>(), len).prop_map(|v| v.into_iter().map(|b| if b { '1' } else { '0' }).collect())
}

fn preset(steps: usize, z: String, seed: u64) -> Preset {
    Preset {
        steps,
        z: ZSource::Bits(z),
        seed,
        gap: None,
        obstacles: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn leq_j_composes(chain in product_chain(4), j1 in prop::collection::btree_set(0..4usize, 0..4), j2 in prop::collection::btree_set(0..4usize, 0..4)) {
        let poset = ProductPoset::new(4, CohenPoset);
        let [r, q, p] = chain;
        if poset.leq_j(&q, &p, &j1).unwrap() && poset.leq_j(&r, &q, &j2).unwrap() {
            let both: Coords = j1.union(&j2).copied().collect();
            prop_assert!(poset.leq_j(&r, &p, &both).unwrap());
        }
    }

    #[test]
    fn splice_stays_below(chain in product_chain(4), j in prop::collection::btree_set(0..4usize, 0..4)) {
        let poset = ProductPoset::new(4, CohenPoset);
        let [_, a, b] = chain;
        let s = poset.splice(&a, &b, &j).unwrap();
        prop_assert!(poset.leq(&s, &b));
        prop_assert!(poset.leq_j(&s, &b, &j).unwrap());
    }

    #[test]
    fn product_order_is_a_partial_order(a in product(3), b in product(3), c in product(3)) {
        let poset = ProductPoset::new(3, CohenPoset);
        prop_assert!(poset.leq(&a, &a));
        prop_assert!(poset.leq(&a, &poset.top()));
        if poset.leq(&a, &b) && poset.leq(&b, &c) {
            prop_assert!(poset.leq(&a, &c));
        }
        if poset.leq(&a, &b) && poset.leq(&b, &a) {
            for i in 0..3 {
                prop_assert_eq!(a.at(i, &Cohen::top()), b.at(i, &Cohen::top()));
            }
        }
    }

    #[test]
    fn cohen_projections_refine_below(q in cohen(10), extra in prop::collection::vec(any::<bool>(), 0..6), which in any::<bool>()) {
        let pi = if which { CohenProjection::Identity } else { CohenProjection::EvenBits };
        let p = pi.map(&q).extended(&extra);
        let r = pi.refine_below(&q, &p);
        prop_assert!(CohenPoset.leq(&r, &q));
        prop_assert!(CohenPoset.leq(&pi.map(&r), &p));
        prop_assert_eq!(pi.map(&Cohen::top()), Cohen::top());
        let longer = q.extended(&extra);
        prop_assert!(CohenPoset.leq(&pi.map(&longer), &pi.map(&q)));
    }

    #[test]
    fn tagged_orders(w in cohen(3), a in extension_of(Cohen::top(), 3), b in extension_of(Cohen::top(), 3), c in extension_of(Cohen::top(), 3)) {
        let pi = CohenProjection::Identity;
        let make = |x: &Cohen| Tagged { working: w.extended(x.bits()), tag: w.extended(x.bits()).extended(&[true]) };
        let (t1, t2, t3) = (make(&a), make(&b), make(&c));
        prop_assert!(weak_below(&pi, &t1, &t1).unwrap());
        if weak_below(&pi, &t1, &t2).unwrap() && weak_below(&pi, &t2, &t3).unwrap() {
            prop_assert!(weak_below(&pi, &t1, &t3).unwrap());
        }
        if strong_below(&pi, &t1, &t2).unwrap() && strong_below(&pi, &t2, &t3).unwrap() {
            prop_assert!(strong_below(&pi, &t1, &t3).unwrap());
        }
        if strong_below(&pi, &t1, &t2).unwrap() && strong_below(&pi, &t2, &t1).unwrap() {
            prop_assert_eq!(&t1, &t2);
        }
        // a tag strictly below its working image is never strongly below itself
        prop_assert!(!strong_below(&pi, &t1, &t1).unwrap());
    }

    #[test]
    fn strong_with_equal_working_implies_tag_order(w in cohen(4), e1 in extension_of(Cohen::top(), 3), e2 in extension_of(Cohen::top(), 3)) {
        let pi = CohenProjection::Identity;
        let t1 = Tagged { working: w.clone(), tag: w.extended(e1.bits()) };
        let t2 = Tagged { working: w.clone(), tag: w.extended(e2.bits()) };
        if strong_below(&pi, &t2, &t1).unwrap() {
            prop_assert!(CohenPoset.leq(&t2.tag, &t1.tag));
            prop_assert!(weak_below(&pi, &t2, &t1).unwrap());
        }
    }

    #[test]
    fn payload_codec_roundtrips(p in payload(), q in payload()) {
        let (ip, iq) = (payload_encode(&p), payload_encode(&q));
        prop_assert_eq!(payload_decode(&ip), Some(p.clone()));
        if p != q {
            prop_assert_ne!(ip.clone(), iq);
        }
        if let Payload::Marker { marker } = p {
            prop_assert_eq!(ip, marker.index().into());
        } else {
            prop_assert!(ip >= 3u8.into());
        }
    }

    #[test]
    fn generators_are_infinite(m in 1u64..12, r in 0u64..12, n in 0u64..10_000) {
        let g = Generator::new_residue(m, r % m).unwrap();
        let x = g.next_above(n);
        prop_assert!(x > n && g.member(x));
        prop_assert!((n + 1..x).all(|y| !g.member(y)));
    }

    #[test]
    fn upper_terms_next_is_least(floor in 0u64..50, excluded in prop::collection::btree_set(0u64..80, 0..6), n in 0u64..80) {
        let term = UpperPartTerm {
            filter: "evens".into(),
            generators: [Generator::evens()].into(),
            floor,
            excluded,
        };
        let x = term.next(n, SEARCH_BOUND).unwrap();
        prop_assert!(x > n && term.contains(x));
        prop_assert!((n + 1..x).all(|y| !term.contains(y)));
    }

    #[test]
    fn round_robin_recurs_within_its_gap(seed in any::<u64>(), extra in 0usize..3) {
        let registry: Vec<Task> = (0..4).map(|i| Task::Obstacle { b: coords([i, i + 1]) }).collect();
        let gap = registry.len() + extra;
        let s = Schedule::round_robin(registry.clone(), gap, seed).unwrap();
        let tasks: Vec<Task> = (0..5 * gap).map(|n| s.task(n).unwrap()).collect();
        for w in tasks.windows(gap) {
            for t in &registry {
                prop_assert!(w.contains(t));
            }
        }
        let again = Schedule::round_robin(registry, gap, seed).unwrap();
        prop_assert_eq!((0..5 * gap).map(|n| again.task(n).unwrap()).collect::<Vec<_>>(), tasks);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pair_keeps_lengths_and_roundtrips(z in bits_string(10), seed in any::<u64>()) {
        let params = instances::pair(&preset(10, z.clone(), seed));
        let t = pair::construct(&params).unwrap();
        for n in 0..=10 {
            prop_assert_eq!(t.sides[0][n].tag.len(), t.sides[1][n].tag.len());
        }
        let (c1, c2) = t.final_columns();
        let got: String = pair::decode(&c1, &c2).unwrap().into_iter().map(|b| if b { '1' } else { '0' }).collect();
        prop_assert_eq!(got, z);
        prop_assert!(pair::audit(&params, &t).is_empty());
    }

    #[test]
    fn obstacle_runs_stay_uniform_and_decode(z in bits_string(60), seed in any::<u64>()) {
        let params = instances::obstacle(&preset(60, z.clone(), seed)).unwrap();
        let t = obstacle::construct(&params).unwrap();
        prop_assert!(t.seq.iter().all(|s| is_uniform(&s.tag)));
        prop_assert!(obstacle::audit_coding(&params, &t).is_empty());
        prop_assert!(obstacle::audit_orders(&params, &t).is_empty());
        let mut counter: BTreeMap<Coords, usize> = BTreeMap::new();
        for s in &t.steps {
            if let Task::Obstacle { b } = &s.task {
                *counter.entry(b.clone()).or_insert(0) += 1;
            }
        }
        for b in &params.family.obstacles {
            let k = counter.get(b).copied().unwrap_or(0);
            let got = obstacle::decode(&t.columns(), b, &params.family).unwrap();
            let want: Vec<bool> = z[..k].chars().map(|c| c == '1').collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn mathias_conditions_stay_valid(z in bits_string(30), seed in any::<u64>(), per_filter in any::<bool>()) {
        let osc = instances::oscillation(&preset(30, z.clone(), seed));
        let t = oscillation::construct(&osc).unwrap();
        for r in &t.rounds {
            for c in [&r.p, &r.q] {
                let least = c.upper.min(SEARCH_BOUND).unwrap();
                prop_assert!(c.max_stem().is_none_or(|m| least > m));
            }
        }
        prop_assert!(oscillation::audit(&t, &osc).unwrap().passed());

        let mode = if per_filter { AnchorMode::PerFilter } else { AnchorMode::Uniform };
        let params = instances::anchored(&preset(30, z, seed), mode).unwrap();
        let t = anchor::construct(&params).unwrap();
        for p in &t.seq {
            for c in p.parts.values() {
                prop_assert!(c.validate(SEARCH_BOUND).is_ok());
            }
        }
        prop_assert_eq!(anchor::audit(&params, &t).unwrap(), Vec::<String>::new());
    }

    #[test]
    fn traces_reserialize_identically(z in bits_string(16), seed in any::<u64>(), which in 0usize..4) {
        let pre = preset(16, z, seed);
        let params = match which {
            0 => RunParams::Pair(instances::pair(&pre)),
            1 => RunParams::Obstacle(instances::obstacle(&pre).unwrap()),
            2 => RunParams::Wide(instances::wide(&pre).unwrap()),
            _ => RunParams::Oscillation(instances::oscillation(&pre)),
        };
        let text = params.construct().unwrap().document().unwrap().to_text().unwrap();
        let back = TraceDocument::parse(&text).unwrap().run().unwrap().document().unwrap().to_text().unwrap();
        prop_assert_eq!(back, text);
    }
}
