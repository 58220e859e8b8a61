mod common;

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use proptest::prelude::*;
use seqcon::distribution::*;
use seqcon::evaluation::{parse_completion_response, verbalization_scores};
use seqcon::funcspace::*;
use seqcon::mining::{mine, mine_pairwise, valid_continuations, valid_explanations};
use seqcon::{Base, SequenceRecord};

fn default_space() -> (Vec<ConcreteFunction>, IndexConvention) {
    let conv = IndexConvention::default();
    (enumerate_space(ConstantRange::default(), probe_range(&conv, 4)).functions, conv)
}

#[test]
fn evaluator_agrees_with_brute_force() {
    let (space, _) = default_space();
    let brute = common::brute_space(10);
    assert_eq!(space.len(), brute.len());
    for (f, &(kind, c1, c2)) in space.iter().zip(&brute) {
        assert_eq!((f.kind().name(), f.c1(), f.c2()), (kind, c1, c2));
        assert_eq!(f.text(), common::text(kind, c1, c2));
        for x in 0..=12 {
            assert_eq!(f.evaluate(x).ok(), common::brute(kind, c1, c2, x), "{} at {x}", f.text());
        }
    }
}

#[test]
fn canonical_texts_round_trip_in_both_bases() {
    let (space, _) = default_space();
    for f in &space {
        for base in [10, 2] {
            let parsed = parse(&f.render(base)).unwrap();
            assert_eq!(parsed.template.as_ref(), Some(f));
            assert_eq!(parsed.binary_output, base == 2);
            assert_eq!(&parsed.function, f.ast());
        }
    }
}

#[test]
fn recursive_values_stay_exact() {
    let f = ConcreteFunction::new(TemplateKind::Recursive, 2, 1);
    for x in 0..=10 {
        assert_eq!(f.evaluate(x).ok(), common::brute("recursive", 2, 1, x));
    }
    // 3, 13, 79, 633, 6331, 75973, 1063623, 17017969, 306323443, 6126468861
    assert_eq!(f.evaluate(10).unwrap(), BigInt::from(6_126_468_861u64));
    assert!(f.evaluate(10).unwrap() > BigInt::from(u32::MAX));
}

#[test]
fn enumeration_is_deterministic() {
    let (a, _) = default_space();
    let (b, _) = default_space();
    assert_eq!(a, b);
    let texts: Vec<&str> = a.iter().map(|f| f.text()).collect();
    let mut sorted = a.clone();
    sorted.sort();
    assert_eq!(sorted, a, "template, then c1, then c2");
    assert_eq!(texts.iter().collect::<BTreeSet<_>>().len(), texts.len());
}

#[test]
fn mining_matches_brute_force_grouping() {
    let (space, conv) = default_space();
    let brute = common::brute_space(10);
    for len in 2..=4 {
        let ds = mine(&space, len, &conv);
        let groups = common::brute_groups(&brute, len, conv.start_index, conv.max_offset);
        let amb: Vec<&Vec<BigInt>> = groups.iter().filter(|(_, g)| common::is_ambiguous(g)).map(|(p, _)| p).collect();
        let unamb: Vec<&Vec<BigInt>> = groups.iter().filter(|(_, g)| !common::is_ambiguous(g)).map(|(p, _)| p).collect();
        let got_amb: Vec<&Vec<BigInt>> = ds.ambiguous.iter().map(|r| &r.sequence.values).collect();
        let got_unamb: Vec<&Vec<BigInt>> = ds.unambiguous.iter().map(|r| &r.sequence.values).collect();
        assert_eq!(got_amb, amb, "length {len}");
        assert_eq!(got_unamb, unamb, "length {len}");
        // soundness: every generator regenerates its prefix and continuation
        for (i, r) in ds.records().enumerate() {
            for g in &r.generators {
                let s = generate_sequence(&g.function, g.offset, len + 1, &conv).unwrap();
                assert_eq!(s[..len], r.sequence.values[..]);
                assert_eq!(s[len], g.continuation);
            }
            if r.is_ambiguous() || i % 7 == 0 {
                let want: BTreeSet<ConcreteFunction> = r.explanations().into_iter().collect();
                assert_eq!(valid_explanations(&r.sequence, &space, &conv), want);
                assert_eq!(valid_continuations(&r.sequence, &space, &conv), r.continuations());
            }
        }
        let a: BTreeSet<_> = got_amb.into_iter().collect();
        assert!(got_unamb.iter().all(|s| !a.contains(s)));
    }
}

/// Hand-enumerated ground truth on five functions, length 2.
#[test]
fn mining_small_space_by_hand() {
    let conv = IndexConvention::default();
    let space = vec![
        ConcreteFunction::new(TemplateKind::Arithmetic, 1, 0), // x: 1 2 3 4 5 6 7 8
        ConcreteFunction::new(TemplateKind::Arithmetic, 2, 0), // 2x: 2 4 6 8 10 12 14 16
        ConcreteFunction::new(TemplateKind::Geometric, 1, 2),  // 2x again
        ConcreteFunction::new(TemplateKind::Power, 2, 1),      // 2^x: 2 4 8 16 32 64 128 256
        ConcreteFunction::new(TemplateKind::Modular, 1, 1),    // x % 2: 1 0 1 0 1 0 1 0
    ];
    let ds = mine(&space, 2, &conv);
    let b = |v: &[i64]| v.iter().map(|&x| BigInt::from(x)).collect::<Vec<_>>();
    let amb: Vec<Vec<BigInt>> = ds.ambiguous.iter().map(|r| r.sequence.values.clone()).collect();
    // 2x and 2^x only share [2,4] (next 6 vs 8); [4,8] is 2^x alone
    assert_eq!(amb, vec![b(&[2, 4])]);
    assert!(ds.find(&b(&[4, 8])).is_some_and(|r| !r.is_ambiguous()));
    let r = ds.find(&b(&[2, 4])).unwrap();
    assert_eq!(r.continuations(), [BigInt::from(6), BigInt::from(8)].into());
    assert_eq!(r.generators.len(), 3);
    // x % 2 yields only [1,0] and [0,1]; both unambiguous
    assert!(ds.find(&b(&[1, 0])).is_some_and(|r| !r.is_ambiguous()));
    assert!(ds.find(&b(&[0, 1])).is_some_and(|r| !r.is_ambiguous()));
    let total: usize = ds.records().map(|r| r.generators.len()).sum();
    assert_eq!(total, 25);
}

/// Offset pairs agreeing on a longer prefix agree on the shorter one, and
/// every pair ambiguous at length L+1 agrees on the length-L prefix.
#[test]
fn longer_prefixes_only_shrink_agreement() {
    let (space, conv) = default_space();
    for len in 2..4 {
        let short: BTreeSet<_> = mine_pairwise(&space, len, &conv)
            .into_iter()
            .map(|p| (p.first, p.first_offset, p.second, p.second_offset))
            .collect();
        let long = mine_pairwise(&space, len + 1, &conv);
        for p in &long {
            let a = generate_sequence(&space[p.first], p.first_offset, len, &conv).unwrap();
            let b = generate_sequence(&space[p.second], p.second_offset, len, &conv).unwrap();
            assert_eq!(a, b);
            assert!(!short.contains(&(p.first, p.first_offset, p.second, p.second_offset)));
        }
    }
}

fn template_strategy() -> impl Strategy<Value = ConcreteFunction> {
    (0usize..8, 0u64..=4, 0u64..=4).prop_map(|(k, a, b)| ConcreteFunction::new(TemplateKind::ALL[k], a, b))
}

/// Re-space a canonical text: every single space becomes 0-3 spaces where
/// the grammar allows it.
fn respace(text: &str, widths: &[usize]) -> String {
    let mut out = String::new();
    let mut i = 0;
    for c in text.chars() {
        if c == ' ' {
            let w = widths[i % widths.len()].max(1);
            out.push_str(&" ".repeat(w));
            i += 1;
        } else {
            out.push(c);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn numerals_round_trip(v in 0u64..=1_000_000) {
        let n = BigInt::from(v);
        for base in [Base::Decimal, Base::Binary] {
            prop_assert_eq!(parse_completion_response(&base.render(&n), base), Some(n.clone()));
        }
    }

    #[test]
    fn parse_render_identity(f in template_strategy(), widths in prop::collection::vec(1usize..4, 1..8)) {
        let parsed = parse(&respace(f.text(), &widths)).unwrap();
        prop_assert_eq!(parsed.template, Some(f));
    }

    #[test]
    fn generate_matches_brute(f in template_strategy(), off in 0u64..=4, len in 1usize..6) {
        let conv = IndexConvention::default();
        let got = generate_sequence(&f, off, len, &conv).ok();
        let want: Option<Vec<BigInt>> = (0..len as u64)
            .map(|j| common::brute(f.kind().name(), f.c1(), f.c2(), 1 + off + j))
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn raising_a_correct_logprob_never_breaks_a_pass(
        values in prop::collection::btree_set(0i64..30, 1..6),
        lps in prop::collection::vec(-10.0f64..0.0, 5),
        correct_mask in prop::collection::vec(any::<bool>(), 5),
        bump in 0.0f64..5.0,
        which in 0usize..5,
    ) {
        let values: Vec<i64> = values.into_iter().collect();
        let entries: Vec<(String, f64)> = values.iter().zip(&lps).map(|(v, l)| (v.to_string(), *l)).collect();
        let mut correct: BTreeSet<BigInt> = values.iter().zip(&correct_mask).filter(|(_, m)| **m).map(|(v, _)| BigInt::from(*v)).collect();
        correct.insert(BigInt::from(100)); // sometimes-missing correct answer
        let before = alternative_consideration_test(&TokenDistribution::new(entries.clone()).unwrap(), &correct, Base::Decimal);
        let i = which % entries.len();
        let mut raised = entries.clone();
        if correct.contains(&BigInt::from(values[i])) {
            raised[i].1 = (raised[i].1 + bump).min(0.0);
        }
        let after = alternative_consideration_test(&TokenDistribution::new(raised).unwrap(), &correct, Base::Decimal);
        prop_assert!(!before.passed || after.passed);
    }

    #[test]
    fn kl_nonnegative_and_zero_on_self(
        a in prop::collection::vec(-20.0f64..0.0, 1..60),
        b in prop::collection::vec(-20.0f64..0.0, 1..60),
    ) {
        let hs = build_shared_histograms(&[&a, &b], DEFAULT_BINS).unwrap();
        let p = gaussian_smooth(&hs[0], DEFAULT_SIGMA).unwrap();
        let q = gaussian_smooth(&hs[1], DEFAULT_SIGMA).unwrap();
        prop_assert!((p.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!((hs[0].total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(kl_between(&p, &p).unwrap() < 1e-9);
        match kl_between(&p, &q) {
            Ok(k) => prop_assert!(k >= 0.0),
            Err(DistributionError::SupportViolation(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn verbalization_scores_bounded(
        answers in prop::collection::vec(0i64..10, 0..12),
        valid in prop::collection::btree_set(0i64..10, 0..6),
    ) {
        let (p, r) = verbalization_scores(&answers, &valid);
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
        let mut dedup = answers.clone();
        let mut seen = BTreeSet::new();
        dedup.retain(|a| seen.insert(*a));
        prop_assert_eq!(verbalization_scores(&dedup, &valid), (p, r));
    }

    #[test]
    fn quadrants_partition(lps in prop::collection::vec(-10.0f64..0.0, 1..5), mask in prop::collection::vec(any::<bool>(), 5)) {
        let entries: Vec<(String, f64)> = lps.iter().enumerate().map(|(i, l)| ((i * 7).to_string(), *l)).collect();
        let correct: BTreeSet<BigInt> = (0..lps.len()).filter(|i| mask[*i]).map(|i| BigInt::from(i * 7)).collect();
        let d = TokenDistribution::new(entries).unwrap();
        let labels = quadrant_labels(&d, &correct, Base::Decimal);
        prop_assert_eq!(labels.len(), d.len());
        let mut by: BTreeMap<Quadrant, usize> = BTreeMap::new();
        for (q, _) in &labels { *by.entry(*q).or_default() += 1; }
        let pred: usize = by.get(&Quadrant::CorrectAndPred).copied().unwrap_or(0) + by.get(&Quadrant::IncorrectAndPred).copied().unwrap_or(0);
        prop_assert_eq!(pred, 1);
    }
}

#[test]
fn base2_sequence_records_only_use_prefixed_numerals() {
    let s = SequenceRecord::decimal([7, 11, 15]).with_base(Base::Binary);
    assert!(s.render(", ").split(", ").all(|n| n.starts_with("0b")));
}
