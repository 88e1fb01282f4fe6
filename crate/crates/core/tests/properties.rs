use std::collections::BTreeSet;

use proptest::prelude::*;

use attitude::analysis::{grid, kde, silverman_bandwidth};
use attitude::corpus::{split_counts, OpinionKey};
use attitude::lexicons::{apply_negation, FrameEntry, FrameLexicon, DEFAULT_NEGATION};
use attitude::model::{aggregate_opinions, argmax_label};
use attitude::tensorgrad::{Tape, Tensor};
use attitude::termizer::{crop_to_window, Term, TermSequence};
use attitude::Sentiment;

fn sentiment() -> impl Strategy<Value = Sentiment> {
    prop_oneof![
        Just(Sentiment::Positive),
        Just(Sentiment::Negative),
        Just(Sentiment::Neutral)
    ]
}

/// (length, subject, object) with distinct participant positions.
fn participants() -> impl Strategy<Value = (usize, usize, usize)> {
    (2usize..40).prop_flat_map(|len| (Just(len), 0..len, 0..len)).prop_filter("distinct", |(_, s, o)| s != o)
}

fn sequence(len: usize, subj: usize, obj: usize) -> TermSequence {
    let terms: Vec<Term> = (0..len)
        .map(|i| match i {
            _ if i == subj => Term::EntitySubj,
            _ if i == obj => Term::EntityObj,
            _ => Term::word(format!("w{i}")),
        })
        .collect();
    TermSequence {
        surfaces: terms.iter().map(Term::label).collect(),
        terms,
        subj_pos: subj,
        obj_pos: obj,
    }
}

proptest! {
    #[test]
    fn cropping_keeps_participants_in_a_contiguous_window((len, subj, obj) in participants(), n in 2usize..30) {
        let seq = sequence(len, subj, obj);
        match crop_to_window(&seq, n) {
            Ok(c) => {
                prop_assert!(c.len() <= n);
                prop_assert_eq!(c.len(), len.min(n));
                c.validate().unwrap();
                let start = subj - c.subj_pos;
                prop_assert_eq!(obj - c.obj_pos, start);
                prop_assert_eq!(&c.terms[..], &seq.terms[start..start + c.len()]);
            }
            Err(_) => prop_assert!(subj.abs_diff(obj) + 1 > n),
        }
    }

    #[test]
    fn folds_partition_documents(counts in prop::collection::vec(1usize..30, 3..40), k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(counts.len() >= k);
        let names: Vec<String> = (0..counts.len()).map(|i| format!("d{i}")).collect();
        let docs: Vec<(&str, usize)> = names.iter().map(String::as_str).zip(counts.iter().copied()).collect();
        let a = split_counts(&docs, k, seed).unwrap();
        prop_assert_eq!(a.folds(), k);
        let mut seen = BTreeSet::new();
        let mut totals = vec![0usize; k];
        for f in 0..k {
            for d in a.docs_in(f) {
                prop_assert!(seen.insert(d.to_string()));
                totals[f] += docs.iter().find(|x| x.0 == d).unwrap().1;
            }
        }
        prop_assert_eq!(seen.len(), docs.len());
        let spread = totals.iter().max().unwrap() - totals.iter().min().unwrap();
        prop_assert!(spread <= *counts.iter().max().unwrap());
        prop_assert_eq!(&a, &split_counts(&docs, k, seed).unwrap());
    }

    #[test]
    fn negation_is_an_involution(p in sentiment()) {
        let once = apply_negation(p, Some(DEFAULT_NEGATION), DEFAULT_NEGATION);
        prop_assert_eq!(apply_negation(once, Some(DEFAULT_NEGATION), DEFAULT_NEGATION), p);
        prop_assert_eq!(apply_negation(p, Some("и"), DEFAULT_NEGATION), p);
        prop_assert_eq!(apply_negation(p, None, DEFAULT_NEGATION), p);
        prop_assert_eq!(once == Sentiment::Neutral, p == Sentiment::Neutral);
    }

    #[test]
    fn frame_matches_are_ordered_and_disjoint(seq in prop::collection::vec(0usize..5, 0..30)) {
        let lex = FrameLexicon::from_entries([
            FrameEntry { lemmas: vec!["x0".into()], polarity: Sentiment::Positive },
            FrameEntry { lemmas: vec!["x0".into(), "x1".into()], polarity: Sentiment::Negative },
            FrameEntry { lemmas: vec!["x2".into(), "x2".into(), "x3".into()], polarity: Sentiment::Positive },
        ]).unwrap();
        let lemmas: Vec<String> = seq.iter().map(|i| format!("x{i}")).collect();
        let matches = lex.match_frames(&lemmas);
        let mut cursor = 0;
        for m in &matches {
            prop_assert!(m.start >= cursor && m.start < m.end && m.end <= lemmas.len());
            prop_assert_eq!(lex.get(&lemmas[m.start..m.end]), Some(m.polarity));
            cursor = m.end;
        }
    }

    #[test]
    fn aggregation_is_argmax_of_the_mean(probs in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 1..6)) {
        let key = OpinionKey { doc_id: "d".into(), source: "a".into(), target: "b".into() };
        let out = aggregate_opinions(probs.iter().map(|p| (key.clone(), *p)));
        let mut mean = [0.0; 3];
        for p in &probs {
            for c in 0..3 {
                mean[c] += p[c];
            }
        }
        for m in &mut mean {
            *m /= probs.len() as f64;
        }
        prop_assert_eq!(out.len(), 1);
        prop_assert_eq!(out[&key], argmax_label(&mean));
    }

    #[test]
    fn ties_go_to_neutral(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!(a > b);
        prop_assert_eq!(argmax_label(&[a, a, b]), Sentiment::Neutral);
        prop_assert_eq!(argmax_label(&[a, b, b]), Sentiment::Positive);
        prop_assert_eq!(argmax_label(&[b, a, b]), Sentiment::Negative);
    }

    #[test]
    fn kde_is_a_density(samples in prop::collection::vec(0.0f64..0.2, 1..50)) {
        let h = silverman_bandwidth(&samples);
        prop_assert!(h >= 1e-3);
        let g = grid(-1.0, 1.2, 4401);
        let d = kde(&samples, &g, None).unwrap();
        prop_assert!(d.iter().all(|&v| v >= 0.0));
        let step = g[1] - g[0];
        let integral: f64 = d.windows(2).map(|w| 0.5 * step * (w[0] + w[1])).sum();
        prop_assert!((integral - 1.0).abs() < 1e-3, "integral {}", integral);
    }

    #[test]
    fn matmul_matches_naive((r, k, c) in (1usize..6, 1usize..6, 1usize..6), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..r * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let va = tape.leaf(Tensor::matrix(r, k, a.clone()).unwrap());
        let vb = tape.leaf(Tensor::matrix(k, c, b.clone()).unwrap());
        let p = tape.matmul(va, vb).unwrap();
        let got = tape.value(p).data();
        for i in 0..r {
            for j in 0..c {
                let want: f64 = (0..k).map(|t| a[i * k + t] * b[t * c + j]).sum();
                prop_assert!((got[i * c + j] - want).abs() < 1e-12);
            }
        }
    }
}
