mod common;

use subseg::eventseg::{derive_segments, pairwise_same_segment};

use common::eventseg_fixtures;

#[test]
fn fixtures_give_expected_boundaries() {
    for (name, doc, want) in eventseg_fixtures() {
        let seg = derive_segments(&doc).unwrap();
        assert_eq!(seg.boundaries(), &want[..], "{name}");
    }
}

#[test]
fn same_segment_flags_agree_with_spans() {
    for (name, doc, _) in eventseg_fixtures() {
        let seg = derive_segments(&doc).unwrap();
        let spans = seg.segments();
        let labeled = pairwise_same_segment(&doc, &seg);
        for i in 0..doc.num_events() {
            for j in 0..doc.num_events() {
                if i == j {
                    continue;
                }
                let span_of = |s: usize| spans.iter().position(|&(a, b)| a <= s && s <= b).unwrap();
                let direct = span_of(doc.events[i].sentence) == span_of(doc.events[j].sentence);
                assert_eq!(labeled.pair_labels.get(i, j).same_segment, Some(direct), "{name} ({i}, {j})");
            }
        }
    }
}
