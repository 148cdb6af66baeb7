//! Stemmer output against a reference table of the original algorithm.

use copilot_core::textprep::porter::stem;

#[test]
fn matches_reference_table() {
    let table = include_str!("fixtures/porter_original.tsv");
    let mut mismatches = Vec::new();
    let mut n = 0;
    for line in table.lines().filter(|l| !l.is_empty()) {
        let (word, expected) = line.split_once('\t').expect("word<TAB>stem");
        n += 1;
        let got = stem(word);
        if got != expected {
            mismatches.push(format!("{word}: got {got}, want {expected}"));
        }
    }
    assert!(n > 9000, "fixture too small: {n}");
    assert!(mismatches.is_empty(), "{} mismatches, first: {:?}", mismatches.len(), &mismatches[..mismatches.len().min(20)]);
}
