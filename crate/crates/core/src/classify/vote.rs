/// Plurality vote over `(source, label)` pairs.
///
/// Ties between the most frequent labels go to the label voted by the
/// earliest source in `precedence` that backed one of them. Returns `None`
/// only for an empty vote list.
pub fn majority_vote<S, L>(votes: &[(S, L)], precedence: &[S]) -> Option<L>
where
    S: PartialEq,
    L: Copy + PartialEq,
{
    let mut tally: Vec<(L, usize)> = Vec::new();
    for (_, label) in votes {
        match tally.iter_mut().find(|(l, _)| l == label) {
            Some((_, n)) => *n += 1,
            None => tally.push((*label, 1)),
        }
    }
    let best = tally.iter().map(|(_, n)| *n).max()?;
    let tied: Vec<L> = tally.iter().filter(|(_, n)| *n == best).map(|(l, _)| *l).collect();
    if tied.len() == 1 {
        return Some(tied[0]);
    }
    precedence.iter().filter_map(|src| votes.iter().find(|(s, _)| s == src).map(|(_, l)| *l)).find(|l| tied.contains(l)).or(Some(tied[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strict_majority_wins() {
        let votes = [("svm", 'A'), ("nb", 'A'), ("lr", 'B')];
        assert_eq!(majority_vote(&votes, &["svm", "nb", "lr"]), Some('A'));
    }

    #[test]
    fn tie_goes_to_earliest_source() {
        let votes = [("nb", 'B'), ("svm", 'A')];
        assert_eq!(majority_vote(&votes, &["svm", "nb"]), Some('A'));
        assert_eq!(majority_vote(&votes, &["nb", "svm"]), Some('B'));
    }

    #[test]
    fn unanimity_and_empty() {
        assert_eq!(majority_vote(&[(0, 'A'), (1, 'A'), (2, 'A')], &[0, 1, 2]), Some('A'));
        assert_eq!(majority_vote::<u8, char>(&[], &[]), None);
    }

    proptest! {
        #[test]
        fn winner_is_one_of_the_votes(labels in proptest::collection::vec(0u8..4, 1..9)) {
            let votes: Vec<(usize, u8)> = labels.iter().copied().enumerate().collect();
            let precedence: Vec<usize> = (0..labels.len()).rev().collect();
            let w = majority_vote(&votes, &precedence).unwrap();
            prop_assert!(labels.contains(&w));
        }
    }
}
