use crate::text;

/// Character-level edit distance.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// How well `entity_form` is mentioned in `target`, in [0, 1].
///
/// The maximum of `1 - lev(e, w) / max(|e|, |w|)` over every window `w` of
/// the casefolded target whose length is within two characters of the
/// entity's (and at least one). A target shorter than every window length
/// is compared whole. Empty inputs score 0.
pub fn presence_coefficient(entity_form: &str, target: &str) -> f64 {
    let entity: Vec<char> = text::casefold(entity_form).chars().collect();
    let target: Vec<char> = text::casefold(target).chars().collect();
    if entity.is_empty() || target.is_empty() {
        return 0.0;
    }
    let shortest = entity.len().saturating_sub(2).max(1);
    let longest = entity.len() + 2;
    let score = |window: &[char]| {
        let distance = levenshtein(&entity, window) as f64;
        1.0 - distance / entity.len().max(window.len()) as f64
    };
    if target.len() < shortest {
        return score(&target);
    }
    let mut best: f64 = 0.0;
    for width in shortest..=longest.min(target.len()) {
        for window in target.windows(width) {
            best = best.max(score(window));
            if best >= 1.0 {
                return 1.0;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn exact_substring_is_one() {
        assert_eq!(presence_coefficient("China", "FAW is a car maker from China."), 1.0);
    }

    #[test]
    fn one_edit_window_scores_point_eight() {
        let c = presence_coefficient("China", "the Chine plant");
        assert!((c - 0.8).abs() < 1e-9, "{c}");
    }

    #[test]
    fn disjoint_alphabet_scores_zero() {
        assert_eq!(presence_coefficient("China", "0123456789 0123"), 0.0);
    }

    #[test]
    fn empty_target_scores_zero() {
        assert_eq!(presence_coefficient("China", ""), 0.0);
    }

    #[test]
    fn case_is_ignored() {
        assert_eq!(presence_coefficient("keisuke chiba", "Voiced by KEISUKE CHIBA"), 1.0);
        assert_eq!(
            presence_coefficient("Москва", "в москве"),
            presence_coefficient("москва", "В МОСКВЕ")
        );
    }

    #[test]
    fn short_target_is_compared_whole() {
        // Windows would be 8..=12 characters; the target has 2.
        let c = presence_coefficient("Kazan Kremlin", "ka");
        assert!((c - 2.0 / 13.0).abs() < 1e-9);
    }

    #[test]
    fn levenshtein_known_values() {
        assert_eq!(levenshtein(&chars("kitten"), &chars("sitting")), 3);
        assert_eq!(levenshtein(&chars(""), &chars("abc")), 3);
        assert_eq!(levenshtein(&chars("flaw"), &chars("lawn")), 2);
    }

    proptest! {
        #[test]
        fn levenshtein_matches_reference(a in "[a-dа-в]{0,8}", b in "[a-dа-в]{0,8}") {
            prop_assert_eq!(levenshtein(&chars(&a), &chars(&b)), strsim::levenshtein(&a, &b));
        }

        #[test]
        fn coefficient_is_bounded(e in "\\PC{1,12}", t in "\\PC{0,40}") {
            let c = presence_coefficient(&e, &t);
            prop_assert!((0.0..=1.0).contains(&c));
        }

        #[test]
        fn coefficient_is_one_iff_exact_window(e in "[abc]{1,5}", t in "[abc ]{0,20}") {
            let c = presence_coefficient(&e, &t);
            prop_assert_eq!(c == 1.0, t.contains(&e));
        }
    }
}
