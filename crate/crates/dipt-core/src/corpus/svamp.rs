//! SVAMP multiple-choice synthesis: three neighboring distractors around
//! the gold value.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Option_;

/// Render a numeric value without float noise: integers bare, fractions
/// rounded to three decimals.
pub fn format_number(value: f64) -> String {
    let rounded = (value * 1000.0).round() / 1000.0;
    if rounded.fract() == 0.0 {
        format!("{}", rounded as i64)
    } else {
        format!("{rounded}")
    }
}

/// Swap the two leading digits of the integer part (48 -> 84); numbers with
/// fewer than two digits come back unchanged and are deduplicated away.
fn digit_swap(value: f64) -> f64 {
    let negative = value < 0.0;
    let magnitude = value.abs();
    let whole = magnitude.trunc() as i64;
    let fraction = magnitude.fract();
    let digits: Vec<u8> = whole.to_string().into_bytes();
    if digits.len() < 2 {
        return value;
    }
    let mut swapped = digits;
    swapped.swap(0, 1);
    let whole: f64 = String::from_utf8(swapped).unwrap().parse().unwrap();
    let out = whole + fraction;
    if negative {
        -out
    } else {
        out
    }
}

/// Gold plus three distinct neighboring distractors, shuffled by `seed`.
/// Returns the labeled options and the gold option's index.
pub fn svamp_make_multichoice(gold_value: f64, seed: u64) -> (Vec<Option_>, usize) {
    let gold_text = format_number(gold_value);
    let candidates = [
        gold_value + 1.0,
        gold_value - 1.0,
        gold_value + 2.0,
        gold_value - 2.0,
        gold_value * 1.1,
        gold_value * 0.9,
        digit_swap(gold_value),
    ];
    let mut pool: Vec<String> = Vec::new();
    for candidate in candidates {
        let text = format_number(candidate);
        if text != gold_text && !pool.contains(&text) {
            pool.push(text);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let mut texts: Vec<String> = pool.into_iter().take(3).collect();
    texts.push(gold_text.clone());
    texts.shuffle(&mut rng);
    let gold_index = texts.iter().position(|t| *t == gold_text).unwrap();
    let options = texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| Option_ { label: (i + 1).to_string(), text })
        .collect();
    (options, gold_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn produces_four_distinct_options_with_gold_exactly_once() {
        for gold in [48.0, 0.0, 7.0, -3.0, 100.0, 2.5, 1234.0] {
            for seed in 0..20 {
                let (options, gold_index) = svamp_make_multichoice(gold, seed);
                assert_eq!(options.len(), 4, "gold {gold}");
                let texts: BTreeSet<&str> = options.iter().map(|o| o.text.as_str()).collect();
                assert_eq!(texts.len(), 4, "gold {gold} seed {seed}: {options:?}");
                let gold_text = format_number(gold);
                let hits = options.iter().filter(|o| o.text == gold_text).count();
                assert_eq!(hits, 1);
                assert_eq!(options[gold_index].text, gold_text);
                assert_eq!(options.iter().map(|o| o.label.as_str()).collect::<Vec<_>>(), ["1", "2", "3", "4"]);
            }
        }
    }

    #[test]
    fn same_inputs_give_identical_output() {
        let a = svamp_make_multichoice(48.0, 11);
        let b = svamp_make_multichoice(48.0, 11);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_gold_draws_from_unit_neighbors() {
        let (options, _) = svamp_make_multichoice(0.0, 3);
        let allowed: BTreeSet<&str> = ["0", "1", "-1", "2", "-2"].into();
        for option in &options {
            assert!(allowed.contains(option.text.as_str()), "{option:?}");
        }
    }

    #[test]
    fn digit_swap_behaviour() {
        assert_eq!(digit_swap(48.0), 84.0);
        assert_eq!(digit_swap(123.0), 213.0);
        assert_eq!(digit_swap(-35.0), -53.0);
        assert_eq!(digit_swap(7.0), 7.0);
    }

    #[test]
    fn number_formatting_avoids_float_noise() {
        assert_eq!(format_number(48.0), "48");
        assert_eq!(format_number(48.0 * 1.1), "52.8");
        assert_eq!(format_number(2.5), "2.5");
        assert_eq!(format_number(-3.0), "-3");
    }
}
