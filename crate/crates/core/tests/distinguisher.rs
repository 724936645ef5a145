use std::collections::BTreeMap;

use awareness_core::distinguisher::{optimal_success, play, CalibrationTable, Distinguisher, ViewPair};
use awareness_core::CanonicalJson;

fn view(m: u8) -> CanonicalJson {
    CanonicalJson::parse(&format!(r#"{{"warningMode":{m}}}"#)).unwrap()
}

fn suite(counts: &[((u8, u8), usize)]) -> Vec<ViewPair> {
    counts
        .iter()
        .flat_map(|&((r, p), n)| std::iter::repeat_n(ViewPair { real: view(r), perceived: view(p) }, n))
        .collect()
}

/// Success rate of the best guesser, by enumerating the ordered pairs the
/// game can show and the probability that each position is the real one.
fn bayes_oracle(s: &[ViewPair]) -> f64 {
    let n = s.len() as f64;
    let mut shown: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    for x in s {
        let (r, p) = (x.real.as_str().to_string(), x.perceived.as_str().to_string());
        // hidden bit 0 shows (real, perceived): position 0 is real
        shown.entry((r.clone(), p.clone())).or_default().0 += 0.5 / n;
        shown.entry((p, r)).or_default().1 += 0.5 / n;
    }
    shown.values().map(|(first_real, second_real)| first_real.max(*second_real)).sum()
}

#[test]
fn random_guessing_is_a_coin() {
    let s = suite(&[((1, 1), 5), ((2, 0), 5)]);
    let (r, _) = play(&s, &Distinguisher::Random, 10_000, 3).unwrap();
    assert!((0.485..=0.515).contains(&r.p_hat), "{}", r.p_hat);
}

#[test]
fn equal_views_give_no_advantage() {
    let s = suite(&[((0, 0), 40), ((1, 1), 30), ((2, 2), 30)]);
    let table = CalibrationTable::from_pairs(&s);
    let bound = 3.0 / (2.0 * 1000f64.sqrt());
    for name in Distinguisher::NAMES {
        let v = Distinguisher::by_name(name, Some(table.clone())).unwrap();
        let (r, _) = play(&s, &v, 1000, 17).unwrap();
        assert!(r.advantage <= bound, "{name}: {}", r.advantage);
    }
    assert_eq!(optimal_success(&s), 0.5);
}

#[test]
fn likelihood_reaches_the_bayes_optimum() {
    // a blind HUD: danger perceived as caution some of the time
    let s = suite(&[((0, 0), 50), ((1, 1), 20), ((2, 2), 15), ((2, 1), 12), ((1, 2), 3)]);
    let oracle = bayes_oracle(&s);
    assert!((optimal_success(&s) - oracle).abs() < 1e-12);
    assert!((oracle - 0.5 - 0.5 * 0.09).abs() < 1e-12, "{oracle}");
    let v = Distinguisher::Likelihood(CalibrationTable::from_pairs(&s));
    let (r, trials) = play(&s, &v, 1000, 8).unwrap();
    assert!(r.ci95.0 <= oracle && oracle <= r.ci95.1, "{:?} vs {oracle}", r.ci95);
    assert_eq!(trials.len(), 1000);
    assert_eq!(trials.iter().filter(|t| t.correct).count() as u64, r.correct);
}

#[test]
fn calibration_decides_mismatched_pairs() {
    // perceived is 0 whenever it is wrong
    let s = suite(&[((2, 0), 10), ((1, 0), 5), ((0, 0), 20)]);
    let v = Distinguisher::Likelihood(CalibrationTable::from_pairs(&s));
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    assert_eq!(v.guess(&view(0), &view(2), &mut rng), 1);
    assert_eq!(v.guess(&view(2), &view(0), &mut rng), 0);
}
