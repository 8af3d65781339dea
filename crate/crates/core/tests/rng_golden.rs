//! The first values of `gaussian_noise` for seed 42 are pinned in a text file
//! so that any change to the bit source or the normal transform shows up.

use otsteg::rng::gaussian_noise;
use otsteg::{ImageTensor, SeededRng};

const GOLDEN: &str = include_str!("data/gaussian_seed42.txt");

fn first_sixteen() -> Vec<f64> {
    let t: ImageTensor = gaussian_noise(&mut SeededRng::new(42), 1, 4, 4);
    t.data().to_vec()
}

#[test]
fn gaussian_noise_matches_golden_vector() {
    let expected: Vec<f64> = GOLDEN.lines().map(|l| l.trim().parse().unwrap()).collect();
    assert_eq!(expected.len(), 16);
    let got = first_sixteen();
    for (k, (g, e)) in got.iter().zip(&expected).enumerate() {
        // 17 significant digits round-trip a double exactly.
        assert_eq!(g.to_bits(), e.to_bits(), "value {k}: {g:.16e} vs {e:.16e}");
    }
}

#[test]
fn golden_file_uses_seventeen_digits() {
    for line in GOLDEN.lines() {
        let mantissa = line.trim().trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{line}");
    }
}
