//! Sentence encoders: bag-of-words and position encoding.

use super::config::Encoding;
use crate::error::{Error, Result};
use crate::tensor::Mat;

/// `l_kj = (1 - j/J) - (k/d)(1 - 2j/J)` with 1-based `k` and `j`.
pub fn position_weight(k: usize, j: usize, words: usize, dim: usize) -> f64 {
    let (k, j, jj, d) = (k as f64, j as f64, words as f64, dim as f64);
    (1.0 - j / jj) - (k / d) * (1.0 - 2.0 * j / jj)
}

/// `d x J` matrix of position weights; column `j-1` holds `l_j`.
pub fn position_weights(words: usize, dim: usize) -> Mat {
    let mut l = Mat::zeros(dim, words);
    for k in 0..dim {
        for j in 0..words {
            l[(k, j)] = position_weight(k + 1, j + 1, words, dim);
        }
    }
    l
}

/// Visits `(word, weights)` for every non-null word of `words`.
///
/// `weights` is `None` for bag-of-words (all ones). Under position encoding,
/// `J` and positions count only non-null words.
pub(crate) fn for_each_weighted<F>(words: &[usize], null: usize, dim: usize, scheme: Encoding, mut f: F)
where
    F: FnMut(usize, Option<&[f64]>),
{
    match scheme {
        Encoding::BagOfWords => {
            for &w in words.iter().filter(|&&w| w != null) {
                f(w, None);
            }
        }
        Encoding::Position => {
            let real = words.iter().filter(|&&w| w != null).count();
            let mut l = vec![0.0; dim];
            for (j, &w) in words.iter().filter(|&&w| w != null).enumerate() {
                for (k, lk) in l.iter_mut().enumerate() {
                    *lk = position_weight(k + 1, j + 1, real, dim);
                }
                f(w, Some(&l));
            }
        }
    }
}

pub(crate) fn check_words(words: &[usize], vocab: usize) -> Result<()> {
    match words.iter().find(|&&w| w >= vocab) {
        Some(&w) => Err(Error::IndexOutOfRange { index: w, size: vocab }),
        None => Ok(()),
    }
}

/// Adds the encoding of `words` through embedding `emb` (d x V) into `out`.
pub(crate) fn encode_into(out: &mut [f64], words: &[usize], emb: &Mat, scheme: Encoding, null: usize) {
    let dim = emb.rows();
    let v = emb.cols();
    let data = emb.as_slice();
    for_each_weighted(words, null, dim, scheme, |w, l| match l {
        None => {
            for (k, o) in out.iter_mut().enumerate() {
                *o += data[k * v + w];
            }
        }
        Some(l) => {
            for (k, o) in out.iter_mut().enumerate() {
                *o += l[k] * data[k * v + w];
            }
        }
    });
}

/// Encodes one sentence (word indices) with embedding `emb` (d x V).
pub fn encode_sentence(words: &[usize], emb: &Mat, scheme: Encoding, null: usize) -> Result<Vec<f64>> {
    check_words(words, emb.cols())?;
    let mut out = vec![0.0; emb.rows()];
    encode_into(&mut out, words, emb, scheme, null);
    Ok(out)
}

/// Backward of [`encode_into`]: scatters `grad` (d) into the columns of `demb`.
pub(crate) fn encode_backward(grad: &[f64], words: &[usize], demb: &mut Mat, scheme: Encoding, null: usize) {
    let dim = demb.rows();
    let v = demb.cols();
    let data = demb.as_mut_slice();
    for_each_weighted(words, null, dim, scheme, |w, l| match l {
        None => {
            for (k, g) in grad.iter().enumerate() {
                data[k * v + w] += g;
            }
        }
        Some(l) => {
            for (k, g) in grad.iter().enumerate() {
                data[k * v + w] += l[k] * g;
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gaussian_init;

    #[test]
    fn single_word_weights_are_k_over_d() {
        for d in 1..6 {
            for k in 1..=d {
                assert_eq!(position_weight(k, 1, 1, d), k as f64 / d as f64);
            }
        }
    }

    #[test]
    fn middle_position_is_one_half() {
        for jj in [2, 4, 6, 10] {
            let l = position_weights(jj, 7);
            for k in 0..7 {
                assert!((l[(k, jj / 2 - 1)] - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hand_evaluated_entry() {
        // J=3, d=4, k=2, j=1: (1 - 1/3) - (2/4)(1 - 2/3) = 2/3 - 1/6 = 1/2
        assert!((position_weight(2, 1, 3, 4) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn null_words_encode_to_zero() {
        let mut e = gaussian_init(4, 5, 1.0, 3);
        e.set_column(4, 0.0);
        for scheme in [Encoding::BagOfWords, Encoding::Position] {
            assert_eq!(encode_sentence(&[4, 4, 4], &e, scheme, 4).unwrap(), vec![0.0; 4]);
        }
    }

    #[test]
    fn single_word_encodings() {
        let e = gaussian_init(4, 5, 1.0, 11);
        assert_eq!(encode_sentence(&[2], &e, Encoding::BagOfWords, 4).unwrap(), e.column(2));
        let pe = encode_sentence(&[2], &e, Encoding::Position, 4).unwrap();
        for k in 0..4 {
            let expected = (k + 1) as f64 / 4.0 * e[(k, 2)];
            assert!((pe[k] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn padding_does_not_shift_positions() {
        let e = gaussian_init(3, 6, 1.0, 5);
        let plain = encode_sentence(&[1, 2, 3], &e, Encoding::Position, 5).unwrap();
        let padded = encode_sentence(&[1, 2, 3, 5, 5], &e, Encoding::Position, 5).unwrap();
        assert_eq!(plain, padded);
    }

    #[test]
    fn out_of_range_word_rejected() {
        let e = Mat::zeros(2, 3);
        assert!(encode_sentence(&[3], &e, Encoding::BagOfWords, 0).is_err());
    }
}
