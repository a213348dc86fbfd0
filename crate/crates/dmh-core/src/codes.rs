//! Bit-packed binary codes and the Hamming-distance kernels used for
//! retrieval.
//!
//! Codes are stored one per row, `ceil(c/64)` little-endian words per code,
//! bit `j` of a code living in word `j / 64` at position `j % 64`
//! (LSB-first). Padding bits beyond the code length are kept at zero so
//! distances reduce to XOR + popcount over whole words.

use ndarray::Array2;

use crate::error::{DmhError, Result};
use crate::model::{sigmoid_embed, CodeMatrix, ViewParams};

const WORD_BITS: usize = 64;

/// An immutable matrix of packed binary codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    n: usize,
    code_length: usize,
    words_per_code: usize,
    words: Vec<u64>,
}

/// A borrowed single packed code.
#[derive(Debug, Clone, Copy)]
pub struct CodeRow<'a> {
    words: &'a [u64],
    code_length: usize,
}

impl PackedCodes {
    /// Packs a binary matrix, one code per row.
    pub fn from_bits(bits: &CodeMatrix) -> PackedCodes {
        let (n, c) = bits.dim();
        let wpc = c.div_ceil(WORD_BITS);
        let mut words = vec![0u64; n * wpc];
        for (m, row) in bits.rows().into_iter().enumerate() {
            for (j, &bit) in row.iter().enumerate() {
                debug_assert!(bit <= 1);
                if bit != 0 {
                    words[m * wpc + j / WORD_BITS] |= 1u64 << (j % WORD_BITS);
                }
            }
        }
        PackedCodes {
            n,
            code_length: c,
            words_per_code: wpc,
            words,
        }
    }

    /// Rebuilds packed codes from raw words, validating the zero-padding
    /// invariant.
    pub fn from_words(n: usize, code_length: usize, words: Vec<u64>) -> Result<PackedCodes> {
        let wpc = code_length.div_ceil(WORD_BITS);
        if words.len() != n * wpc {
            return Err(DmhError::Contract(format!(
                "expected {} words for {} codes of length {}, got {}",
                n * wpc,
                n,
                code_length,
                words.len()
            )));
        }
        let tail_bits = code_length % WORD_BITS;
        if tail_bits != 0 && wpc > 0 {
            let mask = !0u64 << tail_bits;
            for m in 0..n {
                if words[m * wpc + wpc - 1] & mask != 0 {
                    return Err(DmhError::Format(format!(
                        "code {m} has non-zero padding bits"
                    )));
                }
            }
        }
        Ok(PackedCodes {
            n,
            code_length,
            words_per_code: wpc,
            words,
        })
    }

    /// Unpacks back into an explicit 0/1 matrix.
    pub fn unpack(&self) -> CodeMatrix {
        Array2::from_shape_fn((self.n, self.code_length), |(m, j)| {
            let w = self.words[m * self.words_per_code + j / WORD_BITS];
            ((w >> (j % WORD_BITS)) & 1) as u8
        })
    }

    pub fn row(&self, m: usize) -> CodeRow<'_> {
        let start = m * self.words_per_code;
        CodeRow {
            words: &self.words[start..start + self.words_per_code],
            code_length: self.code_length,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    pub(crate) fn words_per_code(&self) -> usize {
        self.words_per_code
    }
}

/// Number of bit positions where two codes of equal length differ.
pub fn hamming_distance(a: CodeRow<'_>, b: CodeRow<'_>) -> Result<u32> {
    if a.code_length != b.code_length {
        return Err(DmhError::Contract(format!(
            "code lengths differ: {} vs {}",
            a.code_length, b.code_length
        )));
    }
    Ok(a.words
        .iter()
        .zip(b.words)
        .map(|(x, y)| (x ^ y).count_ones())
        .sum())
}

/// Hamming distance from one query to every database code, in row order.
pub fn distances_to_all(query: CodeRow<'_>, db: &PackedCodes) -> Result<Vec<u32>> {
    if query.code_length != db.code_length {
        return Err(DmhError::Contract(format!(
            "code lengths differ: {} vs {}",
            query.code_length, db.code_length
        )));
    }
    let wpc = db.words_per_code;
    Ok((0..db.n)
        .map(|m| {
            let row = &db.words[m * wpc..(m + 1) * wpc];
            query
                .words
                .iter()
                .zip(row)
                .map(|(x, y)| (x ^ y).count_ones())
                .sum()
        })
        .collect())
}

/// Encodes new samples with trained view parameters: bit = 1 iff the
/// sigmoid output is at least 0.5 (equivalently, the pre-activation is
/// non-negative), matching the round-half-up code update used in training.
pub fn encode_view(queries: &Array2<f64>, params: &ViewParams) -> Result<PackedCodes> {
    let c = sigmoid_embed(queries, params)?;
    Ok(PackedCodes::from_bits(&c.mapv(|x| u8::from(x >= 0.5))))
}
