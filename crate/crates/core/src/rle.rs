//! Zero run-length coding with 5-bit run counters, as used for the sparse
//! baseline's DRAM traffic.
//!
//! Each token is `(run, value)`: `run` zeros followed by `value`. Runs longer
//! than 31 are split by emitting `(31, 0)`, which covers 32 zeros. A trailing
//! run of `n` zeros ends with `(n - 1, 0)`.

use crate::tensor::QuantTensor;

pub const RUN_BITS: u32 = 5;
const MAX_RUN: usize = (1 << RUN_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RleToken {
    pub run: u8,
    pub value: i64,
}

pub fn rle5_encode(data: &[i64]) -> Vec<RleToken> {
    let mut out = Vec::new();
    let mut run = 0usize;
    let split = |run: &mut usize, out: &mut Vec<RleToken>| {
        while *run > MAX_RUN {
            out.push(RleToken { run: MAX_RUN as u8, value: 0 });
            *run -= MAX_RUN + 1;
        }
    };
    for &v in data {
        if v == 0 {
            run += 1;
            continue;
        }
        split(&mut run, &mut out);
        out.push(RleToken { run: run as u8, value: v });
        run = 0;
    }
    if run > 0 {
        // The final token's value slot carries one of the zeros.
        while run > MAX_RUN + 1 {
            out.push(RleToken { run: MAX_RUN as u8, value: 0 });
            run -= MAX_RUN + 1;
        }
        out.push(RleToken { run: (run - 1) as u8, value: 0 });
    }
    out
}

pub fn rle5_decode(tokens: &[RleToken]) -> Vec<i64> {
    let mut out = Vec::new();
    for t in tokens {
        out.extend(std::iter::repeat_n(0, t.run as usize));
        out.push(t.value);
    }
    out
}

/// Token count without materializing the stream.
pub fn rle5_token_count(data: &[i64]) -> u64 {
    let mut tokens = 0u64;
    let mut run = 0u64;
    let cap = MAX_RUN as u64 + 1;
    for &v in data {
        if v == 0 {
            run += 1;
        } else {
            tokens += run / cap + 1;
            run = 0;
        }
    }
    if run > 0 {
        tokens += run.div_ceil(cap);
    }
    tokens
}

/// Compressed size in bits: every token holds a 5-bit run and one value.
pub fn rle5_compress_size(t: &QuantTensor) -> u64 {
    rle5_token_count(&t.data) * (u64::from(RUN_BITS) + u64::from(t.precision_bits))
}
