//! LZSS compression of code sequences.
//!
//! Codes below the base `rb` pass through as literal bytes; a byte >= rb
//! starts a two-byte back-pointer BP = (byte1 - rb) * 256 + byte2 encoding
//! size = BP mod sb + 3 and offset = BP div sb. The size base `sb` trades
//! match length range against offset reach and is chosen per input.

use thiserror::Error;

pub const MIN_MATCH: usize = 3;
pub const SB_RANGE: std::ops::RangeInclusive<u32> = 7..=13;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LzssError {
    #[error("base {0} leaves no byte values for back-pointers")]
    NoPointerSpace(u32),
    #[error("back-pointer parameters out of range (offset {offset}, size {size})")]
    BadPointer { offset: usize, size: usize },
    #[error("back-pointer reaches {offset} codes back but only {have} exist")]
    OffsetTooFar { offset: usize, have: usize },
    #[error("stream ends in the middle of a back-pointer")]
    TruncatedPointer,
    #[error("decompressed {got} codes, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

pub fn max_match(sb: u32) -> usize {
    sb as usize + 2
}

/// Largest offset a pointer can carry with any legal size: the packed
/// value offset*sb + size - 3 must keep the first byte <= 255.
pub fn max_offset(rb: u32, sb: u32) -> usize {
    ((256 - rb) * 256 / sb) as usize - 1
}

pub fn encode_backpointer(
    offset: usize,
    size: usize,
    rb: u32,
    sb: u32,
) -> Result<(u8, u8), LzssError> {
    if size < MIN_MATCH || size > max_match(sb) || offset == 0 {
        return Err(LzssError::BadPointer { offset, size });
    }
    let bp = offset * sb as usize + (size - MIN_MATCH);
    if bp > (256 - rb as usize) * 256 - 1 {
        return Err(LzssError::BadPointer { offset, size });
    }
    Ok((rb as u8 + (bp / 256) as u8, (bp % 256) as u8))
}

/// Greedy longest-match compression at one size base. Ties prefer the
/// nearest (smallest offset) occurrence.
pub fn compress_with(codes: &[u8], rb: u32, sb: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(codes.len());
    let reach = max_offset(rb, sb);
    let longest = max_match(sb);
    let mut i = 0;
    while i < codes.len() {
        let mut best_len = 0;
        let mut best_off = 0;
        let window_start = i.saturating_sub(reach);
        let limit = longest.min(codes.len() - i);
        if limit >= MIN_MATCH {
            for j in (window_start..i).rev() {
                if codes[j] != codes[i] {
                    continue;
                }
                let mut len = 1;
                while len < limit && codes[j + len] == codes[i + len] {
                    len += 1;
                }
                // later j means smaller offset; strict improvement keeps
                // the nearest occurrence among equals
                if len > best_len {
                    best_len = len;
                    best_off = i - j;
                    if len == limit {
                        break;
                    }
                }
            }
        }
        if best_len >= MIN_MATCH {
            let (b1, b2) = encode_backpointer(best_off, best_len, rb, sb)
                .expect("search stays within pointer bounds");
            out.push(b1);
            out.push(b2);
            i += best_len;
        } else {
            out.push(codes[i]);
            i += 1;
        }
    }
    out
}

/// Tries every size base and keeps the smallest output.
pub fn compress(codes: &[u8], rb: u32) -> Result<(Vec<u8>, u32), LzssError> {
    if rb >= 256 {
        return Err(LzssError::NoPointerSpace(rb));
    }
    debug_assert!(codes.iter().all(|&c| (c as u32) < rb));
    let mut best: Option<(Vec<u8>, u32)> = None;
    for sb in SB_RANGE {
        let out = compress_with(codes, rb, sb);
        if best.as_ref().is_none_or(|(b, _)| out.len() < b.len()) {
            best = Some((out, sb));
        }
    }
    Ok(best.expect("size base range is nonempty"))
}

pub fn decompress(
    bytes: &[u8],
    rb: u32,
    sb: u32,
    expected: usize,
) -> Result<Vec<u8>, LzssError> {
    let mut out = Vec::with_capacity(expected);
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if (b as u32) < rb {
            out.push(b);
            i += 1;
            continue;
        }
        let b2 = *bytes.get(i + 1).ok_or(LzssError::TruncatedPointer)?;
        let bp = (b as usize - rb as usize) * 256 + b2 as usize;
        let size = bp % sb as usize + MIN_MATCH;
        let offset = bp / sb as usize;
        if offset == 0 || offset > out.len() {
            return Err(LzssError::OffsetTooFar { offset, have: out.len() });
        }
        // overlapping copies replay recent output left to right
        let from = out.len() - offset;
        for k in 0..size {
            out.push(out[from + k]);
        }
        i += 2;
    }
    if out.len() != expected {
        return Err(LzssError::LengthMismatch { got: out.len(), expected });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> impl FnMut() -> u64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            s >> 33
        }
    }

    #[test]
    fn no_repeats_passes_through() {
        let codes: Vec<u8> = (0..50).collect();
        for sb in SB_RANGE {
            assert_eq!(compress_with(&codes, 92, sb), codes);
        }
    }

    #[test]
    fn short_period_compresses() {
        let codes = [7u8, 8, 9, 7, 8, 9, 7, 8, 9];
        let (out, sb) = compress(&codes, 92).unwrap();
        assert!(out.len() < 9, "got {} bytes", out.len());
        assert_eq!(decompress(&out, 92, sb, 9).unwrap(), codes);
    }

    #[test]
    fn worked_backpointer() {
        // bytes (200, 37) at rb=186, sb=9: BP = 14*256+37 = 3621,
        // size = 3621 mod 9 + 3 = 6, offset = 3621 div 9 = 402
        let mut input = vec![0u8; 402];
        for (i, c) in input.iter_mut().enumerate() {
            *c = (i % 180) as u8;
        }
        let head: Vec<u8> = input[0..6].to_vec();
        let mut stream: Vec<u8> = input.clone();
        stream.extend_from_slice(&head);
        assert_eq!(encode_backpointer(402, 6, 186, 9).unwrap(), (200, 37));
        let mut compressed = input.clone();
        compressed.extend_from_slice(&[200, 37]);
        assert_eq!(decompress(&compressed, 186, 9, stream.len()).unwrap(), stream);
    }

    #[test]
    fn exhaustive_pointer_round_trip() {
        for rb in [92u32, 186] {
            for sb in SB_RANGE {
                for size in MIN_MATCH..=max_match(sb) {
                    for offset in [1, 2, 7, 100, max_offset(rb, sb)] {
                        let (b1, b2) = encode_backpointer(offset, size, rb, sb).unwrap();
                        assert!(b1 as u32 >= rb);
                        let bp = (b1 as usize - rb as usize) * 256 + b2 as usize;
                        assert_eq!(bp % sb as usize + MIN_MATCH, size);
                        assert_eq!(bp / sb as usize, offset);
                    }
                }
            }
        }
    }

    #[test]
    fn minimal_pointer() {
        let sb = 9u32;
        let (b1, b2) = encode_backpointer(1, 3, 186, sb).unwrap();
        assert_eq!((b1, b2), (186 + (sb / 256) as u8, (sb % 256) as u8));
    }

    #[test]
    fn overlapping_copy() {
        // literal 5 then pointer offset 1 size 3 gives [5,5,5,5]
        let (b1, b2) = encode_backpointer(1, 3, 92, 7).unwrap();
        let out = decompress(&[5, b1, b2], 92, 7, 4).unwrap();
        assert_eq!(out, [5, 5, 5, 5]);
    }

    #[test]
    fn random_round_trips_never_grow() {
        let mut next = rng(99);
        for case in 0..300 {
            let len = (next() % 200) as usize;
            let span = 1 + next() % 30;
            let codes: Vec<u8> = (0..len).map(|_| (next() % span) as u8).collect();
            let (out, sb) = compress(&codes, 92).unwrap();
            assert!(out.len() <= codes.len(), "case {case} grew");
            assert_eq!(decompress(&out, 92, sb, codes.len()).unwrap(), codes);
        }
    }

    #[test]
    fn pointer_bytes_only_from_pointers() {
        let mut next = rng(7);
        let codes: Vec<u8> = (0..400).map(|_| (next() % 10) as u8).collect();
        let (out, sb) = compress(&codes, 92).unwrap();
        let mut i = 0;
        while i < out.len() {
            if out[i] >= 92 {
                assert!(i + 1 < out.len());
                i += 2;
            } else {
                i += 1;
            }
        }
        let _ = sb;
    }

    #[test]
    fn offset_beyond_output_is_an_error() {
        let (b1, b2) = encode_backpointer(5, 3, 92, 7).unwrap();
        let e = decompress(&[1, b1, b2], 92, 7, 4).unwrap_err();
        assert_eq!(e, LzssError::OffsetTooFar { offset: 5, have: 1 });
    }
}
