//! Combinational semantics of the PIM block attached to each sense amp.
//!
//! A transverse read yields a thermometer code: level `j` is set when the
//! span holds at least `j` ones. The decoder turns that code into the
//! bulk-bitwise outputs and the sum / carry / super-carry bits, which
//! together are the binary expansion of the ones count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of sense levels produced for the default TR distance.
pub const SENSE_LEVELS: usize = 7;

#[cfg(feature = "wide-trd")]
pub const WIDE_SENSE_LEVELS: usize = 15;

/// TR distances beyond the seven sense levels need the `wide-trd` decoder.
pub fn check_trd(trd: usize) -> Result<()> {
    if !cfg!(feature = "wide-trd") && trd > SENSE_LEVELS {
        return Err(Error::InvalidGeometry(format!(
            "TRD {trd} exceeds {SENSE_LEVELS} sense levels; build with the wide-trd feature"
        )));
    }
    Ok(())
}

/// Thermometer-coded sense amp output. Bit `j - 1` holds level `s[j]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SenseLevels {
    bits: u16,
    levels: u8,
}

impl SenseLevels {
    /// Builds levels from explicit booleans `s[1]..s[n]`, rejecting codes
    /// that are not monotone.
    pub fn from_levels(levels: &[bool]) -> Result<Self> {
        if levels.len() > 15 {
            return Err(Error::CountOutOfRange { count: levels.len() as u32, max: 15 });
        }
        let mut bits = 0u16;
        for (j, &s) in levels.iter().enumerate() {
            if s {
                if j > 0 && !levels[j - 1] {
                    return Err(Error::Parse("sense levels are not thermometer coded".into()));
                }
                bits |= 1 << j;
            }
        }
        Ok(Self { bits, levels: levels.len() as u8 })
    }

    /// Level `s[j]` for `j >= 1`; levels above the configured count read false.
    pub fn s(&self, j: usize) -> bool {
        j >= 1 && j <= self.levels as usize && self.bits & (1 << (j - 1)) != 0
    }

    pub fn level_count(&self) -> usize {
        self.levels as usize
    }

    /// Ones count encoded by the levels.
    pub fn count(&self) -> u32 {
        self.bits.count_ones()
    }
}

/// Sense levels for a ones count of `0..=7`.
pub fn sense(ones_count: u32) -> Result<SenseLevels> {
    sense_levels(ones_count, SENSE_LEVELS)
}

/// Sense levels for TR distances beyond 7 (experimental).
#[cfg(feature = "wide-trd")]
pub fn sense_wide(ones_count: u32) -> Result<SenseLevels> {
    sense_levels(ones_count, WIDE_SENSE_LEVELS)
}

fn sense_levels(ones_count: u32, levels: usize) -> Result<SenseLevels> {
    if ones_count as usize > levels {
        return Err(Error::CountOutOfRange { count: ones_count, max: levels as u32 });
    }
    Ok(SenseLevels { bits: ((1u32 << ones_count) - 1) as u16, levels: levels as u8 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LogicOutputs {
    pub or: bool,
    pub nor: bool,
    pub and: bool,
    pub nand: bool,
    pub xor: bool,
    pub xnor: bool,
    pub not: bool,
    pub sum: bool,
    pub carry: bool,
    pub super_carry: bool,
    /// Bit 3 of the ones count, only meaningful for TR distances 8..15.
    #[cfg(feature = "wide-trd")]
    pub super_carry2: bool,
}

/// Bit `bit` of the ones count, reconstructed from the thermometer code as
/// the union of intervals `[m*2^(b+1) + 2^b, (m+1)*2^(b+1))`.
fn count_bit(levels: &SenseLevels, bit: u32) -> bool {
    let period = 1usize << (bit + 1);
    let half = 1usize << bit;
    let n = levels.level_count();
    (0..=n / period).any(|m| {
        let lo = m * period + half;
        let hi = (m + 1) * period;
        lo <= n && levels.s(lo) && !levels.s(hi)
    })
}

/// Decodes sense levels for `n_operands` stored operands (unused span
/// positions zero-filled). `and` therefore tests level `s[n_operands]`.
pub fn decode(levels: SenseLevels, n_operands: usize) -> Result<LogicOutputs> {
    if n_operands == 0 || n_operands > levels.level_count() {
        return Err(Error::OperandCountOutOfRange(n_operands));
    }
    // The remaining operands plus carry-ins can legitimately exceed
    // n_operands during addition, so only the level range is enforced.
    let or = levels.s(1);
    let and = levels.s(n_operands);
    let xor = count_bit(&levels, 0);
    Ok(LogicOutputs {
        or,
        nor: !or,
        and,
        nand: !and,
        xor,
        xnor: !xor,
        not: !or,
        sum: xor,
        carry: count_bit(&levels, 1),
        super_carry: count_bit(&levels, 2),
        #[cfg(feature = "wide-trd")]
        super_carry2: count_bit(&levels, 3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trd_limit_follows_sense_levels() {
        assert!(check_trd(7).is_ok());
        assert_eq!(check_trd(8).is_ok(), cfg!(feature = "wide-trd"));
    }

    #[test]
    fn sense_thresholds() {
        let z = sense(0).unwrap();
        assert!((1..=7).all(|j| !z.s(j)));
        let f = sense(7).unwrap();
        assert!((1..=7).all(|j| f.s(j)));
        let t = sense(3).unwrap();
        assert!(t.s(1) && t.s(2) && t.s(3));
        assert!(!t.s(4) && !t.s(5) && !t.s(6) && !t.s(7));
        assert_eq!(sense(8), Err(Error::CountOutOfRange { count: 8, max: 7 }));
    }

    #[test]
    fn levels_are_monotone() {
        for c in 0..=7 {
            let l = sense(c).unwrap();
            for j in 2..=7 {
                assert!(!l.s(j) || l.s(j - 1));
            }
        }
        assert!(SenseLevels::from_levels(&[true, false, true, false, false, false, false]).is_err());
    }

    #[test]
    fn decode_examples() {
        let o = decode(sense(3).unwrap(), 7).unwrap();
        assert!(o.or && !o.and && o.xor && o.carry && !o.super_carry);
        let o = decode(sense(4).unwrap(), 7).unwrap();
        assert!(!o.xor && !o.carry && o.super_carry);
        for n in 1..=7 {
            let o = decode(sense(0).unwrap(), n).unwrap();
            assert!(!o.or && o.nor && !o.and && !o.sum && !o.carry && !o.super_carry);
        }
    }

    #[test]
    fn decode_matches_explicit_level_formulas() {
        for c in 0..=7 {
            let l = sense(c).unwrap();
            let o = decode(l, 7).unwrap();
            let s = |j| l.s(j);
            let xor = (s(1) && !s(2)) || (s(3) && !s(4)) || (s(5) && !s(6)) || s(7);
            let carry = (s(2) && !s(4)) || s(6);
            assert_eq!(o.xor, xor, "count {c}");
            assert_eq!(o.carry, carry, "count {c}");
            assert_eq!(o.super_carry, s(4), "count {c}");
            assert_eq!(o.and, s(7));
        }
    }

    #[test]
    fn decode_is_binary_expansion() {
        for c in 0..=7u32 {
            let o = decode(sense(c).unwrap(), 7).unwrap();
            assert_eq!(c, o.sum as u32 + 2 * o.carry as u32 + 4 * o.super_carry as u32);
            assert_eq!(o.nor, !o.or);
            assert_eq!(o.nand, !o.and);
            assert_eq!(o.xnor, !o.xor);
            assert_eq!(o.sum, o.xor);
        }
    }

    #[test]
    fn not_of_single_operand() {
        for bit in 0..=1u32 {
            let o = decode(sense(bit).unwrap(), 1).unwrap();
            assert_eq!(o.not, bit == 0);
        }
    }

    #[test]
    fn k_ary_gates_exhaustive() {
        for k in 2..=7usize {
            for pattern in 0u32..(1 << k) {
                let ones = pattern.count_ones();
                let o = decode(sense(ones).unwrap(), k).unwrap();
                let bits: Vec<bool> = (0..k).map(|i| pattern >> i & 1 == 1).collect();
                assert_eq!(o.or, bits.iter().any(|&b| b));
                assert_eq!(o.and, bits.iter().all(|&b| b));
                assert_eq!(o.xor, bits.iter().fold(false, |a, &b| a ^ b));
            }
        }
    }

    #[test]
    fn operand_count_checked() {
        assert!(decode(sense(1).unwrap(), 0).is_err());
        assert!(decode(sense(1).unwrap(), 8).is_err());
    }

    #[cfg(feature = "wide-trd")]
    #[test]
    fn wide_decode_expands_four_bits() {
        for c in 0..=15u32 {
            let o = decode(sense_wide(c).unwrap(), 15).unwrap();
            let v = o.sum as u32 + 2 * o.carry as u32 + 4 * o.super_carry as u32 + 8 * o.super_carry2 as u32;
            assert_eq!(v, c);
        }
    }
}
