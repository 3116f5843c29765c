//! Polynomial evaluation hash modulo 2^130 - 5, Horner form, 26-bit limbs.

/// Bits of `r` cleared before use: the top four bits of bytes 3, 7, 11, 15 and
/// the bottom two bits of bytes 4, 8, 12 (22 bits in total).
pub const CLAMP_MASK: u128 = 0x0fff_fffc_0fff_fffc_0fff_fffc_0fff_ffff;

pub fn clamp(k1: u128) -> u128 {
    k1 & CLAMP_MASK
}

/// A value fully reduced modulo 2^130 - 5: `high` holds bits 128 and 129.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct PolyValue {
    pub low: u128,
    pub high: u8,
}

struct Horner {
    r: [u32; 5],
    s: [u32; 4],
    h: [u32; 5],
    multiplications: usize,
}

impl Horner {
    fn new(r: u128) -> Self {
        let r = clamp(r);
        let lo = r as u64;
        let hi = (r >> 64) as u64;
        let r0 = (lo & 0x3ff_ffff) as u32;
        let r1 = ((lo >> 26) & 0x3ff_ffff) as u32;
        let r2 = (((lo >> 52) | (hi << 12)) & 0x3ff_ffff) as u32;
        let r3 = ((hi >> 14) & 0x3ff_ffff) as u32;
        let r4 = ((hi >> 40) & 0x3ff_ffff) as u32;
        Horner {
            r: [r0, r1, r2, r3, r4],
            s: [r1 * 5, r2 * 5, r3 * 5, r4 * 5],
            h: [0; 5],
            multiplications: 0,
        }
    }

    /// `h = (h + chunk) * r mod p` for one 16-byte coefficient plus its high bit.
    fn absorb(&mut self, block: &[u8; 16], hibit: u32) {
        let t0 = u32::from_le_bytes(block[0..4].try_into().unwrap());
        let t1 = u32::from_le_bytes(block[4..8].try_into().unwrap());
        let t2 = u32::from_le_bytes(block[8..12].try_into().unwrap());
        let t3 = u32::from_le_bytes(block[12..16].try_into().unwrap());

        let h = &mut self.h;
        h[0] += t0 & 0x3ff_ffff;
        h[1] += ((((t1 as u64) << 32) | t0 as u64) >> 26) as u32 & 0x3ff_ffff;
        h[2] += ((((t2 as u64) << 32) | t1 as u64) >> 20) as u32 & 0x3ff_ffff;
        h[3] += ((((t3 as u64) << 32) | t2 as u64) >> 14) as u32 & 0x3ff_ffff;
        h[4] += (t3 >> 8) | (hibit << 24);

        let [r0, r1, r2, r3, r4] = self.r.map(u64::from);
        let [s1, s2, s3, s4] = self.s.map(u64::from);
        let [h0, h1, h2, h3, h4] = h.map(u64::from);

        let d0 = h0 * r0 + h1 * s4 + h2 * s3 + h3 * s2 + h4 * s1;
        let mut d1 = h0 * r1 + h1 * r0 + h2 * s4 + h3 * s3 + h4 * s2;
        let mut d2 = h0 * r2 + h1 * r1 + h2 * r0 + h3 * s4 + h4 * s3;
        let mut d3 = h0 * r3 + h1 * r2 + h2 * r1 + h3 * r0 + h4 * s4;
        let mut d4 = h0 * r4 + h1 * r3 + h2 * r2 + h3 * r1 + h4 * r0;
        self.multiplications += 1;

        let mut c = d0 >> 26;
        h[0] = d0 as u32 & 0x3ff_ffff;
        d1 += c;
        c = d1 >> 26;
        h[1] = d1 as u32 & 0x3ff_ffff;
        d2 += c;
        c = d2 >> 26;
        h[2] = d2 as u32 & 0x3ff_ffff;
        d3 += c;
        c = d3 >> 26;
        h[3] = d3 as u32 & 0x3ff_ffff;
        d4 += c;
        c = d4 >> 26;
        h[4] = d4 as u32 & 0x3ff_ffff;
        h[0] += c as u32 * 5;
        c = (h[0] >> 26) as u64;
        h[0] &= 0x3ff_ffff;
        h[1] += c as u32;
    }

    fn finish(mut self) -> PolyValue {
        let h = &mut self.h;
        for _ in 0..2 {
            let mut c = 0;
            for limb in h.iter_mut() {
                *limb += c;
                c = *limb >> 26;
                *limb &= 0x3ff_ffff;
            }
            h[0] += c * 5;
        }

        // h < 2^130 now; subtract p once if h + 5 reaches 2^130.
        let low = (h[0] as u128)
            | (h[1] as u128) << 26
            | (h[2] as u128) << 52
            | (h[3] as u128) << 78
            | ((h[4] & 0xff_ffff) as u128) << 104;
        let high = (h[4] >> 24) as u8;
        let (plus5, carry) = low.overflowing_add(5);
        let high5 = high + carry as u8;
        if high5 >= 4 {
            PolyValue {
                low: plus5,
                high: high5 - 4,
            }
        } else {
            PolyValue { low, high }
        }
    }
}

/// Evaluates the message polynomial at the clamped key, one multiplication per
/// 16-byte chunk. Each chunk gets a 1 appended above its last byte.
pub fn poly_hash(message: &[u8], k1: u128) -> PolyValue {
    poly_hash_counted(message, k1).0
}

/// As [`poly_hash`], also returning the number of field multiplications.
pub fn poly_hash_counted(message: &[u8], k1: u128) -> (PolyValue, usize) {
    let mut st = Horner::new(k1);
    let mut chunks = message.chunks_exact(16);
    for chunk in &mut chunks {
        st.absorb(chunk.try_into().unwrap(), 1);
    }
    let rest = chunks.remainder();
    if !rest.is_empty() {
        let mut block = [0u8; 16];
        block[..rest.len()].copy_from_slice(rest);
        block[rest.len()] = 1;
        st.absorb(&block, 0);
    }
    let m = st.multiplications;
    (st.finish(), m)
}
