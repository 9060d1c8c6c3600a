//! Sobol' low-discrepancy points (Joe-Kuo direction numbers) with random
//! digital shifts.

/// `(s, a, m_1..m_s)` for dimensions 2 onwards.
const JOE_KUO: [(u32, u32, &[u32]); 15] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
];

pub const MAX_DIM: usize = JOE_KUO.len() + 1;

const BITS: usize = 32;

/// Gray-code Sobol' generator producing 32-bit integer coordinates.
#[derive(Clone, Debug)]
pub struct Sobol {
    v: Vec<[u32; BITS]>,
    x: Vec<u32>,
    index: u32,
}

impl Sobol {
    pub fn new(dim: usize) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&dim),
            "Sobol dimension {dim} not supported"
        );
        let mut v = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (k, slot) in first.iter_mut().enumerate() {
            *slot = 1 << (BITS - 1 - k);
        }
        v.push(first);
        for &(s, a, m) in JOE_KUO.iter().take(dim - 1) {
            let s = s as usize;
            let mut dir = [0u32; BITS];
            for i in 0..BITS {
                dir[i] = if i < s {
                    m[i] << (BITS - 1 - i)
                } else {
                    let mut value = dir[i - s] ^ (dir[i - s] >> s);
                    for k in 1..s {
                        if (a >> (s - 1 - k)) & 1 == 1 {
                            value ^= dir[i - k];
                        }
                    }
                    value
                };
            }
            v.push(dir);
        }
        Self {
            v,
            x: vec![0; dim],
            index: 0,
        }
    }

    /// Writes the next point (starting with the origin) into `out`.
    pub fn next_into(&mut self, out: &mut [u32]) {
        out.copy_from_slice(&self.x);
        let c = self.index.trailing_ones() as usize;
        for (x, v) in self.x.iter_mut().zip(&self.v) {
            *x ^= v[c];
        }
        self.index += 1;
    }
}

/// Maps a shifted integer coordinate to the open unit interval.
#[inline]
pub fn to_unit(x: u32, shift: u32) -> f64 {
    ((x ^ shift) as f64 + 0.5) / 4_294_967_296.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_coordinate_stratifies() {
        let dim = MAX_DIM;
        let mut s = Sobol::new(dim);
        let n = 1 << 8;
        let mut counts = vec![vec![0usize; n]; dim];
        let mut buf = vec![0u32; dim];
        for _ in 0..n {
            s.next_into(&mut buf);
            for d in 0..dim {
                counts[d][(buf[d] >> 24) as usize] += 1;
            }
        }
        assert!(counts.iter().all(|c| c.iter().all(|&k| k == 1)));
    }

    #[test]
    fn two_dimensional_projections_stratify() {
        // the first 2^{2k} points of a (t, s)-sequence in base 2 with t = 0
        // for the first two coordinates hit every 2^k x 2^k box once
        let mut s = Sobol::new(2);
        let k = 4;
        let n = 1 << (2 * k);
        let mut seen = vec![false; n];
        let mut buf = [0u32; 2];
        for _ in 0..n {
            s.next_into(&mut buf);
            let cell = ((buf[0] >> (32 - k)) << k | (buf[1] >> (32 - k))) as usize;
            assert!(!seen[cell]);
            seen[cell] = true;
        }
    }

    #[test]
    fn smooth_integral_converges() {
        let dim = 5;
        let mut s = Sobol::new(dim);
        let mut buf = vec![0u32; dim];
        let n = 1 << 14;
        let mut acc = 0.0;
        for _ in 0..n {
            s.next_into(&mut buf);
            acc += buf
                .iter()
                .map(|&x| 2.0 * to_unit(x, 0x9e37_79b9))
                .product::<f64>();
        }
        assert!((acc / n as f64 - 1.0).abs() < 2e-3);
    }
}
